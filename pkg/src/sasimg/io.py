"""Dataset serialization, artifact writing, run logs and manifests.

Dataset file layout (all little-endian)::

    b"SASD" | u32 version
    header: f64 sample_rate, u32 channels, u32 samples, u32 pings,
            f64 sound_speed, f64 fc, f64 bandwidth, f64 duration,
            u32 waveform kind, u32 flags (bit 0: pulse compressed)
    per ping: i64 index, f64 tx_time, f64 window_start, f64 dvl_altitude,
              9 x f64 position/velocity/attitude, u32 n_lever_arms,
              n_lever_arms x 3 x f64, u32 channels, u32 samples,
              channels x samples x (f32 re, f32 im)
"""

import datetime
import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import ValidationError
from .geometry import Attitude, ImagingGrid, PlatformState
from .products import ComplexImage, ComplexVolume
from .waveform import WAVEFORM_KINDS, Waveform

MAGIC = b"SASD"
VERSION = 1
_HEADER = struct.Struct("<dIIIddddII")
_PING = struct.Struct("<qddd9dI")
_SHAPE = struct.Struct("<II")
SAMPLE_DTYPE = np.dtype("<c8")
PAYLOAD_DTYPE = np.dtype("<c16")


class DatasetFormatError(ValueError):
    """Malformed, truncated or inconsistent dataset file."""


@dataclass(eq=False)
class PingRecord:
    """One transmission: per-channel complex baseband series plus navigation.

    ``samples`` has shape (channels, samples); sample ``n`` was recorded
    ``window_start_s + n / sample_rate_hz`` seconds after transmit.
    """

    ping_index: int
    tx_time_s: float
    samples: np.ndarray
    sample_rate_hz: float
    nav: PlatformState
    dvl_altitude_m: float = 0.0
    window_start_s: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise ValidationError("ping.samples", f"expected (channels, samples), got {s.shape}")
        if self.sample_rate_hz <= 0:
            raise ValidationError("ping.sample_rate_hz", "must be > 0")
        if s.shape[0] != self.nav.n_channels:
            raise ValidationError("ping.samples",
                                  f"{s.shape[0]} channels but {self.nav.n_channels} receive lever arms")
        self.samples = s

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    def sample_times(self):
        return self.window_start_s + np.arange(self.n_samples) / self.sample_rate_hz

    def with_samples(self, samples):
        return replace(self, samples=samples)

    def with_nav(self, nav):
        return replace(self, nav=nav)


@dataclass(eq=False)
class Dataset:
    """Header plus an ordered, nonempty list of pings."""

    waveform: Waveform
    sound_speed_mps: float
    pings: list = field(default_factory=list)
    compressed: bool = False

    def __post_init__(self):
        if not self.pings:
            raise ValidationError("dataset", "dataset must contain at least one ping")
        first = self.pings[0]
        for prev, p in zip(self.pings, self.pings[1:]):
            if p.ping_index <= prev.ping_index:
                raise ValidationError("dataset", "ping indices must be strictly increasing")
        for p in self.pings:
            if p.samples.shape != first.samples.shape:
                raise ValidationError("dataset", "all pings must share one (channels, samples) shape")
            if p.sample_rate_hz != self.waveform.sample_rate_hz:
                raise ValidationError("dataset", "ping sample rate differs from the header")

    @property
    def sample_rate_hz(self):
        return self.waveform.sample_rate_hz

    @property
    def n_channels(self):
        return self.pings[0].n_channels

    @property
    def n_samples(self):
        return self.pings[0].n_samples

    def __len__(self):
        return len(self.pings)

    def __iter__(self):
        return iter(self.pings)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return replace(self, pings=self.pings[idx])
        return self.pings[idx]

    def with_pings(self, pings, compressed=None):
        return replace(self, pings=list(pings),
                       compressed=self.compressed if compressed is None else compressed)

    def navigation(self):
        return [p.nav for p in self.pings]


def _ping_bytes(p):
    nav = p.nav
    att = nav.attitude
    head = _PING.pack(p.ping_index, p.tx_time_s, p.window_start_s, p.dvl_altitude_m,
                      *nav.position, *nav.velocity, att.roll, att.pitch, att.yaw,
                      nav.lever_arms.shape[0])
    arms = np.ascontiguousarray(nav.lever_arms, dtype="<f8").tobytes()
    data = np.ascontiguousarray(p.samples, dtype=SAMPLE_DTYPE)
    return head + arms + _SHAPE.pack(*data.shape) + data.tobytes()


def dataset_bytes(dataset):
    wf = dataset.waveform
    parts = [MAGIC, struct.pack("<I", VERSION),
             _HEADER.pack(wf.sample_rate_hz, dataset.n_channels, dataset.n_samples,
                          len(dataset), dataset.sound_speed_mps, wf.center_frequency_hz,
                          wf.bandwidth_hz, wf.duration_s, WAVEFORM_KINDS.index(wf.kind),
                          int(bool(dataset.compressed)))]
    parts.extend(_ping_bytes(p) for p in dataset.pings)
    return b"".join(parts)


def write_dataset(dataset, path):
    """Write ``dataset`` in the canonical binary format; returns its sha256."""
    blob = dataset_bytes(dataset)
    with open(path, "wb") as fh:
        fh.write(blob)
    return hashlib.sha256(blob).hexdigest()


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.blob):
            raise DatasetFormatError(f"truncated file while reading {what}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st, what):
        return st.unpack(self.take(st.size, what))


def parse_dataset(blob):
    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise DatasetFormatError("bad magic bytes (not a SASD dataset)")
    (version,) = struct.unpack("<I", r.take(4, "version"))
    if version != VERSION:
        raise DatasetFormatError(f"version mismatch: file {version}, reader {VERSION}")
    (fs, n_ch, n_samp, n_pings, c, fc, bw, dur, kind, flags) = r.unpack(_HEADER, "header")
    if kind >= len(WAVEFORM_KINDS):
        raise DatasetFormatError(f"unknown waveform kind {kind}")
    waveform = Waveform(fc, bw, dur, fs, WAVEFORM_KINDS[kind])
    pings = []
    for i in range(n_pings):
        vals = r.unpack(_PING, f"ping {i} header")
        idx, tx_time, t0, dvl = vals[:4]
        pos, vel, att = vals[4:7], vals[7:10], vals[10:13]
        n_arms = vals[13]
        arms = np.frombuffer(r.take(24 * n_arms, f"ping {i} lever arms"), "<f8").reshape(n_arms, 3)
        ch, ns = r.unpack(_SHAPE, f"ping {i} shape")
        if ch != n_ch:
            raise DatasetFormatError(
                f"ping {i}: header channel_count={n_ch} but {ch} channel(s) stored")
        if ns != n_samp:
            raise DatasetFormatError(f"ping {i}: header samples={n_samp} but {ns} stored")
        if n_arms != ch + 1:
            raise DatasetFormatError(f"ping {i}: {n_arms} lever arms for {ch} channels")
        data = np.frombuffer(r.take(SAMPLE_DTYPE.itemsize * ch * ns, f"ping {i} samples"),
                             SAMPLE_DTYPE).reshape(ch, ns).astype(np.complex64)
        nav = PlatformState(np.array(pos), np.array(vel), Attitude(*att), arms.copy())
        pings.append(PingRecord(int(idx), tx_time, data, fs, nav, dvl, t0))
    if r.pos != len(blob):
        raise DatasetFormatError(f"{len(blob) - r.pos} trailing bytes after last ping")
    return Dataset(waveform, c, pings, bool(flags & 1))


def read_dataset(path):
    """Read a dataset file, validating magic, version and per-ping shapes."""
    with open(path, "rb") as fh:
        return parse_dataset(fh.read())


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _utc_now():
    return datetime.datetime.now(datetime.timezone.utc)


class RunLog:
    """Append-only processing log, one ``key=value`` event per line.

    Each line starts with an ISO-8601 UTC timestamp; timestamps never go
    backwards within a run even if the wall clock does.
    """

    def __init__(self, path=None):
        self.path = path
        self.events = []
        self._last = None

    def event(self, **fields):
        now = _utc_now()
        if self._last is not None and now < self._last:
            now = self._last
        self._last = now
        body = " ".join(f"{k}={_fmt_field(v)}" for k, v in fields.items())
        line = f"{now.isoformat()} {body}"
        self.events.append(line)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        return line

    def stage(self, name, seconds, **fields):
        return self.event(stage=name, **fields, ms=round(seconds * 1e3, 3))


def _fmt_field(v):
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v).replace(" ", "_")


class Stopwatch:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def _meta_lines(meta):
    return "".join(f"{k}={v}\n" for k, v in meta.items())


def read_sidecar(path):
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                k, v = line.split("=", 1)
                meta[k] = v
    return meta


def write_artifacts(product, out_dir, name="image", metadata=None, log=None):
    """Write an image or volume as a flat complex128 payload plus sidecar.

    The payload is row-major little-endian (re, im) pairs: ``(nx, ny)`` for
    an image, ``(layers, nx, ny)`` for a volume. The sidecar is UTF-8
    ``key=value`` text carrying grid origin, spacing, dimensions and (for
    volumes) layer depths.

    Returns:
        Manifest dict mapping each written file name to its sha256.
    """
    if not os.path.isdir(out_dir):
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            raise ValidationError("output", f"cannot create {out_dir}: {exc}")
    if not os.access(out_dir, os.W_OK):
        raise ValidationError("output", f"output directory not writable: {out_dir}")
    grid = product.grid
    if isinstance(product, ComplexVolume):
        data = product.data
        if data.shape[1:] != tuple(grid.shape):
            raise ValidationError("output", "volume layers do not match grid dimensions")
        extra = {"layers": len(product.layers),
                 "layer_depths_m": json.dumps(list(product.depths))}
    else:
        data = product.data
        if data.shape != tuple(grid.shape):
            raise ValidationError("output", "image dimensions do not match grid metadata")
        extra = {"layers": 0}
    meta = {"format": "complex128", "endianness": "little", "order": "row-major",
            "shape": ",".join(str(s) for s in data.shape)}
    meta.update({k: json.dumps(v) for k, v in grid.metadata().items()})
    meta.update(extra)
    meta.update(metadata or {})
    payload = np.ascontiguousarray(data, dtype=PAYLOAD_DTYPE).tobytes()
    bin_path = os.path.join(out_dir, f"{name}.bin")
    meta_path = os.path.join(out_dir, f"{name}.meta")
    with open(bin_path, "wb") as fh:
        fh.write(payload)
    with open(meta_path, "w", encoding="utf-8") as fh:
        fh.write(_meta_lines(meta))
    files = {os.path.basename(bin_path): hashlib.sha256(payload).hexdigest(),
             os.path.basename(meta_path): file_digest(meta_path)}
    if log is not None:
        log.event(stage="write", files=",".join(sorted(files)), bytes=len(payload))
        if log.path is not None:
            files[os.path.basename(log.path)] = None
    return {"files": files}


def read_artifact(out_dir, name="image"):
    """Reload a product written by :func:`write_artifacts`."""
    meta = read_sidecar(os.path.join(out_dir, f"{name}.meta"))
    shape = tuple(int(s) for s in meta["shape"].split(","))
    with open(os.path.join(out_dir, f"{name}.bin"), "rb") as fh:
        data = np.frombuffer(fh.read(), PAYLOAD_DTYPE)
    if data.size != int(np.prod(shape)):
        raise ValidationError("artifact", "payload size does not match sidecar shape")
    data = data.reshape(shape).astype(np.complex128)
    grid_meta = {k: json.loads(meta[k]) for k in
                 ("origin", "x_start", "y_start", "dx", "dy", "nx", "ny", "z")}
    if int(meta.get("layers", 0)):
        depths = json.loads(meta["layer_depths_m"])
        grid = ImagingGrid.from_metadata(grid_meta, depths)
        layers = [ComplexImage(grid, data[k].copy(), np.zeros(grid.shape, np.int32))
                  for k in range(shape[0])]
        return ComplexVolume(layers, depths), meta
    grid = ImagingGrid.from_metadata(grid_meta)
    return ComplexImage(grid, data, np.zeros(grid.shape, np.int32)), meta


@dataclass
class RunManifest:
    """Everything needed to re-execute and verify a run."""

    command: str
    config_hash: str
    tool_version: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    stage_timings_ms: dict = field(default_factory=dict)
    created: str = ""

    def to_dict(self):
        return {"command": self.command, "config_hash": self.config_hash,
                "tool_version": self.tool_version, "inputs": self.inputs,
                "outputs": self.outputs, "seeds": self.seeds,
                "stage_timings_ms": self.stage_timings_ms, "created": self.created}

    def reproducible_view(self):
        """The manifest minus wall-clock dependent fields."""
        d = self.to_dict()
        d.pop("created")
        d.pop("stage_timings_ms")
        return d

    def write(self, path):
        if not self.created:
            self.created = _utc_now().isoformat()
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))
