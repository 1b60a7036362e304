"""Time-domain backprojection driver: per-ping culling, LUTs and integration."""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import resample
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import ValidationError
from ..config import Config, resolve_workers
from ..geometry import BeamSpec, grid_from_config
from ..io import Dataset
from ..preprocess import pulse_compress
from ..products import ComplexImage
from ..refraction import SedimentModel
from .arena import SlabArena
from .culling import BlockMask, cull_blocks, cull_blocks_bistatic
from .kernels import backproject_pixels, sinc_table
from .lut import build_position_lut, lut_size

_TABLE = sinc_table()


@dataclass(frozen=True)
class BackprojectionOptions:
    """Everything the integrator needs besides data and grid."""

    sound_speed_mps: float
    center_frequency_hz: float
    beam: BeamSpec
    upsample: int = 4
    lut_upsample: int = 16
    culling: bool = True
    block_size: int = 5
    spreading_compensation: bool = True
    elevation_test: bool = True
    bistatic: bool = False
    stop_and_hop: bool = False
    sediment: SedimentModel = None
    workers: int = 1

    @classmethod
    def from_config(cls, config, dataset, **changes):
        p = config.processing
        opts = cls(sound_speed_mps=config.sound_speed_mps,
                   center_frequency_hz=dataset.waveform.center_frequency_hz,
                   beam=config.beam_spec(), upsample=p.upsample, lut_upsample=p.lut_upsample,
                   culling=p.culling, block_size=p.block_size_px,
                   spreading_compensation=p.spreading_compensation,
                   elevation_test=config.fov.elevation_test, bistatic=config.fov.bistatic,
                   stop_and_hop=p.stop_and_hop, workers=resolve_workers(config))
        return replace(opts, **changes)


@dataclass
class ReconstructionReport:
    """Per-ping bookkeeping from one reconstruction."""

    kept_fraction: list = field(default_factory=list)
    skipped_delays: list = field(default_factory=list)
    ping_ms: list = field(default_factory=list)
    arena_bytes: int = 0
    arena_allocations: int = 0
    arena_within_budget: bool = True

    @property
    def total_skipped(self):
        return int(sum(self.skipped_delays))


def _declare(arena, n_ch, n_s, grid, opts):
    nbx, nby = grid.block_shape(opts.block_size)
    arena.declare("upsample", n_ch * n_s * opts.upsample * 16)
    arena.declare("lut", lut_size(n_ch, opts.lut_upsample))
    arena.declare("mask", nbx * nby)
    arena.declare("pixels", grid.nx * grid.ny * 8)


def _upsample(ping, factor, out=None):
    data = np.asarray(ping.samples, np.complex128)
    up = resample(data, data.shape[1] * factor, axis=1) if factor > 1 else data
    if out is None:
        return np.ascontiguousarray(up)
    out[...] = up
    return out


def _run_chunks(pool, chunks, args):
    if pool is None or len(chunks) == 1:
        return sum(backproject_pixels(c, *args) for c in chunks)
    return sum(pool.map(lambda c: backproject_pixels(c, *args), chunks))


def backproject_ping(ping, grid, accumulator, opts, mask=None, lut=None, arena=None, pool=None,
                     all_pixels=None):
    """Integrate one pulse-compressed ping into ``accumulator`` in place.

    With culling on, only pixels in kept blocks are visited; every visited
    pixel still passes the exact cone test, so culling never changes values.

    Returns:
        (kept pixel fraction, number of out-of-window delays skipped).
    """
    view = (lambda st, sh, dt: arena.view(st, sh, dt)) if arena is not None else None
    n_ch = ping.n_channels
    m = ping.n_samples * opts.upsample
    series = _upsample(ping, opts.upsample,
                       view("upsample", (n_ch, m), np.complex128) if view else None)
    if lut is None:
        k = 8 * opts.lut_upsample + 1
        lut = build_position_lut(ping, opts.lut_upsample, stop_and_hop=opts.stop_and_hop,
                                 out=view("lut", (n_ch + 1, k, 3), np.float64) if view else None)
    if opts.culling:
        if mask is None:
            cull = cull_blocks_bistatic if opts.bistatic else cull_blocks
            mask = cull(ping, grid, opts.beam, opts.block_size, opts.elevation_test)
            if view:
                keep = view("mask", mask.keep.shape, np.bool_)
                keep[...] = mask.keep
                mask = BlockMask(keep, mask.block_size, mask.grid_shape)
        kept = mask.kept_pixels()
        if view:
            buf = view("pixels", kept.shape, np.int64)
            buf[...] = kept
            kept = buf
    else:
        kept = all_pixels if all_pixels is not None else np.arange(grid.nx * grid.ny)
    sed = opts.sediment
    frame = np.ascontiguousarray(opts.beam.ned_frame(ping.nav.attitude))
    tan_az, tan_el = opts.beam.half_tangents()
    args = (grid.ny, grid.origin[0] + grid.x_start, grid.origin[1] + grid.y_start,
            grid.origin[2] + grid.z, grid.dx, grid.dy, lut.positions, lut.t_start, lut.dt,
            frame, tan_az, tan_el, opts.elevation_test, opts.bistatic, series,
            ping.window_start_s, ping.sample_rate_hz * opts.upsample, _TABLE,
            opts.sound_speed_mps, opts.center_frequency_hz, opts.spreading_compensation,
            sed is not None, sed.interface_z_m if sed else 0.0,
            sed.sediment_speed_mps if sed else opts.sound_speed_mps,
            accumulator.data.reshape(-1), accumulator.hits.reshape(-1))
    n_chunks = max(1, min(opts.workers, kept.size))
    chunks = np.array_split(kept, n_chunks) if kept.size else [kept]
    skipped = _run_chunks(pool, chunks, args)
    return kept.size / (grid.nx * grid.ny), int(skipped)


def _canonical_pings(dataset):
    pings = list(dataset.pings if isinstance(dataset, Dataset) else dataset)
    return sorted(pings, key=lambda p: p.ping_index)


def reconstruct_with_report(dataset, grid, opts, log=None, accumulator=None):
    """Backproject every ping; returns ``(ComplexImage, ReconstructionReport)``.

    Pings are always integrated in ascending ping index, so each pixel's
    sum has a fixed order regardless of input order or worker count.
    """
    pings = _canonical_pings(dataset)
    if not pings:
        raise ValidationError("dataset", "no pings to reconstruct")
    for p in pings:
        if p.n_channels != pings[0].n_channels or p.n_samples != pings[0].n_samples:
            raise ValidationError("dataset", "pings differ in shape")
    if accumulator is None:
        accumulator = ComplexImage.zeros(grid)
    elif accumulator.grid != grid:
        raise ValidationError("accumulator", "accumulator grid differs from the target grid")
    arena = SlabArena()
    _declare(arena, pings[0].n_channels, pings[0].n_samples, grid, opts)
    arena.allocate()
    report = ReconstructionReport()
    all_pixels = None if opts.culling else np.arange(grid.nx * grid.ny)
    pool = ThreadPoolExecutor(opts.workers) if opts.workers > 1 else None
    try:
        for ping in pings:
            t = time.perf_counter()
            frac, skipped = backproject_ping(ping, grid, accumulator, opts, arena=arena,
                                             pool=pool, all_pixels=all_pixels)
            ms = (time.perf_counter() - t) * 1e3
            report.kept_fraction.append(frac)
            report.skipped_delays.append(skipped)
            report.ping_ms.append(ms)
            if log is not None:
                log.event(stage="backproject", ping=ping.ping_index, ms=round(ms, 3),
                          kept=round(frac, 4), skipped=skipped)
    finally:
        if pool is not None:
            pool.shutdown()
    report.arena_bytes = arena.total_bytes
    report.arena_allocations = arena.allocations
    report.arena_within_budget = arena.within_budget()
    return accumulator, report


def reconstruct(dataset, grid=None, config=None, log=None, options=None):
    """Form a complex image from a dataset.

    Uncompressed datasets are pulse-compressed first. ``grid`` defaults to
    the stripmap grid derived from the first and last pings.
    """
    config = config or Config()
    if isinstance(dataset, Dataset) and not dataset.compressed:
        dataset = pulse_compress(dataset, dataset.waveform)
    opts = options or BackprojectionOptions.from_config(config, dataset)
    if grid is None:
        pings = _canonical_pings(dataset)
        grid = grid_from_config(config, pings[0].nav, pings[-1].nav, opts.beam)
    image, _ = reconstruct_with_report(dataset, grid, opts, log)
    return image


class Backprojector(TransformerMixin, BaseEstimator):
    """Dataset -> complex image transformer.

    ``fit`` fixes the imaging grid (from ``grid`` or from the dataset's
    first and last pings); ``transform`` reconstructs.

    Attributes:
        grid_: the imaging grid.
        report_: :class:`ReconstructionReport` from the last transform.
    """

    def __init__(self, config=None, grid=None, workers=None, culling=None):
        self.config = config
        self.grid = grid
        self.workers = workers
        self.culling = culling

    def _options(self, dataset):
        changes = {}
        if self.workers is not None:
            changes["workers"] = self.workers
        if self.culling is not None:
            changes["culling"] = self.culling
        return BackprojectionOptions.from_config(self.config or Config(), dataset, **changes)

    def fit(self, X, y=None):
        opts = self._options(X)
        if self.grid is not None:
            self.grid_ = self.grid
        else:
            pings = _canonical_pings(X)
            self.grid_ = grid_from_config(self.config or Config(), pings[0].nav, pings[-1].nav,
                                              opts.beam)
        return self

    def transform(self, X, log=None):
        check_is_fitted(self, "grid_")
        if isinstance(X, Dataset) and not X.compressed:
            X = pulse_compress(X, X.waveform)
        image, self.report_ = reconstruct_with_report(X, self.grid_, self._options(X), log)
        return image
