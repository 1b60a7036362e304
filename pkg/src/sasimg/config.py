"""Processing configuration: flat ``dotted.key = value`` text files.

Values are JSON literals (numbers, booleans, quoted strings, lists); a bare
word is read as a string. ``#`` starts a comment. Every key has a default,
so an empty file is a valid configuration.
"""

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

from ._validation import ValidationError


class ConfigError(ValidationError):
    """Parse or validation failure, carrying the offending key and line."""

    def __init__(self, key, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(key, message)
        self.line = line


@dataclass(frozen=True)
class GridSection:
    spacing_x_m: float = 0.01
    spacing_y_m: float = 0.01
    y_near_m: float = 6.0
    y_far_m: float = 10.0
    extent_x_m: float = 0.0
    z_m: float = 0.0
    nx: int = 0
    ny: int = 0
    center_x_m: float = 0.0
    center_y_m: float = 0.0


@dataclass(frozen=True)
class BeamSection:
    azimuth_fwhm_rad: float = 0.35
    elevation_fwhm_rad: float = 1.2
    depression_rad: float = 0.55
    look: str = "starboard"


@dataclass(frozen=True)
class FovSection:
    elevation_test: bool = True
    bistatic: bool = False


@dataclass(frozen=True)
class ProcessingSection:
    pulse_compression: bool = True
    whitening: bool = False
    tvg: bool = False
    culling: bool = True
    block_size_px: int = 5
    spreading_compensation: bool = True
    upsample: int = 4
    lut_upsample: int = 16
    stop_and_hop: bool = False
    motion_correction: bool = True
    debug_products: bool = False


@dataclass(frozen=True)
class PreprocessSection:
    gamma: float = 0.1
    alpha: float = 0.0


@dataclass(frozen=True)
class MotionSection:
    lambda1: float = 1.0e6
    lambda2: float = 1.0e4
    loss: str = "square"
    residual_scale_s: float = 1.0e-7
    window_samples: int = 64
    window_overlap: float = 0.5
    min_correlation: float = 0.5
    weight_by_correlation: bool = True
    t_min_s: float = 0.0
    t_max_s: float = 0.0
    max_lag_samples: int = 6
    pair_tolerance_m: float = 0.005


@dataclass(frozen=True)
class SolverSection:
    max_iterations: int = 100
    tolerance: float = 1.0e-10


@dataclass(frozen=True)
class DrcSection:
    brightness: float = 0.3
    clip_percentile: float = 100.0
    ignore_zeros: bool = True
    format: str = "png"


@dataclass(frozen=True)
class VolumeSection:
    depths_m: tuple = (0.05, 0.07, 0.09, 0.11, 0.13, 0.15, 0.17)
    interface_z_m: float = 0.0
    sediment_speed_mps: float = 1700.0


@dataclass(frozen=True)
class ComputeSection:
    workers: int = 1


@dataclass(frozen=True)
class SimSection:
    scenario: str = "point"
    n_pings: int = 200
    seed: int = 0
    channels: int = 1
    element_spacing_m: float = 0.04
    ping_spacing_m: float = 0.02
    speed_mps: float = 1.0
    altitude_m: float = 5.0
    n_samples: int = 512
    window_start_s: float = 0.006
    sway_amplitude_mps: float = 0.0
    heave_amplitude_mps: float = 0.0
    motion_period_pings: float = 100.0
    sway_rms_mps: float = 0.0
    heave_rms_mps: float = 0.0
    scatterers: tuple = ((2.0, 8.0, 0.0, 1.0),)
    aperture_lines: int = 1
    line_spacing_m: float = 0.03
    rx_offset_y_m: float = 0.0
    seafloor_density_per_m2: float = 0.0
    seafloor_y_min_m: float = 2.0
    seafloor_y_max_m: float = 14.0
    noise: bool = False
    snr_db: float = 20.0
    taper: bool = False
    dvl_noise_m: float = 0.0
    center_frequency_hz: float = 100.0e3
    bandwidth_hz: float = 20.0e3
    duration_s: float = 1.0e-3
    sample_rate_hz: float = 40.0e3


@dataclass(frozen=True)
class BenchSection:
    repetitions: int = 3
    worker_counts: tuple = (1, 2)
    per_worker_gflops: float = 1.0
    realtime_budget_s: float = 0.0


@dataclass(frozen=True)
class PathsSection:
    dataset: str = ""
    output: str = ""


SECTIONS = {
    "grid": GridSection,
    "beam": BeamSection,
    "fov": FovSection,
    "processing": ProcessingSection,
    "preprocess": PreprocessSection,
    "motion": MotionSection,
    "solver": SolverSection,
    "drc": DrcSection,
    "volume": VolumeSection,
    "compute": ComputeSection,
    "sim": SimSection,
    "bench": BenchSection,
    "paths": PathsSection,
}


@dataclass(frozen=True)
class Config:
    sound_speed_mps: float = 1500.0
    grid: GridSection = field(default_factory=GridSection)
    beam: BeamSection = field(default_factory=BeamSection)
    fov: FovSection = field(default_factory=FovSection)
    processing: ProcessingSection = field(default_factory=ProcessingSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    motion: MotionSection = field(default_factory=MotionSection)
    solver: SolverSection = field(default_factory=SolverSection)
    drc: DrcSection = field(default_factory=DrcSection)
    volume: VolumeSection = field(default_factory=VolumeSection)
    compute: ComputeSection = field(default_factory=ComputeSection)
    sim: SimSection = field(default_factory=SimSection)
    bench: BenchSection = field(default_factory=BenchSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def __post_init__(self):
        validate(self)

    def with_overrides(self, overrides):
        """Return a copy with ``{"section.key": value}`` applied."""
        flat = to_flat(self)
        for key, value in overrides.items():
            if key not in flat:
                raise ConfigError(key, "unknown configuration key")
            flat[key] = _coerce(key, value, _field_type(key))
        return from_flat(flat)

    def dumps(self):
        return dumps(self)

    def digest(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def beam_spec(self):
        from .geometry import BeamSpec
        b = self.beam
        if b.look == "down":
            return BeamSpec.downward(b.azimuth_fwhm_rad, b.elevation_fwhm_rad)
        return BeamSpec.side_looking(b.azimuth_fwhm_rad, b.elevation_fwhm_rad,
                                     b.depression_rad, b.look)


def _field_type(key):
    if "." not in key:
        return {f.name: f.type for f in dataclasses.fields(Config)}[key]
    section, name = key.split(".", 1)
    return {f.name: f.type for f in dataclasses.fields(SECTIONS[section])}[name]


def _coerce(key, value, typ):
    if typ in (float, "float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if typ in (int, "int"):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if typ in (bool, "bool"):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if typ in (str, "str"):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if typ in (tuple, "tuple"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, f"expected a list, got {value!r}")
        return _to_tuple(value)
    raise ConfigError(key, f"unsupported field type {typ!r}")


def _to_tuple(value):
    if isinstance(value, (list, tuple)):
        return tuple(_to_tuple(v) for v in value)
    return value


def to_flat(config):
    flat = {"sound_speed_mps": config.sound_speed_mps}
    for name in SECTIONS:
        section = getattr(config, name)
        for f in dataclasses.fields(section):
            flat[f"{name}.{f.name}"] = getattr(section, f.name)
    return flat


def from_flat(flat):
    kwargs = {}
    sections = {name: {} for name in SECTIONS}
    for key, value in flat.items():
        if "." in key:
            section, name = key.split(".", 1)
            sections[section][name] = value
        else:
            kwargs[key] = value
    for name, cls in SECTIONS.items():
        kwargs[name] = cls(**sections[name])
    return Config(**kwargs)


def _format(value):
    if isinstance(value, tuple):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            raise ValueError("non-finite values cannot be serialized")
        return repr(value)
    return json.dumps(value)


def dumps(config):
    lines = [f"{k} = {_format(v)}" for k, v in sorted(to_flat(config).items())]
    return "\n".join(lines) + "\n"


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(config))


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if text and all(ch.isalnum() or ch in "_-./" for ch in text):
            return text
        raise


def loads(text, overrides=None):
    defaults = to_flat(Config())
    flat = dict(defaults)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip() if not raw.lstrip().startswith("#") else ""
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(None, f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value_text = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(key, "unknown configuration key", lineno)
        if key in seen:
            raise ConfigError(key, "duplicate key", lineno)
        seen.add(key)
        try:
            value = _parse_value(value_text)
        except json.JSONDecodeError as exc:
            raise ConfigError(key, f"cannot parse value {value_text!r}: {exc.msg}", lineno)
        flat[key] = _coerce(key, value, _field_type(key))
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise ConfigError(key, "unknown configuration key")
        flat[key] = _coerce(key, value, _field_type(key))
    return from_flat(flat)


def load_config(path, overrides=None):
    """Read and validate a configuration file."""
    if not os.path.exists(path):
        raise ConfigError("path", f"configuration file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), overrides)


def parse_override(text):
    """Parse a ``key=value`` command-line override."""
    if "=" not in text:
        raise ConfigError(None, f"override must be key=value, got {text!r}")
    key, value = (s.strip() for s in text.split("=", 1))
    try:
        return key, _parse_value(value)
    except json.JSONDecodeError as exc:
        raise ConfigError(key, f"cannot parse value {value!r}: {exc.msg}")


def validate(config):
    """Check every physical invariant; raise ConfigError naming the key."""

    def positive(key, value, strict=True):
        if not math.isfinite(value) or (value <= 0 if strict else value < 0):
            raise ConfigError(key, f"must be {'>' if strict else '>='} 0, got {value!r}")

    positive("sound_speed_mps", config.sound_speed_mps)
    g = config.grid
    positive("grid.spacing_x_m", g.spacing_x_m)
    positive("grid.spacing_y_m", g.spacing_y_m)
    positive("grid.extent_x_m", g.extent_x_m, strict=False)
    if g.y_far_m < g.y_near_m:
        raise ConfigError("grid.y_far_m", "must be >= grid.y_near_m")
    if g.nx < 0 or g.ny < 0 or (g.nx > 0) != (g.ny > 0):
        raise ConfigError("grid.nx", "grid.nx and grid.ny must both be 0 or both be > 0")
    b = config.beam
    for key in ("azimuth_fwhm_rad", "elevation_fwhm_rad"):
        v = getattr(b, key)
        if not (0 < v < math.pi):
            raise ConfigError(f"beam.{key}", f"FWHM must lie in (0, pi), got {v!r}")
    if b.look not in ("starboard", "port", "down"):
        raise ConfigError("beam.look", f"must be starboard, port or down, got {b.look!r}")
    p = config.processing
    if p.block_size_px < 1:
        raise ConfigError("processing.block_size_px", "must be >= 1")
    if p.upsample < 1:
        raise ConfigError("processing.upsample", "must be >= 1")
    if p.lut_upsample < 1:
        raise ConfigError("processing.lut_upsample", "must be >= 1")
    positive("preprocess.gamma", config.preprocess.gamma, strict=False)
    positive("preprocess.alpha", config.preprocess.alpha, strict=False)
    m = config.motion
    positive("motion.lambda1", m.lambda1, strict=False)
    positive("motion.lambda2", m.lambda2, strict=False)
    positive("motion.residual_scale_s", m.residual_scale_s)
    if m.loss not in ("square", "huber"):
        raise ConfigError("motion.loss", f"must be square or huber, got {m.loss!r}")
    if m.window_samples < 32:
        raise ConfigError("motion.window_samples", "must be >= 32")
    if not (0 <= m.window_overlap < 1):
        raise ConfigError("motion.window_overlap", "must lie in [0, 1)")
    if not (0 <= m.min_correlation < 1):
        raise ConfigError("motion.min_correlation", "must lie in [0, 1)")
    if config.solver.max_iterations < 1:
        raise ConfigError("solver.max_iterations", "must be >= 1")
    positive("solver.tolerance", config.solver.tolerance)
    d = config.drc
    if not (0 < d.brightness < 1):
        raise ConfigError("drc.brightness", f"brightness must lie in (0,1), got {d.brightness!r}")
    if not (0 < d.clip_percentile <= 100):
        raise ConfigError("drc.clip_percentile", "must lie in (0, 100]")
    if d.format not in ("png", "pgm"):
        raise ConfigError("drc.format", f"must be png or pgm, got {d.format!r}")
    v = config.volume
    positive("volume.sediment_speed_mps", v.sediment_speed_mps)
    if len(v.depths_m) == 0 or any(b2 <= a for a, b2 in zip(v.depths_m, v.depths_m[1:])):
        raise ConfigError("volume.depths_m", "must be nonempty and strictly increasing")
    if config.compute.workers < 0:
        raise ConfigError("compute.workers", "must be >= 0 (0 = auto)")
    s = config.sim
    if s.n_pings < 1:
        raise ConfigError("sim.n_pings", "must be >= 1")
    if s.aperture_lines < 1:
        raise ConfigError("sim.aperture_lines", "must be >= 1")
    if s.channels < 1:
        raise ConfigError("sim.channels", "must be >= 1")
    if s.bandwidth_hz >= s.sample_rate_hz:
        raise ConfigError("sim.bandwidth_hz", "must be below sim.sample_rate_hz")
    if config.bench.repetitions < 1:
        raise ConfigError("bench.repetitions", "must be >= 1")


def resolve_workers(config):
    w = config.compute.workers
    if w > 0:
        return w
    if hasattr(os, "sched_getaffinity"):
        return max(1, len(os.sched_getaffinity(0)))
    return os.cpu_count() or 1
