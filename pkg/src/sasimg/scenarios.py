"""Canned survey geometries used by the CLI, tests and benchmarks."""

import numpy as np

from .config import Config
from .geometry import ImagingGrid
from .refraction import SedimentModel
from .simulator import Scene, Scatterer, simulate_survey, synth_trajectory
from .waveform import Waveform


def waveform_from_config(config):
    s = config.sim
    return Waveform(s.center_frequency_hz, s.bandwidth_hz, s.duration_s, s.sample_rate_hz)


def linear_array(channels, spacing_m, rx_offset_y_m=0.0):
    """Transmitter at the body origin, receivers trailing along -x."""
    arms = np.zeros((channels + 1, 3))
    arms[1:, 0] = -spacing_m * np.arange(channels)
    arms[1:, 1] = rx_offset_y_m
    return arms


def trajectory_from_config(config):
    """Single survey line, or a raster of parallel lines for 2-D apertures."""
    s = config.sim
    arms = linear_array(s.channels, s.element_spacing_m, s.rx_offset_y_m)
    dt = s.ping_spacing_m / s.speed_mps
    script = None
    for line in range(s.aperture_lines):
        part = synth_trajectory(
            s.n_pings, s.speed_mps, dt, s.altitude_m, arms,
            sway_amplitude_mps=s.sway_amplitude_mps, heave_amplitude_mps=s.heave_amplitude_mps,
            period_pings=s.motion_period_pings, sway_rms_mps=s.sway_rms_mps,
            heave_rms_mps=s.heave_rms_mps, seed=s.seed + line,
            start_xy=(0.0, line * s.line_spacing_m))
        script = part if script is None else script.concat(part)
    return script


def scene_from_config(config, script=None):
    """Listed point scatterers, plus a diffuse seafloor when density > 0."""
    s = config.sim
    sediment = None
    if s.scenario == "buried":
        v = config.volume
        sediment = SedimentModel(config.sound_speed_mps, v.sediment_speed_mps, v.interface_z_m)
    points = [Scatterer(tuple(p[:3]), p[3] if len(p) > 3 else 1.0) for p in s.scatterers]
    scene = Scene.from_scatterers(points, config.sound_speed_mps, sediment)
    if s.seafloor_density_per_m2 > 0:
        xs = np.array([st.position[0] for st in script.states]) if script else np.array([0.0])
        rng = np.random.default_rng(s.seed + 1000)
        floor = Scene.seafloor(rng, s.seafloor_density_per_m2,
                               (xs.min() - 4.0, xs.max() + 4.0),
                               (s.seafloor_y_min_m, s.seafloor_y_max_m), config.sound_speed_mps)
        scene = scene + floor
    return scene


def simulate_from_config(config, workers=1):
    """Simulate the survey described by the ``sim`` section."""
    s = config.sim
    script = trajectory_from_config(config)
    scene = scene_from_config(config, script)
    return simulate_survey(script, scene, waveform_from_config(config), config.beam_spec(),
                           s.n_samples, s.window_start_s, seed=s.seed, noise=s.noise,
                           snr_db=s.snr_db, dvl_noise_m=s.dvl_noise_m, workers=workers,
                           elevation_test=config.fov.elevation_test, bistatic=config.fov.bistatic,
                           taper=s.taper, stop_and_hop=config.processing.stop_and_hop)


def point_target_config(**sim):
    """Single-channel stripmap over one seafloor point target.

    200 pings at 2 cm spacing pass a target 8 m to starboard from 5 m
    altitude; the target sits mid-track so it gets its full aperture.
    """
    base = {"sim.scenario": "point", "sim.n_pings": 200, "sim.channels": 1,
            "sim.ping_spacing_m": 0.02, "sim.speed_mps": 1.0, "sim.altitude_m": 5.0,
            "sim.scatterers": [[2.0, 8.0, 0.0, 1.0]], "sim.n_samples": 512,
            "sim.window_start_s": 0.006}
    base.update({f"sim.{k}" if "." not in k else k: v for k, v in sim.items()})
    return Config().with_overrides(base)


def centered_grid(center, n, spacing, z=0.0):
    """Square ``n x n`` grid centered on ``center`` (x, y)."""
    half = (n - 1) / 2 * spacing
    return ImagingGrid(np.array([center[0], center[1], 0.0]), -half, -half, spacing, spacing,
                       n, n, z)


def along_track_line(center, half_length, spacing, y=None, z=0.0):
    """One-pixel-wide along-track grid through ``center``."""
    n = int(round(2 * half_length / spacing)) + 1
    yy = center[1] if y is None else y
    return ImagingGrid(np.array([center[0], yy, 0.0]), -half_length, 0.0, spacing, spacing,
                       n, 1, z)


def theoretical_along_track_resolution(wavelength_m, azimuth_fwhm, off_boresight_rad):
    """-3 dB along-track width for a beam-limited monostatic aperture.

    The tangent-form cone admits along-track look angles up to
    ``atan(cos(e) * tan(theta / 2))`` for a target ``e`` radians off
    boresight in the cross-track plane; a uniform wavenumber aperture of
    that half-width gives a sinc with -3 dB width ``0.886 * lambda / (4 sin psi)``.
    """
    psi = np.arctan(np.cos(off_boresight_rad) * np.tan(0.5 * azimuth_fwhm))
    return 0.886 * wavelength_m / (4.0 * np.sin(psi))


def minus3db_width(profile, spacing):
    """Width of the -3 dB (half power) region around the profile peak."""
    p = np.abs(np.asarray(profile)) ** 2
    k = int(np.argmax(p))
    half = p[k] / 2

    def crossing(step):
        i = k
        while 0 <= i + step < p.size and p[i + step] > half:
            i += step
        j = i + step
        if not 0 <= j < p.size:
            raise ValueError("profile does not fall to -3 dB inside the window")
        return i + step * (p[i] - half) / (p[i] - p[j])

    return (crossing(1) - crossing(-1)) * spacing
