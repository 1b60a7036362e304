"""Point-scatterer forward model for multi-channel sonar pings.

Each receive channel records, at complex baseband,

    e(t) = sum_s sigma_s / (R_tx,s * R_rx,s(t)) * q(t - tau_s(t)) * exp(-2j pi f_c tau_s(t))

where ``tau_s(t)`` is the two-way travel time to a receiver that keeps
moving during reception. The chirp ``q`` is evaluated in closed form at the
exact fractional delay, so the output carries no interpolation error.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.ndimage import gaussian_filter1d
from scipy.signal import detrend

from ._validation import ValidationError, check_int, check_positive
from .geometry import Attitude, BeamSpec, PlatformState, element_positions, in_fov
from .io import Dataset, PingRecord
from .refraction import SedimentModel, travel_time


@dataclass(frozen=True)
class Scatterer:
    position: tuple
    sigma: float = 1.0

    def __post_init__(self):
        if len(self.position) != 3 or not np.all(np.isfinite(self.position)):
            raise ValidationError("scatterer.position", "expected a finite 3-vector")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValidationError("scatterer.sigma", "must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable set of point scatterers plus propagation medium.

    ``sediment`` switches on refracted travel times for scatterers below
    its interface; without it the medium is isovelocity water.
    """

    positions: np.ndarray
    sigmas: np.ndarray
    sound_speed_mps: float = 1500.0
    sediment: SedimentModel = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        sig = np.asarray(self.sigmas, dtype=float).reshape(-1)
        if pos.shape[0] != sig.size:
            raise ValidationError("scene", "one sigma per scatterer required")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(sig)) and np.all(sig >= 0)):
            raise ValidationError("scene", "scatterers must be finite with sigma >= 0")
        check_positive(self.sound_speed_mps, "sound_speed_mps")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "sigmas", sig)

    @classmethod
    def from_scatterers(cls, scatterers, sound_speed_mps=1500.0, sediment=None):
        pos = [s.position for s in scatterers]
        return cls(np.array(pos, float).reshape(-1, 3), np.array([s.sigma for s in scatterers]),
                   sound_speed_mps, sediment)

    @classmethod
    def seafloor(cls, rng, density_per_m2, x_range, y_range, sound_speed_mps=1500.0, z=0.0):
        """Uniformly scattered diffuse field with Rayleigh amplitudes."""
        area = (x_range[1] - x_range[0]) * (y_range[1] - y_range[0])
        n = rng.poisson(density_per_m2 * area)
        pos = np.column_stack([rng.uniform(*x_range, n), rng.uniform(*y_range, n), np.full(n, z)])
        return cls(pos, rng.rayleigh(1.0 / math.sqrt(2.0), n), sound_speed_mps)

    def __len__(self):
        return self.sigmas.size

    def __add__(self, other):
        return Scene(np.vstack([self.positions, other.positions]),
                     np.concatenate([self.sigmas, other.sigmas]),
                     self.sound_speed_mps, self.sediment)

    def subset(self, index):
        return Scene(self.positions[index], self.sigmas[index], self.sound_speed_mps,
                     self.sediment)


@dataclass(frozen=True, eq=False)
class TrajectoryScript:
    """Per-ping navigation truth.

    ``ping_intervals_s[i]`` separates ping i from ping i+1 (the last entry
    is carried along for completeness). ``sway`` and ``heave`` hold the
    injected cross-track and vertical velocity series, if any.
    """

    states: list
    ping_intervals_s: np.ndarray
    sway: np.ndarray = None
    heave: np.ndarray = None
    tx_times_s: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.states:
            raise ValidationError("trajectory", "script must contain at least one ping")
        dt = np.broadcast_to(np.asarray(self.ping_intervals_s, float), (len(self.states),)).copy()
        if np.any(dt <= 0) or not np.all(np.isfinite(dt)):
            raise ValidationError("trajectory", "ping intervals must be positive")
        object.__setattr__(self, "ping_intervals_s", dt)
        if self.tx_times_s is None:
            object.__setattr__(self, "tx_times_s", np.concatenate([[0.0], np.cumsum(dt[:-1])]))
        for name in ("sway", "heave"):
            v = getattr(self, name)
            if v is not None and not np.all(np.isfinite(v)):
                raise ValidationError(f"trajectory.{name}", "perturbations must be finite")

    def __len__(self):
        return len(self.states)

    def concat(self, other, gap_s=None):
        """Append another script; its times continue after this one."""
        gap = self.ping_intervals_s[-1] if gap_s is None else gap_s
        start = self.tx_times_s[-1] + gap
        sway = heave = None
        if self.sway is not None and other.sway is not None:
            sway = np.concatenate([self.sway, other.sway])
            heave = np.concatenate([self.heave, other.heave])
        return TrajectoryScript(list(self.states) + list(other.states),
                                np.concatenate([self.ping_intervals_s, other.ping_intervals_s]),
                                sway, heave,
                                np.concatenate([self.tx_times_s, start + other.tx_times_s]))


def band_limited_walk(rng, n, rms, correlation_pings=10.0):
    """Zero-mean random walk, detrended and smoothed, scaled to ``rms``."""
    if rms == 0 or n < 2:
        return np.zeros(n)
    walk = detrend(np.cumsum(rng.standard_normal(n)))
    walk = gaussian_filter1d(walk, correlation_pings, mode="nearest")
    walk -= walk.mean()
    return walk * (rms / np.sqrt(np.mean(walk ** 2)))


def synth_trajectory(n_pings, speed_mps, ping_interval_s, altitude_m, lever_arms,
                     sway_amplitude_mps=0.0, heave_amplitude_mps=0.0, period_pings=100.0,
                     sway_rms_mps=0.0, heave_rms_mps=0.0, attitude_rms_rad=0.0, seed=0,
                     start_xy=(0.0, 0.0), phase=0.0):
    """Straight survey line with optional sway/heave/attitude perturbations.

    Velocity perturbations are a sinusoid (amplitude, period in pings) plus
    a band-limited random walk of the given RMS. Ping ``i+1`` sits at
    ``p_i + v_i * dt``.
    """
    n = check_int(n_pings, "sim.n_pings", 1)
    rng = np.random.default_rng(seed)
    i = np.arange(n)
    arg = 2 * np.pi * i / period_pings + phase
    vy = sway_amplitude_mps * np.sin(arg) + band_limited_walk(rng, n, sway_rms_mps)
    vz = heave_amplitude_mps * np.sin(arg + 0.5 * np.pi) + band_limited_walk(rng, n, heave_rms_mps)
    att = np.stack([band_limited_walk(rng, n, attitude_rms_rad) for _ in range(3)], axis=1)
    vel = np.column_stack([np.full(n, float(speed_mps)), vy, vz])
    pos = np.empty((n, 3))
    pos[0] = (start_xy[0], start_xy[1], -float(altitude_m))
    for k in range(1, n):
        pos[k] = pos[k - 1] + vel[k - 1] * ping_interval_s
    states = [PlatformState(pos[k], vel[k], Attitude(*att[k]), lever_arms) for k in range(n)]
    return TrajectoryScript(states, np.full(n, float(ping_interval_s)), vy, vz)


@njit(nogil=True, cache=True)
def _echo_kernel(out, tx, rx0, vel, pts, amps, tau_lo, tau_hi, t0, fs, chirp_rate, duration,
                 c, fc, stop_and_hop, z_int, c_s, refract):
    n_ch, n_samp = out.shape
    for j in range(n_ch):
        for s in range(pts.shape[0]):
            a = amps[s, j]
            if a == 0.0:
                continue
            x0, x1, x2 = pts[s, 0], pts[s, 1], pts[s, 2]
            rt = math.sqrt((tx[0] - x0) ** 2 + (tx[1] - x1) ** 2 + (tx[2] - x2) ** 2)
            t_tx = travel_time(tx[0], tx[1], tx[2], x0, x1, x2, z_int, c, c_s) if refract else rt / c
            n_lo = max(0, int(math.floor((tau_lo[s, j] - t0) * fs)) - 1)
            n_hi = min(n_samp - 1, int(math.ceil((tau_hi[s, j] + duration - t0) * fs)) + 1)
            for n in range(n_lo, n_hi + 1):
                t = t0 + n / fs
                tm = 0.0 if stop_and_hop else t
                r0 = rx0[j, 0] + vel[0] * tm
                r1 = rx0[j, 1] + vel[1] * tm
                r2 = rx0[j, 2] + vel[2] * tm
                rr = math.sqrt((r0 - x0) ** 2 + (r1 - x1) ** 2 + (r2 - x2) ** 2)
                if refract:
                    tau = t_tx + travel_time(x0, x1, x2, r0, r1, r2, z_int, c, c_s)
                else:
                    tau = (rt + rr) / c
                u = t - tau
                if u < 0.0 or u >= duration:
                    continue
                uc = u - 0.5 * duration
                ph = math.pi * chirp_rate * uc * uc - 2.0 * math.pi * fc * tau
                g = a / (rt * rr)
                out[j, n] += g * complex(math.cos(ph), math.sin(ph))


def raised_cosine_taper(frame, tan_az, tan_el, sensor, points, elevation_test):
    d = points - sensor
    along = d @ frame[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ua = np.abs(d @ frame[1]) / (tan_az * along)
        w = 0.5 * (1 + np.cos(np.pi * np.clip(ua, 0, 1)))
        if elevation_test:
            ue = np.abs(d @ frame[2]) / (tan_el * along)
            w *= 0.5 * (1 + np.cos(np.pi * np.clip(ue, 0, 1)))
    return np.where(along > 0, w, 0.0)


def simulate_echoes(state, scene, waveform, n_samples, window_start_s, beam,
                    stop_and_hop=False, bistatic=False, elevation_test=True, taper=False):
    """Complex128 echo array ``(channels, samples)`` for one ping.

    Scatterers outside the beam cone (tested exactly as
    :func:`~sasimg.geometry.in_fov` does) contribute nothing.
    """
    n_samples = check_int(n_samples, "sim.n_samples", 1)
    tx, rx0 = element_positions(state, 0.0)
    pts = scene.positions
    n_ch = rx0.shape[0]
    out = np.zeros((n_ch, n_samples), np.complex128)
    if len(scene) == 0:
        return out
    if np.any(np.linalg.norm(pts - tx, axis=1) == 0) or any(
            np.any(np.linalg.norm(pts - r, axis=1) == 0) for r in rx0):
        raise ValidationError("scene", "scatterer coincides with a transducer element")
    frame = beam.ned_frame(state.attitude)
    tan_az, tan_el = beam.half_tangents()
    amps = np.zeros((len(scene), n_ch))
    for j in range(n_ch):
        gate = in_fov(tx, rx0[j], state.attitude, beam, pts, bistatic, elevation_test)
        w = scene.sigmas * gate
        if taper:
            w = w * raised_cosine_taper(frame, tan_az, tan_el, tx, pts, elevation_test)
        amps[:, j] = w
    c = scene.sound_speed_mps
    sed = scene.sediment
    refract = sed is not None
    z_int = sed.interface_z_m if refract else 0.0
    c_s = sed.sediment_speed_mps if refract else c
    # bracket each echo's delay over the receive window so the kernel only
    # visits samples the chirp can reach; refracted times lie in the same bounds
    t_end = window_start_s + n_samples / waveform.sample_rate_hz
    slow = min(c, c_s)
    r_tx = np.linalg.norm(pts - tx, axis=1)[:, None]
    r_rx = np.linalg.norm(pts[:, None, :] - rx0[None], axis=2)
    drift = 0.0 if stop_and_hop else np.linalg.norm(state.velocity) * t_end
    straight = (r_tx + r_rx)
    tau_lo = (straight - drift) / max(c, c_s) - 1e-9
    tau_hi = (straight + drift) / slow + 1e-9
    _echo_kernel(out, tx, rx0, np.asarray(state.velocity, float), pts, amps,
                 np.ascontiguousarray(tau_lo), np.ascontiguousarray(tau_hi),
                 float(window_start_s), float(waveform.sample_rate_hz), waveform.chirp_rate,
                 waveform.duration_s, float(c), waveform.center_frequency_hz,
                 bool(stop_and_hop), float(z_int), float(c_s), refract)
    return out


def simulate_ping(state, scene, waveform, n_samples, window_start_s, beam, ping_index=0,
                  tx_time_s=0.0, dvl_altitude_m=None, **options):
    """Simulate one ping; see :func:`simulate_echoes` for the options."""
    data = simulate_echoes(state, scene, waveform, n_samples, window_start_s, beam, **options)
    if dvl_altitude_m is None:
        dvl_altitude_m = -float(state.position[2])
    return PingRecord(int(ping_index), float(tx_time_s), data.astype(np.complex64),
                      waveform.sample_rate_hz, state, float(dvl_altitude_m), float(window_start_s))


def simulate_survey(script, scene, waveform, beam, n_samples, window_start_s, seed=0,
                    noise=False, snr_db=20.0, dvl_noise_m=0.0, workers=1, **options):
    """Simulate every ping of a trajectory script into a :class:`Dataset`.

    Navigation is recorded from the script. DVL altitude is the true height
    above ``z = 0`` plus optional Gaussian noise. With ``noise`` on, complex
    white Gaussian noise is added at ``snr_db`` relative to the mean echo
    power of the whole survey.
    """
    if not isinstance(beam, BeamSpec):
        raise ValidationError("beam", "a BeamSpec is required")
    rng = np.random.default_rng(seed)

    def one(k):
        return simulate_echoes(script.states[k], scene, waveform, n_samples, window_start_s,
                               beam, **options)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            echoes = list(pool.map(one, range(len(script))))
    else:
        echoes = [one(k) for k in range(len(script))]
    data = np.stack(echoes)
    if noise:
        sig = np.mean(np.abs(data[data != 0]) ** 2) if np.any(data != 0) else 1.0
        sigma = np.sqrt(sig / 10 ** (snr_db / 10) / 2)
        data = data + sigma * (rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape))
    dvl_err = rng.normal(0.0, dvl_noise_m, len(script)) if dvl_noise_m > 0 else np.zeros(len(script))
    pings = []
    for k, state in enumerate(script.states):
        pings.append(PingRecord(k, float(script.tx_times_s[k]), data[k].astype(np.complex64),
                                waveform.sample_rate_hz, state,
                                float(-state.position[2] + dvl_err[k]), float(window_start_s)))
    return Dataset(waveform, scene.sound_speed_mps, pings)
