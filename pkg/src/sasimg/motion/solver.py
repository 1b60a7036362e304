"""Joint sway/heave estimation from overlapped phase-center time delays.

For ping pair (i, i+1) and a receiver pair whose phase centers overlap,
the residual at reference time ``t``

    g = [(|tx1 - ps| + |ps - rx1(t)|) - (|tx2 - ps| + |ps - rx2(t)|)] / c + delta

vanishes when the candidate velocities explain the measured delay
``delta`` of ping i+1 relative to ping i. Ping i is anchored at its
navigation x, y and its DVL depth; ping i+1 follows from ping i's
candidate velocity, so each residual touches only ``v_i`` and ``v_{i+1}``.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import ValidationError
from ..config import Config
from ..geometry import in_fov, rotate_point
from ..io import Dataset
from ..preprocess import pulse_compress
from .delay import DelayMeasurement, estimate_delays, unwrap_to
from .lm import LMOptions, lm_minimize
from .losses import integrate_depth, loss_dpc, loss_dvl, loss_smooth, robust_residual


def dpc_channel_pairs(lever_arms, advance_m, tolerance_m):
    """Receiver pairs (a on ping i, b on ping i+1) with overlapping phase centers.

    A channel's phase center is the midpoint of the transmitter and its
    receiver; the pair overlaps when ``pc_a = pc_b + advance``.
    """
    arms = np.asarray(lever_arms, float)
    pc = 0.5 * (arms[0, 0] + arms[1:, 0])
    pairs = []
    for b, pb in enumerate(pc):
        a = int(np.argmin(np.abs(pc - (pb + advance_m))))
        if abs(pc[a] - (pb + advance_m)) <= tolerance_m:
            pairs.append((a, b))
    return pairs


@dataclass(frozen=True, eq=False)
class ResidualContext:
    """Fixed geometry of every delay measurement.

    Arrays are indexed by measurement. ``arm_*`` are rotated lever arms,
    ``anchor`` is ping i's position, ``x_next`` ping i+1's navigation x,
    ``vx`` the surge of pings i and i+1, ``ps`` the seafloor point.
    """

    n_pings: int
    pair: np.ndarray
    t: np.ndarray
    dt: np.ndarray
    anchor: np.ndarray
    x_next: np.ndarray
    vx: np.ndarray
    arm_tx1: np.ndarray
    arm_rx1: np.ndarray
    arm_tx2: np.ndarray
    arm_rx2: np.ndarray
    ps: np.ndarray
    sound_speed: float

    def geometry(self, v_y, v_z):
        i = self.pair
        v1 = np.column_stack([self.vx[:, 0], v_y[i], v_z[i]])
        v2 = np.column_stack([self.vx[:, 1], v_y[i + 1], v_z[i + 1]])
        p1 = self.anchor
        p2 = np.column_stack([self.x_next, p1[:, 1] + v_y[i] * self.dt,
                              p1[:, 2] + v_z[i] * self.dt])
        t = self.t[:, None]
        return (p1 + self.arm_tx1, p1 + v1 * t + self.arm_rx1,
                p2 + self.arm_tx2, p2 + v2 * t + self.arm_rx2)

    def path_difference(self, v_y, v_z):
        """``g - delta``: ping i path minus ping i+1 path, in seconds."""
        tx1, rx1, tx2, rx2 = self.geometry(v_y, v_z)
        n = np.linalg.norm
        ps = self.ps
        return (n(tx1 - ps, axis=1) + n(rx1 - ps, axis=1)
                - n(tx2 - ps, axis=1) - n(rx2 - ps, axis=1)) / self.sound_speed

    def residuals(self, v_y, v_z, delta):
        return self.path_difference(v_y, v_z) + delta

    def jacobian(self, v_y, v_z):
        """Sparse ``d g / d [v_y, v_z]`` with four nonzeros per column pair."""
        tx1, rx1, tx2, rx2 = self.geometry(v_y, v_z)

        def unit(q):
            d = q - self.ps
            return d / np.linalg.norm(d, axis=1, keepdims=True)

        t = self.t[:, None]
        dt = self.dt[:, None]
        d_i = (t * unit(rx1) - dt * unit(tx2) - dt * unit(rx2)) / self.sound_speed
        d_next = -t * unit(rx2) / self.sound_speed
        m = self.pair.size
        rows = np.tile(np.arange(m), 4)
        n = self.n_pings
        cols = np.concatenate([self.pair, self.pair + 1, n + self.pair, n + self.pair + 1])
        vals = np.concatenate([d_i[:, 1], d_next[:, 1], d_i[:, 2], d_next[:, 2]])
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, 2 * n))


def residual_g(ctx, index, v_y, v_z, delta):
    """Residual of a single measurement ``index`` for full velocity series."""
    sub = replace(ctx, **{k: getattr(ctx, k)[index:index + 1] for k in
                          ("pair", "t", "dt", "anchor", "x_next", "vx", "arm_tx1", "arm_rx1",
                           "arm_tx2", "arm_rx2", "ps")})
    return float(sub.residuals(np.asarray(v_y, float), np.asarray(v_z, float), delta)[0])


@dataclass
class MotionProblem:
    """Measurements plus regularization for one survey."""

    ctx: ResidualContext
    measurements: list
    delta: np.ndarray
    weights: np.ndarray
    z_dvl: np.ndarray
    dt: np.ndarray
    lambda1: float
    lambda2: float
    loss: str = "square"
    scale: float = 1e-7

    @property
    def n_pings(self):
        return self.ctx.n_pings

    def split(self, x):
        n = self.n_pings
        return x[:n], x[n:]

    def breakdown(self, x):
        v_y, v_z = self.split(x)
        g = self.ctx.residuals(v_y, v_z, self.delta)
        dpc = loss_dpc(g, self.weights, self.loss, self.scale)
        smooth = loss_smooth(v_y, v_z)
        dvl = loss_dvl(v_z, self.z_dvl, self.z_dvl[0], self.dt)
        total = dpc + self.lambda1 * smooth + self.lambda2 * dvl
        return {"dpc": dpc, "smooth": smooth, "dvl": dvl, "total": total}

    def _d2(self):
        n = self.n_pings
        return sp.diags([np.ones(n - 2), -2 * np.ones(n - 2), np.ones(n - 2)], [0, 1, 2],
                        shape=(max(n - 2, 0), n))

    def _integrator(self):
        n = self.n_pings
        dt = np.broadcast_to(self.dt, (n,))
        return sp.csr_matrix(np.tril(np.tile(dt, (n, 1)), -1))

    def residual_vector(self, x):
        v_y, v_z = self.split(x)
        g = self.ctx.residuals(v_y, v_z, self.delta) / self.scale
        r_dpc, _ = robust_residual(g, self.weights, self.loss)
        s1 = np.sqrt(self.lambda1)
        s2 = np.sqrt(self.lambda2)
        d2 = self._d2()
        depth = integrate_depth(v_z, self.z_dvl[0], self.dt)
        return np.concatenate([r_dpc, s1 * (d2 @ v_y), s1 * (d2 @ v_z),
                               s2 * (depth - self.z_dvl)])

    def jacobian(self, x):
        v_y, v_z = self.split(x)
        g = self.ctx.residuals(v_y, v_z, self.delta) / self.scale
        _, dr = robust_residual(g, self.weights, self.loss)
        jg = sp.diags(dr / self.scale) @ self.ctx.jacobian(v_y, v_z)
        n = self.n_pings
        d2 = self._d2()
        zero = sp.csr_matrix(d2.shape)
        s1 = np.sqrt(self.lambda1)
        s2 = np.sqrt(self.lambda2)
        zn = sp.csr_matrix((n, n))
        return sp.vstack([jg, sp.hstack([s1 * d2, zero]), sp.hstack([zero, s1 * d2]),
                          sp.hstack([zn, s2 * self._integrator()])]).tocsr()

    def solve(self, x0, options):
        return lm_minimize(self.residual_vector, x0, self.jacobian, options)


@dataclass
class MotionSolution:
    """Per-ping sway/heave velocities and the track they integrate to."""

    v_y: np.ndarray
    v_z: np.ndarray
    positions: np.ndarray
    loss: dict
    iterations: int
    converged: bool
    n_measurements: int
    stage_costs: list = field(default_factory=list)
    measurements: list = field(default_factory=list)


def _seafloor_point(pc, look, t_ref, c, seafloor_z):
    """Where a boresight-azimuth ray at slant range ``c t / 2`` meets the seafloor."""
    r = 0.5 * c * t_ref
    h = seafloor_z - pc[:, 2]
    ground = np.sqrt(np.maximum(r * r - h * h, 0.0))
    ok = (r > h) & (h > 0)
    ps = np.column_stack([pc[:, 0] + ground * look[:, 0], pc[:, 1] + ground * look[:, 1],
                          np.full(len(pc), seafloor_z)])
    return ps, ok


def measure_delays(dataset, config):
    """Delay measurements for every overlapped channel pair of every ping pair.

    Returns:
        List of :class:`DelayMeasurement` (including low-correlation ones).
    """
    m = config.motion
    fs = dataset.sample_rate_hz
    fc = dataset.waveform.center_frequency_hz
    w = m.window_samples
    hop = max(1, int(round(w * (1.0 - m.window_overlap))))
    n = dataset.n_samples
    starts = np.arange(0, n - w + 1, hop)
    t_ref = dataset.pings[0].window_start_s + (starts + 0.5 * w) / fs
    sel = np.ones(starts.size, bool)
    if m.t_min_s > 0:
        sel &= t_ref >= m.t_min_s
    if m.t_max_s > 0:
        sel &= t_ref <= m.t_max_s
    starts, t_ref = starts[sel], t_ref[sel]
    out = []
    for i in range(len(dataset) - 1):
        pa, pb = dataset.pings[i], dataset.pings[i + 1]
        advance = pb.nav.position[0] - pa.nav.position[0]
        for a, b in dpc_channel_pairs(pa.nav.lever_arms, advance, m.pair_tolerance_m):
            wa = sliding_window_view(pa.samples[a], w)[starts]
            wb = sliding_window_view(pb.samples[b], w)[starts]
            tc, tf, tp, rho = estimate_delays(wa, wb, fs, fc, m.max_lag_samples)
            for k in range(starts.size):
                if np.isfinite(tc[k]):
                    out.append(DelayMeasurement(i, float(t_ref[k]), float(tc[k]), float(tf[k]),
                                                float(rho[k]), float(tp[k]), a, b))
    return out


def build_context(dataset, measurements, sound_speed, seafloor_z=0.0, beam=None):
    """Freeze per-measurement geometry at the navigation/DVL anchors."""
    pings = dataset.pings
    n = len(pings)
    beam = beam or Config().beam_spec()
    anchors = np.array([[p.nav.position[0], p.nav.position[1], seafloor_z - p.dvl_altitude_m]
                        for p in pings])
    arms = [rotate_point(p.nav.attitude, p.nav.lever_arms) for p in pings]
    looks = []
    for p in pings:
        ub = rotate_point(p.nav.attitude, beam.boresight)
        hxy = np.array([ub[0], ub[1]])
        looks.append(hxy / np.linalg.norm(hxy))
    looks = np.array(looks)
    times = np.array([p.tx_time_s for p in pings])
    dts = np.diff(times) if n > 1 else np.array([])
    i = np.array([ms.pair for ms in measurements], int)
    a = np.array([ms.channel_a for ms in measurements], int)
    b = np.array([ms.channel_b for ms in measurements], int)
    t = np.array([ms.t_ref for ms in measurements])
    arm_tx1 = np.array([arms[k][0] for k in i]).reshape(-1, 3)
    arm_rx1 = np.array([arms[k][1 + c] for k, c in zip(i, a)]).reshape(-1, 3)
    arm_tx2 = np.array([arms[k + 1][0] for k in i]).reshape(-1, 3)
    arm_rx2 = np.array([arms[k + 1][1 + c] for k, c in zip(i, b)]).reshape(-1, 3)
    anchor = anchors[i].reshape(-1, 3)
    vx = np.array([[pings[k].nav.velocity[0], pings[k + 1].nav.velocity[0]] for k in i]).reshape(-1, 2)
    # phase center of ping i's receiving pair at the reference time
    pc = anchor + 0.5 * (arm_tx1 + arm_rx1) + 0.5 * np.column_stack(
        [vx[:, 0], np.zeros(len(i)), np.zeros(len(i))]) * t[:, None]
    ps, ok = _seafloor_point(pc, looks[i].reshape(-1, 2), t, sound_speed, seafloor_z)
    # a seafloor point outside the beam means the window holds no seafloor echo
    for k in np.flatnonzero(ok):
        nav = pings[i[k]].nav
        ok[k] = in_fov(anchor[k] + arm_tx1[k], anchor[k] + arm_rx1[k], nav.attitude, beam, ps[k])
    ctx = ResidualContext(n, i, t, dts[i] if len(i) else t, anchor,
                          np.array([pings[k + 1].nav.position[0] for k in i]), vx,
                          arm_tx1, arm_rx1, arm_tx2, arm_rx2, ps, float(sound_speed))
    return ctx, ok


def _subset(ctx, keep):
    fields = ("pair", "t", "dt", "anchor", "x_next", "vx", "arm_tx1", "arm_rx1", "arm_tx2",
              "arm_rx2", "ps")
    return replace(ctx, **{k: getattr(ctx, k)[keep] for k in fields})


def integrate_positions(dataset, v_y, v_z, seafloor_z=0.0):
    """Ping positions: x from navigation, y/z integrated from the velocities.

    Ping 0 starts at its navigation y and its DVL depth.
    """
    pings = dataset.pings
    times = np.array([p.tx_time_s for p in pings])
    dt = np.diff(times)
    pos = np.empty((len(pings), 3))
    pos[:, 0] = [p.nav.position[0] for p in pings]
    pos[0, 1] = pings[0].nav.position[1]
    pos[0, 2] = seafloor_z - pings[0].dvl_altitude_m
    pos[1:, 1] = pos[0, 1] + np.cumsum(v_y[:-1] * dt)
    pos[1:, 2] = pos[0, 2] + np.cumsum(v_z[:-1] * dt)
    return pos


def solve_motion(dataset, config=None, log=None):
    """Two-stage regularized fit of per-ping sway and heave velocities.

    Stage 1 fits the coarse (envelope) delays. Each phase delay is then
    moved onto the carrier-period branch closest to the stage-1 prediction
    and the fit is repeated from the stage-1 solution.

    Raises:
        ValidationError: fewer than two pings, no overlapping receiver
            pairs, or no measurement reaches ``motion.min_correlation``.
    """
    config = config or Config()
    if len(dataset) < 2:
        raise ValidationError("dataset", "motion estimation needs at least two pings")
    if not dataset.compressed and config.processing.pulse_compression:
        dataset = pulse_compress(dataset, dataset.waveform)
    m = config.motion
    all_meas = measure_delays(dataset, config)
    if not all_meas:
        raise ValidationError("motion.pair_tolerance_m",
                              "no receiver pair overlaps between consecutive pings; disable "
                              "processing.motion_correction to pass navigation through")
    good = [ms for ms in all_meas if ms.rho >= m.min_correlation]
    if not good:
        raise ValidationError("motion.min_correlation",
                              "insufficient coherence: no delay measurement reaches the "
                              "correlation threshold; disable processing.motion_correction "
                              "to pass navigation through")
    ctx, ok = build_context(dataset, good, config.sound_speed_mps, config.grid.z_m,
                            config.beam_spec())
    keep = np.flatnonzero(ok)
    if keep.size == 0:
        raise ValidationError("motion", "no measurement maps to a seafloor point")
    ctx = _subset(ctx, keep)
    good = [good[k] for k in keep]
    n = len(dataset)
    rho = np.array([ms.rho for ms in good])
    weights = rho ** 2 if m.weight_by_correlation else np.ones_like(rho)
    times = np.array([p.tx_time_s for p in dataset.pings])
    dt = np.append(np.diff(times), np.diff(times)[-1])
    z_dvl = config.grid.z_m - np.array([p.dvl_altitude_m for p in dataset.pings])
    problem = MotionProblem(ctx, good, np.array([ms.t_coarse for ms in good]), weights, z_dvl,
                            dt, m.lambda1, m.lambda2, m.loss, m.residual_scale_s)
    opts = LMOptions(max_iterations=config.solver.max_iterations,
                     gtol=config.solver.tolerance, xtol=config.solver.tolerance)
    stage1 = problem.solve(np.zeros(2 * n), opts)
    v_y1, v_z1 = problem.split(stage1.x)
    predicted = -ctx.path_difference(v_y1, v_z1)
    period = 1.0 / dataset.waveform.center_frequency_hz
    fine = unwrap_to(np.array([ms.t_phase for ms in good]), predicted, period)
    problem.delta = fine
    stage2 = problem.solve(stage1.x, opts)
    v_y, v_z = problem.split(stage2.x)
    breakdown = problem.breakdown(stage2.x)
    if log is not None:
        for stage, res in (("motion_stage1", stage1), ("motion_stage2", stage2)):
            for it, cost in enumerate(res.cost_history):
                log.event(stage=stage, iteration=it, cost=cost)
    unwrapped = [replace(ms, t_fine=float(f)) for ms, f in zip(good, fine)]
    return MotionSolution(v_y, v_z, integrate_positions(dataset, v_y, v_z, config.grid.z_m),
                          breakdown, stage1.iterations + stage2.iterations,
                          bool(stage1.converged and stage2.converged), len(good),
                          [stage1.cost_history, stage2.cost_history], unwrapped)


def apply_motion(dataset, solution):
    """Dataset copy whose navigation carries the solved track and velocities."""
    pings = []
    for k, p in enumerate(dataset.pings):
        vel = np.array([p.nav.velocity[0], solution.v_y[k], solution.v_z[k]])
        pings.append(p.with_nav(p.nav.replace(position=solution.positions[k], velocity=vel)))
    return dataset.with_pings(pings)


def nominal_navigation(dataset):
    """Straight-line navigation: sway/heave removed, depth held at ping 0's."""
    p0 = dataset.pings[0].nav.position
    pings = []
    for p in dataset.pings:
        pos = np.array([p.nav.position[0], p0[1], p0[2]])
        vel = np.array([p.nav.velocity[0], 0.0, 0.0])
        pings.append(p.with_nav(p.nav.replace(position=pos, velocity=vel)))
    return dataset.with_pings(pings)


class MotionEstimator(TransformerMixin, BaseEstimator):
    """Estimate sway/heave on ``fit``; write corrected navigation on ``transform``.

    Attributes:
        solution_: :class:`MotionSolution`.
        velocities_: ``(pings, 2)`` array of (v_y, v_z).
    """

    def __init__(self, config=None):
        self.config = config

    def fit(self, X, y=None):
        if not isinstance(X, Dataset):
            raise ValidationError("X", "MotionEstimator expects a Dataset")
        self.solution_ = solve_motion(X, self.config)
        self.velocities_ = np.column_stack([self.solution_.v_y, self.solution_.v_z])
        return self

    def transform(self, X):
        check_is_fitted(self, "solution_")
        if len(X) != len(self.solution_.v_y):
            raise ValidationError("X", "dataset length differs from the fitted survey")
        return apply_motion(X, self.solution_)
