"""Uniformly sampled element-position tables with linear interpolation."""

from dataclasses import dataclass

import numpy as np

from .._validation import ValidationError
from ..geometry import rotate_point


@dataclass(frozen=True, eq=False)
class PositionLUT:
    """Element positions sampled every ``dt`` seconds from ``t_start``.

    ``positions`` is ``(elements, knots, 3)``; element 0 is the transmitter.
    Queries outside the table extrapolate along the end segments.
    """

    t_start: float
    dt: float
    positions: np.ndarray
    upsample: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("lut", "knot spacing must be > 0")
        if self.positions.ndim != 3 or self.positions.shape[1] < 2:
            raise ValidationError("lut", "need (elements, knots >= 2, 3) positions")

    @property
    def n_knots(self):
        return self.positions.shape[1]

    @property
    def t_stop(self):
        return self.t_start + (self.n_knots - 1) * self.dt

    def query(self, t):
        """Interpolated ``(elements, 3)`` positions at time ``t``."""
        u = (t - self.t_start) / self.dt
        k = min(max(int(np.floor(u)), 0), self.n_knots - 2)
        f = u - k
        return self.positions[:, k] * (1.0 - f) + self.positions[:, k + 1] * f

    @classmethod
    def from_function(cls, fn, t_start, t_stop, n_knots, upsample=1):
        """Tabulate ``fn(t) -> (elements, 3)`` on ``n_knots`` uniform knots."""
        if not t_stop > t_start:
            raise ValidationError("lut", "zero-duration window")
        ts = np.linspace(t_start, t_stop, n_knots)
        table = np.stack([np.asarray(fn(t), float).reshape(-1, 3) for t in ts], axis=1)
        return cls(float(t_start), float(ts[1] - ts[0]), table, upsample)


def lut_time_span(ping):
    """Transmit instant through the end of the receive window."""
    return 0.0, ping.window_start_s + ping.n_samples / ping.sample_rate_hz


def build_position_lut(ping, upsample=16, base_knots=8, stop_and_hop=False, out=None):
    """Tabulate tx/rx positions over the ping's receive window.

    The table has ``base_knots * upsample + 1`` knots spanning transmit to
    the last recorded sample. Receivers follow the first-order kinematic
    path, so linear interpolation is exact up to rounding for constant
    velocity; ``upsample`` controls the knot density for anything else.

    Args:
        out: optional preallocated ``(elements, knots, 3)`` buffer.
    """
    if upsample < 1:
        raise ValidationError("processing.lut_upsample", "must be >= 1")
    t0, t1 = lut_time_span(ping)
    if not t1 > t0:
        raise ValidationError("lut", "zero-duration receive window")
    n = base_knots * upsample + 1
    ts = np.linspace(t0, t1, n)
    table = out if out is not None else np.empty((ping.n_channels + 1, n, 3))
    nav = ping.nav
    # same arithmetic as element_positions, broadcast over knots
    fixed = nav.position + rotate_point(nav.attitude, nav.lever_arms)
    table[0] = fixed[0]
    if stop_and_hop:
        table[1:] = fixed[1:, None, :]
    else:
        table[1:] = fixed[1:, None, :] + nav.velocity[None, None, :] * ts[None, :, None]
    return PositionLUT(t0, float(ts[1] - ts[0]), table, upsample)


def lut_size(n_channels, upsample, base_knots=8):
    return (n_channels + 1) * (base_knots * upsample + 1) * 3 * 8
