"""Two-medium travel time across a flat water/sediment interface.

The fastest path crosses the interface at the point that makes the travel
time stationary (Snell's law). The crossing is found through the ray
parameter, whose defining equation is monotone and convex.
"""

import math
from dataclasses import dataclass

from numba import njit

from ._validation import check_positive


@njit(nogil=True, cache=True, inline="always")
def _offset_residual(p, a, b, d, c_w, c_s):
    """``a tan(theta_w) + b tan(theta_s) - d`` and its derivative in ``p``."""
    f = -d
    fp = 0.0
    if a > 0.0:
        sw = p * c_w
        kw = math.sqrt(1.0 - sw * sw)
        f += a * sw / kw
        fp += a * c_w / (kw * kw * kw)
    if b > 0.0:
        ss = p * c_s
        ks = math.sqrt(1.0 - ss * ss)
        f += b * ss / ks
        fp += b * c_s / (ks * ks * ks)
    return f, fp


@njit(nogil=True, cache=True)
def ray_parameter(a, b, d, c_w, c_s):
    """Snell ray parameter ``sin(theta) / c`` of the path joining the two points.

    Solves ``a tan(theta_w) + b tan(theta_s) = d``. The left side is
    increasing and convex in the ray parameter, so Newton's method started
    where the residual is positive descends monotonically onto the root.
    When the faster medium has zero thickness and the residual stays
    negative, the path is critical and the limiting ray parameter is returned.
    """
    if d == 0.0 or a + b == 0.0:
        return 0.0
    p_max = 1.0 / max(c_w, c_s)
    fast_thickness = a if c_w >= c_s else b
    if c_w == c_s:
        fast_thickness = a + b
    lo = 0.0
    p = d / (a * c_w + b * c_s)
    if p >= p_max:
        if fast_thickness == 0.0:
            f, _ = _offset_residual(p_max, a, b, d, c_w, c_s)
            if f <= 0.0:
                return p_max
            p = p_max
        else:
            hi = p_max
            p = 0.5 * (lo + hi)
            for _ in range(1100):
                f, _ = _offset_residual(p, a, b, d, c_w, c_s)
                if f > 0.0:
                    break
                lo = p
                p = 0.5 * (p + hi)
    for _ in range(100):
        f, fp = _offset_residual(p, a, b, d, c_w, c_s)
        if f <= 0.0:
            return p
        nxt = p - f / fp
        if nxt < lo:
            nxt = lo
        if not nxt < p * (1.0 - 1e-16):
            return nxt
        p = nxt
    return p


@njit(nogil=True, cache=True)
def crossing_offset(a, b, d, c_w, c_s):
    """Horizontal offset of the crossing from the water point.

    Args:
        a: height of the water point above the interface (>= 0).
        b: depth of the sediment point below the interface (>= 0).
        d: horizontal distance between the two points (>= 0).
    """
    p = ray_parameter(a, b, d, c_w, c_s)
    if a == 0.0 and p < 1.0 / max(c_w, c_s):
        return 0.0
    sw = p * c_w
    ss = p * c_s
    kw = math.sqrt(max(1.0 - sw * sw, 0.0))
    ks = math.sqrt(max(1.0 - ss * ss, 0.0))
    # take the offset from the leg that is less sensitive to p
    if ks > 0.0 and (a == 0.0 or kw == 0.0 or b * c_s * kw ** 3 < a * c_w * ks ** 3):
        s = d - b * ss / ks
    elif kw > 0.0:
        s = a * sw / kw
    else:
        s = d
    return min(max(s, 0.0), d)


@njit(nogil=True, cache=True)
def travel_time(p0, p1, p2, q0, q1, q2, z_int, c_w, c_s):
    """One-way travel time between points p and q (NED, z down).

    Points at or above ``z_int`` are in water; points below it are in
    sediment. Same-side pairs travel straight at that medium's speed.
    """
    dx = q0 - p0
    dy = q1 - p1
    dz = q2 - p2
    p_wet = p2 <= z_int
    q_wet = q2 <= z_int
    if p_wet and q_wet:
        return math.sqrt(dx * dx + dy * dy + dz * dz) / c_w
    if not p_wet and not q_wet:
        return math.sqrt(dx * dx + dy * dy + dz * dz) / c_s
    if p_wet:
        a = z_int - p2
        b = q2 - z_int
    else:
        a = z_int - q2
        b = p2 - z_int
    d = math.sqrt(dx * dx + dy * dy)
    s = crossing_offset(a, b, d, c_w, c_s)
    return math.sqrt(s * s + a * a) / c_w + math.sqrt((d - s) * (d - s) + b * b) / c_s


@dataclass(frozen=True)
class SedimentModel:
    """Flat interface at ``z = interface_z_m`` between water and sediment."""

    water_speed_mps: float
    sediment_speed_mps: float
    interface_z_m: float = 0.0

    def __post_init__(self):
        check_positive(self.water_speed_mps, "sound_speed_mps")
        check_positive(self.sediment_speed_mps, "volume.sediment_speed_mps")

    def travel_time(self, src, dst):
        return travel_time(src[0], src[1], src[2], dst[0], dst[1], dst[2], self.interface_z_m,
                           self.water_speed_mps, self.sediment_speed_mps)
