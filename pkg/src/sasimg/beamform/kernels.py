"""Compiled per-pixel backprojection kernel and its interpolation table."""

import math

import numpy as np
from numba import njit

from ..refraction import travel_time

N_TAPS = 8
HALF = N_TAPS // 2
N_FRAC_BINS = 1024


def sinc_table(n_bins=N_FRAC_BINS, n_taps=N_TAPS):
    """Blackman-windowed sinc taps for fractional offsets ``k / n_bins``.

    Row ``k`` interpolates at ``i0 + k / n_bins`` from samples
    ``i0 - n_taps/2 + 1 .. i0 + n_taps/2``. Rows are normalized to unit DC gain.
    """
    half = n_taps // 2
    frac = np.arange(n_bins)[:, None] / n_bins
    offs = np.arange(-half + 1, half + 1)[None, :] - frac
    win = 0.42 + 0.5 * np.cos(np.pi * offs / half) + 0.08 * np.cos(2 * np.pi * offs / half)
    taps = np.sinc(offs) * win
    return taps / taps.sum(axis=1, keepdims=True)


@njit(nogil=True, cache=True, inline="always")
def _in_cone(s0, s1, s2, x0, x1, x2, frame, tan_az, tan_el, elevation_test):
    d0, d1, d2 = x0 - s0, x1 - s1, x2 - s2
    along = d0 * frame[0, 0] + d1 * frame[0, 1] + d2 * frame[0, 2]
    if not along > 0.0:
        return False
    az = d0 * frame[1, 0] + d1 * frame[1, 1] + d2 * frame[1, 2]
    if abs(az) > tan_az * along:
        return False
    if elevation_test:
        el = d0 * frame[2, 0] + d1 * frame[2, 1] + d2 * frame[2, 2]
        if abs(el) > tan_el * along:
            return False
    return True


@njit(nogil=True, cache=True, inline="always")
def _lut_query(lut, e, t, t0, dt):
    u = (t - t0) / dt
    k = int(math.floor(u))
    n = lut.shape[1]
    if k < 0:
        k = 0
    elif k > n - 2:
        k = n - 2
    f = u - k
    g = 1.0 - f
    return (lut[e, k, 0] * g + lut[e, k + 1, 0] * f,
            lut[e, k, 1] * g + lut[e, k + 1, 1] * f,
            lut[e, k, 2] * g + lut[e, k + 1, 2] * f)


@njit(nogil=True, cache=True)
def backproject_pixels(pix, ny, gx0, gy0, gz, dx, dy, lut, lut_t0, lut_dt, frame, tan_az,
                       tan_el, elevation_test, bistatic, series, t0, fs_up, table, c, fc,
                       spreading, refract, z_int, c_s, out, hits):
    """Integrate one ping into the listed pixels.

    Every listed pixel is re-tested against the exact beam cone, so the
    result does not depend on which superset of pixels is passed in.

    Returns:
        Number of (pixel, channel) delays that fell outside the series.
    """
    n_ch = series.shape[0]
    m_len = series.shape[1]
    n_bins = table.shape[0]
    tx0, tx1, tx2 = _lut_query(lut, 0, 0.0, lut_t0, lut_dt)
    skipped = 0
    two_pi_fc = 2.0 * math.pi * fc
    for q in range(pix.shape[0]):
        p = pix[q]
        i = p // ny
        j = p - i * ny
        x0 = gx0 + i * dx
        x1 = gy0 + j * dy
        x2 = gz
        if not _in_cone(tx0, tx1, tx2, x0, x1, x2, frame, tan_az, tan_el, elevation_test):
            continue
        rt = math.sqrt((x0 - tx0) ** 2 + (x1 - tx1) ** 2 + (x2 - tx2) ** 2)
        if refract:
            t_tx = travel_time(tx0, tx1, tx2, x0, x1, x2, z_int, c, c_s)
        else:
            t_tx = rt / c
        acc = 0j
        used = False
        for ch in range(n_ch):
            r0, r1, r2 = _lut_query(lut, ch + 1, 0.0, lut_t0, lut_dt)
            if bistatic and not _in_cone(r0, r1, r2, x0, x1, x2, frame, tan_az, tan_el,
                                         elevation_test):
                continue
            # stop-and-hop delay, then one fixed-point update with the moving receiver
            if refract:
                tau = t_tx + travel_time(x0, x1, x2, r0, r1, r2, z_int, c, c_s)
            else:
                tau = t_tx + math.sqrt((x0 - r0) ** 2 + (x1 - r1) ** 2 + (x2 - r2) ** 2) / c
            r0, r1, r2 = _lut_query(lut, ch + 1, tau, lut_t0, lut_dt)
            rr = math.sqrt((x0 - r0) ** 2 + (x1 - r1) ** 2 + (x2 - r2) ** 2)
            if refract:
                tau = t_tx + travel_time(x0, x1, x2, r0, r1, r2, z_int, c, c_s)
            else:
                tau = t_tx + rr / c
            m = (tau - t0) * fs_up
            i0 = int(math.floor(m))
            b = int((m - i0) * n_bins + 0.5)
            if b == n_bins:
                i0 += 1
                b = 0
            lo = i0 - HALF + 1
            if lo < 0 or i0 + HALF >= m_len:
                skipped += 1
                continue
            v = 0j
            for k in range(N_TAPS):
                v += table[b, k] * series[ch, lo + k]
            ph = two_pi_fc * tau
            v *= complex(math.cos(ph), math.sin(ph))
            if spreading:
                v *= rt * rr
            acc += v
            used = True
        if used:
            out[p] += acc
            hits[p] += 1
    return skipped
