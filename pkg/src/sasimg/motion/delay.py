"""Sub-sample time delay between two complex baseband windows."""

from dataclasses import dataclass

import numpy as np

from .._validation import ValidationError


@dataclass(frozen=True)
class DelayMeasurement:
    """Delay of window b relative to window a.

    ``t_coarse`` comes from the correlation magnitude, ``t_fine`` from its
    phase (ambiguous by whole carrier periods), ``rho`` is the normalized
    peak correlation.
    """

    pair: int
    t_ref: float
    t_coarse: float
    t_fine: float
    rho: float
    t_phase: float = 0.0
    channel_a: int = 0
    channel_b: int = 0


def correlate_lags(a, b, max_lag):
    """``C[l] = sum_n b[n] conj(a[n - l])`` for ``l = -max_lag .. max_lag``."""
    n = a.size
    out = np.empty(2 * max_lag + 1, np.complex128)
    for k, lag in enumerate(range(-max_lag, max_lag + 1)):
        if lag >= 0:
            out[k] = np.vdot(a[:n - lag], b[lag:])
        else:
            out[k] = np.vdot(a[-lag:], b[:n + lag])
    return out


def parabolic_vertex(y_m, y_0, y_p):
    """Offset in (-0.5, 0.5] of the vertex of the parabola through 3 points."""
    denom = y_m - 2.0 * y_0 + y_p
    if denom == 0:
        return 0.0
    return float(np.clip(0.5 * (y_m - y_p) / denom, -0.5, 0.5))


def quadratic_interp(c_m, c_0, c_p, u):
    """Evaluate the quadratic through (-1, c_m), (0, c_0), (1, c_p) at ``u``."""
    return c_0 + 0.5 * u * (c_p - c_m) + 0.5 * u * u * (c_p - 2.0 * c_0 + c_m)


def unwrap_to(t_phase, reference, period):
    """Phase delay moved onto the carrier-period branch nearest ``reference``."""
    return t_phase + period * np.round((reference - t_phase) / period)


def estimate_delays(a, b, sample_rate_hz, center_frequency_hz, max_lag=6):
    """Vectorized :func:`estimate_delay` over rows of ``(windows, samples)`` arrays.

    Returns:
        (t_coarse, t_fine, t_phase, rho) arrays; rows with zero energy get
        NaN delays and ``rho = 0``.
    """
    a = np.asarray(a, np.complex128)
    b = np.asarray(b, np.complex128)
    n = a.shape[1]
    max_lag = int(min(max_lag, n // 2))
    lags = range(-max_lag, max_lag + 1)
    c = np.stack([np.einsum("ij,ij->i", a[:, :n - l].conj(), b[:, l:]) if l >= 0 else
                  np.einsum("ij,ij->i", a[:, -l:].conj(), b[:, :n + l]) for l in lags], axis=1)
    ea = np.einsum("ij,ij->i", a.conj(), a).real
    eb = np.einsum("ij,ij->i", b.conj(), b).real
    mag = np.abs(c)
    k = np.clip(np.argmax(mag, axis=1), 1, c.shape[1] - 2)
    rows = np.arange(c.shape[0])
    ym, y0, yp = mag[rows, k - 1], mag[rows, k], mag[rows, k + 1]
    denom = ym - 2.0 * y0 + yp
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(denom != 0, 0.5 * (ym - yp) / denom, 0.0)
    u = np.clip(np.nan_to_num(u), -0.5, 0.5)
    t_coarse = (k - max_lag + u) / sample_rate_hz
    c_pk = quadratic_interp(c[rows, k - 1], c[rows, k], c[rows, k + 1], u)
    t_phase = -np.angle(c_pk) / (2 * np.pi * center_frequency_hz)
    t_fine = unwrap_to(t_phase, t_coarse, 1.0 / center_frequency_hz)
    energy = np.sqrt(ea * eb)
    ok = energy > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(ok, np.minimum(np.abs(c_pk) / energy, 1.0), 0.0)
    nan = np.where(ok, 1.0, np.nan)
    return t_coarse * nan, t_fine * nan, t_phase * nan, rho


def estimate_delay(a, b, sample_rate_hz, center_frequency_hz, max_lag=6, pair=0, t_ref=0.0):
    """Coarse and phase-refined delay of ``b`` relative to ``a``.

    The coarse delay is the parabolic vertex of ``|C|`` around its integer
    peak; the phase of ``C`` interpolated to that vertex gives the delay
    modulo one carrier period, which is placed on the branch nearest the
    coarse estimate.
    """
    a = np.asarray(a, np.complex128)
    b = np.asarray(b, np.complex128)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("window", "windows must be 1-D and equal length")
    if a.size < 32:
        raise ValidationError("motion.window_samples", "windows need at least 32 samples")
    ea = np.vdot(a, a).real
    eb = np.vdot(b, b).real
    if ea == 0 or eb == 0:
        raise ValidationError("window", "zero-energy window")
    max_lag = int(min(max_lag, a.size // 2))
    c = correlate_lags(a, b, max_lag)
    mag = np.abs(c)
    k = int(np.argmax(mag))
    k = min(max(k, 1), c.size - 2)
    u = parabolic_vertex(mag[k - 1], mag[k], mag[k + 1])
    t_coarse = (k - max_lag + u) / sample_rate_hz
    c_pk = quadratic_interp(c[k - 1], c[k], c[k + 1], u)
    period = 1.0 / center_frequency_hz
    t_phase = -np.angle(c_pk) / (2 * np.pi * center_frequency_hz)
    t_fine = unwrap_to(t_phase, t_coarse, period)
    rho = float(min(abs(c_pk) / np.sqrt(ea * eb), 1.0))
    return DelayMeasurement(pair, t_ref, float(t_coarse), float(t_fine), rho, float(t_phase))
