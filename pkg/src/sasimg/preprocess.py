"""Pulse compression, spectral whitening and time-varying gain.

Batch operations accept a :class:`~sasimg.io.Dataset`, a list of
:class:`~sasimg.io.PingRecord` or a complex array shaped
``(pings, channels, samples)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import windows
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_positive
from .io import Dataset, PingRecord


@dataclass(frozen=True, eq=False)
class GainCurve:
    """Per-bin gain in the time or frequency domain.

    ``values`` are linear; ``quantity`` says whether they scale power or
    amplitude. Frequency-domain curves use numpy FFT bin order.
    """

    values: np.ndarray
    domain: str = "time"
    quantity: str = "power"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.domain not in ("time", "frequency"):
            raise ValidationError("gain.domain", f"must be time or frequency, got {self.domain!r}")
        if self.quantity not in ("power", "amplitude"):
            raise ValidationError("gain.quantity", "must be power or amplitude")
        if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValidationError("gain.values", "gain must be a finite nonnegative 1-D array")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def amplitude(self):
        return np.sqrt(self.values) if self.quantity == "power" else self.values

    def power(self):
        return self.values if self.quantity == "power" else self.values ** 2

    def inverse(self):
        """Reciprocal curve; zero bins stay zero."""
        v = self.values
        inv = np.divide(1.0, v, out=np.zeros_like(v), where=v > 0)
        return GainCurve(inv, self.domain, self.quantity)

    def attenuation_db(self):
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.power())


def _stack(batch):
    if isinstance(batch, Dataset):
        batch = batch.pings
    if isinstance(batch, PingRecord):
        batch = [batch]
    if isinstance(batch, (list, tuple)):
        if not batch:
            raise ValidationError("batch", "batch is empty")
        return np.stack([np.asarray(p.samples if isinstance(p, PingRecord) else p) for p in batch])
    arr = np.asarray(batch)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] == 0:
        raise ValidationError("batch", f"expected (pings, channels, samples), got {arr.shape}")
    return arr


def _rebuild(batch, data, compressed=None):
    """Put processed samples back into the container type they came from."""
    if isinstance(batch, Dataset):
        pings = [p.with_samples(d.astype(np.complex64)) for p, d in zip(batch.pings, data)]
        return batch.with_pings(pings, compressed)
    if isinstance(batch, PingRecord):
        return batch.with_samples(data[0].astype(np.complex64))
    if isinstance(batch, (list, tuple)):
        return [p.with_samples(d.astype(np.complex64)) if isinstance(p, PingRecord) else d
                for p, d in zip(batch, data)]
    return data if np.ndim(batch) == 3 else data[0]


def matched_filter(samples, replica):
    """Correlate each row with ``replica`` (lags 0..N-1, length preserved).

    ``out[n] = sum_m x[n + m] * conj(replica[m])``, so an echo starting at
    sample k peaks at output sample k.
    """
    x = np.asarray(samples)
    n = x.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(n + replica.size - 1)))
    spectrum = np.fft.fft(x, nfft, axis=-1) * np.conj(np.fft.fft(replica, nfft))
    return np.fft.ifft(spectrum, axis=-1)[..., :n]


def pulse_compress(ping, waveform):
    """Matched-filter every channel of ``ping`` (or a whole dataset).

    The replica has unit energy, so a unit-energy echo compresses to a
    peak of magnitude 1 at its delay sample.
    """
    if isinstance(ping, Dataset):
        if ping.waveform.as_tuple() != waveform.as_tuple():
            raise ValidationError("waveform", "waveform does not match the dataset header")
        data = matched_filter(_stack(ping), waveform.replica())
        return _rebuild(ping, data, compressed=True)
    if ping.sample_rate_hz != waveform.sample_rate_hz:
        raise ValidationError("waveform.sample_rate_hz",
                              f"ping sampled at {ping.sample_rate_hz} Hz, waveform at "
                              f"{waveform.sample_rate_hz} Hz")
    return ping.with_samples(matched_filter(ping.samples, waveform.replica()).astype(np.complex64))


def mean_periodogram(batch):
    """Batch-mean flat-top-tapered periodogram (FFT bin order)."""
    x = _stack(batch)
    n = x.shape[-1]
    taper = windows.flattop(n, sym=False)
    spectrum = np.abs(np.fft.fft(x * taper, axis=-1)) ** 2 / np.sum(taper ** 2)
    return spectrum.reshape(-1, n).mean(axis=0)


def whitening_curve(spectrum, gamma=0.0):
    """Whitening power gain for a power spectrum.

    ``G = h(1 / (gamma * mean(P) + P))`` with ``h(x) = x / max(x)``, so the
    largest gain is exactly 1 (0 dB).
    """
    p = np.asarray(spectrum, dtype=float)
    check_positive(gamma, "preprocess.gamma", strict=False)
    if p.size == 0 or not np.any(p > 0):
        raise ValidationError("batch", "spectrum is identically zero; whitening undefined")
    denom = gamma * p.mean() + p
    if np.any(denom <= 0):
        raise ValidationError("preprocess.gamma",
                              "spectrum has empty bins; use gamma > 0 to regularize")
    g = 1.0 / denom
    return GainCurve(g / g.max(), "frequency", "power")


def whitening_gain(batch, gamma=0.0):
    return whitening_curve(mean_periodogram(batch), gamma)


def median_power(batch):
    """Per-sample median power across every ping and channel of the batch."""
    x = _stack(batch)
    return np.median((np.abs(x) ** 2).reshape(-1, x.shape[-1]), axis=0)


def tvg_gain(batch, alpha=0.0):
    """Time-varying power gain ``1 / (alpha * mean(P) + P(t))``.

    ``P(t)`` is the median power over the batch, which keeps isolated
    bright returns from pulling the gain down. Samples where the
    denominator is zero get zero gain.
    """
    x = _stack(batch)
    check_positive(alpha, "preprocess.alpha", strict=False)
    if x.shape[0] * x.shape[1] < 3:
        raise ValidationError("batch", "need at least 3 pings (or channels) for a median")
    p = median_power(x)
    denom = alpha * p.mean() + p
    g = np.divide(1.0, denom, out=np.zeros_like(denom), where=denom > 0)
    return GainCurve(g, "time", "power")


def apply_gain(ping, curve, domain=None):
    """Multiply samples by a gain curve in the time or frequency domain.

    ``curve`` may be a :class:`GainCurve` (power curves are converted to
    amplitude first), an array of amplitude gains or a scalar.
    """
    if not isinstance(curve, GainCurve):
        vals = np.atleast_1d(np.asarray(curve, dtype=float))
        curve = GainCurve(vals, domain or "time", "amplitude")
    domain = domain or curve.domain
    x = _stack(ping)
    amp = curve.amplitude()
    n = x.shape[-1]
    if amp.size == 1:
        amp = np.full(n, amp[0])
    if amp.size != n:
        raise ValidationError("gain.values", f"curve length {amp.size} != {n} samples")
    if domain == "time":
        out = x * amp
    elif domain == "frequency":
        out = np.fft.ifft(np.fft.fft(x, axis=-1) * amp, axis=-1)
    else:
        raise ValidationError("gain.domain", f"unknown domain {domain!r}")
    return _rebuild(ping, out)


def spectral_flatness_ratio(batch, waveform):
    """Max/min batch-mean power over the waveform's band."""
    p = mean_periodogram(batch)
    n = p.size
    f = np.fft.fftfreq(n, 1.0 / waveform.sample_rate_hz)
    band = np.abs(f) <= 0.5 * waveform.bandwidth_hz
    return p[band].max() / p[band].min()


class PulseCompressor(TransformerMixin, BaseEstimator):
    """Matched filter as a stateless transformer."""

    def __init__(self, waveform=None):
        self.waveform = waveform

    def fit(self, X, y=None):
        if self.waveform is None and not isinstance(X, Dataset):
            raise ValidationError("waveform", "waveform required for raw arrays")
        self.waveform_ = self.waveform or X.waveform
        return self

    def transform(self, X):
        check_is_fitted(self, "waveform_")
        if isinstance(X, Dataset):
            return pulse_compress(X, self.waveform_)
        return _rebuild(X, matched_filter(_stack(X), self.waveform_.replica()))


class SpectralWhitener(TransformerMixin, BaseEstimator):
    """Estimate a batch whitening curve and apply it as an amplitude filter.

    Attributes:
        gain_: fitted :class:`GainCurve` (frequency domain, power).
        spectrum_: batch-mean periodogram the gain was derived from.
    """

    def __init__(self, gamma=0.1):
        self.gamma = gamma

    def fit(self, X, y=None):
        self.spectrum_ = mean_periodogram(X)
        self.gain_ = whitening_curve(self.spectrum_, self.gamma)
        return self

    def transform(self, X):
        check_is_fitted(self, "gain_")
        return apply_gain(X, self.gain_)


class TimeVaryingGain(TransformerMixin, BaseEstimator):
    """Median-power time-varying gain.

    Attributes:
        gain_: fitted :class:`GainCurve` (time domain, power).
        median_power_: per-sample batch median power.
    """

    def __init__(self, alpha=0.0):
        self.alpha = alpha

    def fit(self, X, y=None):
        self.gain_ = tvg_gain(X, self.alpha)
        self.median_power_ = median_power(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "gain_")
        return apply_gain(X, self.gain_)


def preprocess_dataset(dataset, config):
    """Apply the configured pulse compression, whitening and TVG in order.

    Returns:
        (dataset, products) where ``products`` maps debug-curve names to
        arrays (spectra before/after whitening, TVG gain).
    """
    products = {}
    p = config.processing
    if p.pulse_compression and not dataset.compressed:
        dataset = pulse_compress(dataset, dataset.waveform)
    if p.whitening:
        w = SpectralWhitener(config.preprocess.gamma).fit(dataset)
        dataset = w.transform(dataset)
        products["whitening_gain"] = w.gain_.values
        products["spectrum_before"] = w.spectrum_
        products["spectrum_after"] = mean_periodogram(dataset)
    if p.tvg:
        t = TimeVaryingGain(config.preprocess.alpha).fit(dataset)
        dataset = t.transform(dataset)
        products["tvg_gain"] = t.gain_.values
    return dataset, products
