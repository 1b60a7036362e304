"""Transmit waveform descriptor and its closed-form complex baseband."""

from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, check_positive

WAVEFORM_KINDS = ("lfm",)


@dataclass(frozen=True)
class Waveform:
    """Linear FM chirp, described at complex baseband.

    The chirp sweeps ``[-bandwidth/2, +bandwidth/2]`` around the carrier
    ``center_frequency_hz`` over ``duration_s``. ``sample_rate_hz`` is the
    complex baseband sample rate of the recorded data.
    """

    center_frequency_hz: float
    bandwidth_hz: float
    duration_s: float
    sample_rate_hz: float
    kind: str = "lfm"

    def __post_init__(self):
        if self.kind not in WAVEFORM_KINDS:
            raise ValidationError("waveform.kind", f"unsupported waveform {self.kind!r}")
        check_positive(self.center_frequency_hz, "waveform.center_frequency_hz")
        check_positive(self.bandwidth_hz, "waveform.bandwidth_hz")
        check_positive(self.duration_s, "waveform.duration_s")
        check_positive(self.sample_rate_hz, "waveform.sample_rate_hz")
        if self.bandwidth_hz >= self.sample_rate_hz:
            raise ValidationError(
                "waveform.bandwidth_hz", "bandwidth must be below the sample rate"
            )

    @property
    def chirp_rate(self):
        return self.bandwidth_hz / self.duration_s

    @property
    def carrier_period(self):
        return 1.0 / self.center_frequency_hz

    @property
    def time_bandwidth_product(self):
        return self.bandwidth_hz * self.duration_s

    def baseband(self, t):
        """Evaluate the unit-amplitude chirp at arbitrary (fractional) times."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t < self.duration_s)
        tc = t - 0.5 * self.duration_s
        out = np.exp(1j * np.pi * self.chirp_rate * tc * tc)
        return np.where(inside, out, 0.0)

    @property
    def n_replica(self):
        return int(np.ceil(self.duration_s * self.sample_rate_hz))

    def replica(self):
        """Sampled replica scaled to unit energy."""
        q = self.baseband(np.arange(self.n_replica) / self.sample_rate_hz)
        return q / np.sqrt(np.sum(np.abs(q) ** 2))

    def as_tuple(self):
        return (self.kind, self.center_frequency_hz, self.bandwidth_hz,
                self.duration_s, self.sample_rate_hz)
