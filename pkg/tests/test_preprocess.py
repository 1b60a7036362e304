import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import lfilter

from sasimg._validation import ValidationError
from sasimg.preprocess import (GainCurve, PulseCompressor, SpectralWhitener, TimeVaryingGain,
                               apply_gain, matched_filter, mean_periodogram, pulse_compress,
                               spectral_flatness_ratio, tvg_gain, whitening_curve,
                               whitening_gain)
from sasimg.scenarios import minus3db_width
from sasimg.waveform import Waveform


def _ping_like(samples, template):
    return template.with_samples(np.asarray(samples, np.complex64))


def test_replica_autocorrelation_peak(point_dataset, waveform):
    rep = waveform.replica()
    ping = point_dataset.pings[0]
    x = np.zeros(ping.n_samples, complex)
    x[:rep.size] = rep
    out = pulse_compress(_ping_like(x[None], ping), waveform).samples[0]
    assert int(np.argmax(np.abs(out))) == 0
    assert abs(np.abs(out[0]) - np.sum(np.abs(rep) ** 2)) < 1e-6


@pytest.mark.parametrize("k", [1, 7, 100, 300])
def test_delayed_replica_peaks_at_delay(k, waveform):
    rep = waveform.replica()
    x = np.zeros(512, complex)
    x[k:k + rep.size] = rep[:512 - k]
    assert int(np.argmax(np.abs(matched_filter(x, rep)))) == k


def test_compressed_mainlobe_width():
    wf = Waveform(100e3, 20e3, 5e-3, 400e3)
    assert wf.time_bandwidth_product == pytest.approx(100)
    rep = wf.replica()
    x = np.zeros(8192, complex)
    x[1000:1000 + rep.size] = rep
    out = matched_filter(x, rep)
    width = minus3db_width(out, 1.0 / wf.sample_rate_hz)
    assert abs(width * wf.bandwidth_hz - 1.0) < 0.2


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.integers(0, 40), a=st.floats(-3, 3),
       b=st.floats(-3, 3))
def test_matched_filter_linear_and_shift_covariant(seed, shift, a, b):
    rng = np.random.default_rng(seed)
    rep = rng.normal(size=16) + 1j * rng.normal(size=16)
    x = np.zeros(256, complex)
    y = np.zeros(256, complex)
    x[60:120] = rng.normal(size=60) + 1j * rng.normal(size=60)
    y[60:120] = rng.normal(size=60) + 1j * rng.normal(size=60)
    lhs = matched_filter(a * x + b * y, rep)
    rhs = a * matched_filter(x, rep) + b * matched_filter(y, rep)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)
    shifted = matched_filter(np.roll(x, shift), rep)
    np.testing.assert_allclose(shifted[shift:200], matched_filter(x, rep)[:200 - shift], atol=1e-9)


def test_waveform_mismatch(point_dataset):
    other = Waveform(100e3, 20e3, 1e-3, 50e3)
    with pytest.raises(ValidationError):
        pulse_compress(point_dataset, other)
    with pytest.raises(ValidationError):
        pulse_compress(point_dataset.pings[0], other)
    with pytest.raises(ValidationError):
        Waveform(100e3, 40e3, 1e-3, 40e3)


def test_white_spectrum_gives_unit_gain():
    g = whitening_curve(np.full(64, 3.0), gamma=0.0)
    assert np.all(g.values == 1.0)
    assert np.all(g.attenuation_db() == 0.0)


def test_two_bin_hand_evaluation():
    g = whitening_curve(np.array([1.0, 4.0]), gamma=0.0)
    np.testing.assert_allclose(g.values, [1.0, 0.25])
    np.testing.assert_allclose(g.attenuation_db(), [0.0, -6.0206], atol=1e-4)


def test_strong_regularization_flattens_gain():
    p = np.linspace(1.0, 10.0, 32)
    spreads = [np.ptp(whitening_curve(p, gamma).values) for gamma in (0.0, 10.0, 1e3, 1e6)]
    assert spreads == sorted(spreads, reverse=True)
    assert spreads[-1] < 1e-5


def test_all_zero_batch_rejected():
    with pytest.raises(ValidationError):
        whitening_gain(np.zeros((3, 1, 32), complex))


def _colored_batch(n_pings=20, n=256, seed=0):
    rng = np.random.default_rng(seed)
    white = rng.normal(size=(n_pings, 1, n)) + 1j * rng.normal(size=(n_pings, 1, n))
    return lfilter([1.0], [1.0, -0.7], white, axis=-1)


def test_whitening_flattens_colored_input():
    wf = Waveform(100e3, 30e3, 1e-3, 40e3)
    batch = _colored_batch()
    g = whitening_gain(batch, gamma=0.0)
    assert g.values.max() == 1.0
    assert g.attenuation_db().max() == 0.0
    out = apply_gain(batch, g)
    assert spectral_flatness_ratio(out, wf) < spectral_flatness_ratio(batch, wf)


def test_whiten_then_recolor_recovers_input():
    batch = _colored_batch(seed=2)
    g = whitening_gain(batch, gamma=0.1)
    back = apply_gain(apply_gain(batch, g), g.inverse())
    np.testing.assert_allclose(back, batch, rtol=0, atol=1e-5 * np.abs(batch).max())


def test_constant_power_tvg():
    batch = np.full((5, 2, 64), 2.0 + 0j)
    for alpha in (0.0, 0.5):
        np.testing.assert_allclose(tvg_gain(batch, alpha).values, 1.0 / ((alpha + 1) * 4.0))


def _decay_batch(n_pings=11, n=200, seed=0):
    rng = np.random.default_rng(seed)
    t = 1e-3 * (1 + np.arange(n))
    # one phase pattern shared by all pings keeps the per-sample powers identical
    phase = np.exp(2j * np.pi * rng.uniform(size=(1, 1, n)))
    return t, np.repeat(phase / t, n_pings, axis=0)


def test_tvg_inverts_inverse_square_decay():
    t, batch = _decay_batch()
    g = tvg_gain(batch, 0.0)
    np.testing.assert_allclose(g.values, t ** 2, rtol=1e-12)
    flat = np.abs(apply_gain(batch, g)) ** 2
    assert np.max(np.abs(flat - 1.0)) < 0.01


@settings(max_examples=40, deadline=None)
@given(n_bad=st.integers(1, 5), sample=st.integers(0, 199), power=st.floats(1e-6, 1e6),
       seed=st.integers(0, 100))
def test_tvg_ignores_minority_outliers(n_bad, sample, power, seed):
    t, batch = _decay_batch(seed=seed)
    reference = tvg_gain(batch).values
    bad = batch.copy()
    rows = np.random.default_rng(seed).choice(11, n_bad, replace=False)
    bad[rows, 0, sample] = np.sqrt(power)
    assert np.array_equal(tvg_gain(bad).values, reference)


def test_apply_gain_identity_and_scaling(point_dataset):
    ping = point_dataset.pings[50]
    x = ping.samples.astype(complex)
    unit = apply_gain(ping, GainCurve(np.ones(ping.n_samples), "frequency"))
    np.testing.assert_allclose(unit.samples, x, rtol=1e-6, atol=1e-6 * np.abs(x).max())
    doubled = apply_gain(ping, 2.0, "time")
    assert np.array_equal(doubled.samples, (2 * x).astype(np.complex64))
    with pytest.raises(ValidationError, match="length"):
        apply_gain(ping, np.ones(3), "time")


def test_gain_curve_validation():
    with pytest.raises(ValidationError):
        GainCurve(np.array([1.0, -1.0]))
    with pytest.raises(ValidationError):
        GainCurve(np.array([1.0, np.inf]))


def test_estimators_follow_fit_transform(point_dataset):
    ds = point_dataset[80:92]
    comp = PulseCompressor().fit(ds).transform(ds)
    assert comp.compressed
    white = SpectralWhitener(0.1).fit(comp)
    assert white.gain_.values.max() == 1.0
    tvg = TimeVaryingGain()
    out = tvg.fit_transform(white.transform(comp))
    assert len(out) == 12 and tvg.median_power_.shape == (comp.n_samples,)
    assert SpectralWhitener(0.3).get_params() == {"gamma": 0.3}


def test_mean_periodogram_of_white_noise_is_flat():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(400, 1, 128)) + 1j * rng.normal(size=(400, 1, 128))
    p = mean_periodogram(x)
    assert np.ptp(p) / p.mean() < 0.5
