import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sasimg._validation import ValidationError
from sasimg.config import Config
from sasimg.render import (DynamicRangeCompressor, apply_drc, compress, compute_q, drc_curve,
                           export_raster, fit_drc, lower_median, quantize, read_raster)


def test_q_equal_one_when_median_is_target():
    assert compute_q(0.3, 0.3) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(drc_curve([0.0, 0.2, 1.0], 1.0), [0.0, 0.2, 1.0])


def test_q_nine_example():
    assert compute_q(0.1, 0.5) == pytest.approx(9.0, rel=1e-12)
    assert drc_curve(0.1, 9.0) == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("m", [0.0, 1.0, -0.1, 1.5, np.nan])
def test_q_rejects_median_at_bounds(m):
    with pytest.raises(ValidationError):
        compute_q(m, 0.3)


@pytest.mark.parametrize("b", [0.0, 1.0, 1.2])
def test_q_rejects_bad_brightness(b):
    with pytest.raises(ValidationError) as err:
        compute_q(0.3, b)
    assert err.value.key == "drc.brightness"


def test_curve_fixes_endpoints():
    for q in (0.01, 1.0, 37.0):
        assert drc_curve(0.0, q) == 0.0
        assert drc_curve(1.0, q) == pytest.approx(1.0, rel=1e-15)


def test_lower_median_is_an_element():
    assert lower_median([4.0, 1.0, 3.0, 2.0]) == 2.0
    assert lower_median([5.0, 1.0, 3.0]) == 3.0


def test_median_lands_on_target_before_quantization():
    rng = np.random.default_rng(0)
    for _ in range(100):
        img = rng.rayleigh(1.0, (17, 23)) * np.exp(1j * rng.uniform(0, 6.28, (17, 23)))
        b = rng.uniform(0.05, 0.95)
        out = compress(img, fit_drc(img, b))
        assert abs(lower_median(out) - b) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.integers(0, 10_000))
def test_compression_preserves_order(b, seed):
    img = np.random.default_rng(seed).exponential(1.0, 200)
    params = fit_drc(img, b)
    order = np.argsort(img, kind="stable")
    assert np.all(np.diff(compress(img, params)[order]) >= 0)
    assert np.all(np.diff(quantize(compress(img, params))[order].astype(int)) >= 0)


@given(st.floats(1e-6, 1e6))
def test_global_scale_does_not_change_raster(scale):
    img = np.random.default_rng(1).exponential(1.0, (8, 8))
    np.testing.assert_array_equal(apply_drc(img * scale, 0.3), apply_drc(img, 0.3))


def test_constant_image_maps_to_brightness():
    out = apply_drc(np.full((6, 6), 3.0 + 4.0j), 0.5)
    assert np.all(out == 128)


def test_zeros_are_excluded_from_median():
    img = np.zeros((10, 10))
    img[:3] = np.linspace(0.1, 1.0, 30).reshape(3, 10)
    params = fit_drc(img, 0.3)
    assert params.median == lower_median(img[:3] / img.max())
    with pytest.raises(ValidationError, match="ignore_zeros"):
        fit_drc(img, 0.3, ignore_zeros=False)
    with pytest.raises(ValidationError):
        fit_drc(np.zeros((4, 4)), 0.3)


def test_clip_percentile_saturates_outliers():
    img = np.ones(100)
    img[:60] = 0.5
    img[0] = 1e6
    params = fit_drc(img, 0.3, clip_percentile=90.0)
    assert params.scale == 1.0
    assert compress(img, params)[0] == pytest.approx(1.0)


def test_non_finite_image_rejected():
    with pytest.raises(ValidationError):
        apply_drc(np.array([1.0, np.inf]), 0.3)


def test_quantization_rounds_half_to_even():
    np.testing.assert_array_equal(quantize([0.0, 1.0, 0.5 / 255, 1.5 / 255, 2.0]), [0, 255, 0, 2, 255])


@pytest.mark.parametrize("fmt", ["png", "pgm"])
def test_single_pixel_export(tmp_path, fmt):
    path = export_raster(np.array([[77]], np.uint8), tmp_path / f"one.{fmt}")
    np.testing.assert_array_equal(read_raster(path), [[77]])


@pytest.mark.parametrize("fmt", ["png", "pgm"])
def test_lossless_round_trip_and_orientation(tmp_path, fmt):
    raster = np.random.default_rng(2).integers(0, 256, (64, 48), dtype=np.uint8)
    raster[0, 0], raster[-1, -1] = 255, 0
    back = read_raster(export_raster(raster, tmp_path / "img", fmt=fmt))
    np.testing.assert_array_equal(back, raster)
    assert back.shape == (64, 48)


def test_export_validation(tmp_path):
    with pytest.raises(ValidationError):
        export_raster(np.zeros((2, 2)), tmp_path / "x.png")
    with pytest.raises(ValidationError):
        export_raster(np.zeros((2, 2), np.uint8), tmp_path / "x.jpg")


def test_compressor_estimator():
    from sklearn.exceptions import NotFittedError
    img = np.random.default_rng(3).exponential(1.0, (12, 12))
    est = DynamicRangeCompressor.from_config(Config().with_overrides({"drc.brightness": 0.4}))
    with pytest.raises(NotFittedError):
        est.transform(img)
    out = est.fit(img).transform(img)
    np.testing.assert_array_equal(out, apply_drc(img, 0.4))
    assert est.get_params()["brightness"] == 0.4
