import numpy as np
import pytest

from sasimg._validation import ValidationError
from sasimg.beamform import BackprojectionOptions, reconstruct_with_report
from sasimg.config import Config
from sasimg.geometry import ImagingGrid
from sasimg.preprocess import pulse_compress
from sasimg.products import ComplexImage, ComplexVolume
from sasimg.refraction import SedimentModel
from sasimg.scenarios import centered_grid, simulate_from_config
from sasimg.volume import (VolumeBackprojector, layer_index, mip, reconstruct_volume,
                           refracted_travel_time, slice_depth)

BURIED = {"sim.scenario": "buried", "sim.n_pings": 30, "sim.aperture_lines": 30,
          "sim.channels": 1, "sim.ping_spacing_m": 0.03, "sim.line_spacing_m": 0.03,
          "sim.speed_mps": 1.0, "sim.altitude_m": 1.5, "sim.rx_offset_y_m": 0.3,
          "sim.scatterers": [[0.45, 0.45, 0.11, 1.0]], "sim.n_samples": 256,
          "sim.window_start_s": 0.0015, "sim.bandwidth_hz": 20e3, "sim.sample_rate_hz": 40e3,
          "beam.look": "down", "beam.azimuth_fwhm_rad": 1.0, "beam.elevation_fwhm_rad": 1.0,
          "fov.bistatic": True, "volume.sediment_speed_mps": 1700.0,
          "volume.depths_m": [0.05, 0.07, 0.09, 0.11, 0.13, 0.15, 0.17]}


def _volume(values, depths=None):
    grid = ImagingGrid(np.zeros(3), 0.0, 0.0, 0.1, 0.1, values.shape[1], values.shape[2])
    depths = depths or [0.1 * (k + 1) for k in range(values.shape[0])]
    hits = np.ones(values.shape[1:], np.int32)
    return ComplexVolume([ComplexImage(grid, v.astype(complex), hits) for v in values], depths)


def test_mip_of_single_voxel():
    v = np.zeros((3, 4, 5))
    v[1, 2, 3] = -2.5
    vol = _volume(v)
    expect = np.zeros((4, 5))
    expect[2, 3] = 2.5
    np.testing.assert_array_equal(mip(vol, "depth"), expect)
    assert mip(vol, "x").shape == (3, 5) and mip(vol, "x")[1, 3] == 2.5
    assert mip(vol, "y").shape == (3, 4) and mip(vol, "y")[1, 2] == 2.5
    np.testing.assert_array_equal(mip(v, 0), expect)


def test_mip_of_constant_volume():
    vol = _volume(np.full((4, 3, 3), 0.7))
    assert np.all(mip(vol) == 0.7)


def test_mip_rejects_bad_axis():
    vol = _volume(np.ones((2, 2, 2)))
    for bad in ("z", 3, True):
        with pytest.raises(ValidationError):
            mip(vol, bad)
    with pytest.raises(ValidationError):
        mip(np.ones((2, 2)))


def test_slice_depth_picks_nearest_layer():
    v = np.arange(3)[:, None, None] * np.ones((3, 2, 2))
    vol = _volume(v, [0.1, 0.2, 0.3])
    assert slice_depth(vol, 0.2) is vol.layers[1]
    assert slice_depth(vol, 0.26) is vol.layers[2]


def test_slice_depth_tie_resolves_to_shallower_layer():
    assert layer_index([0.0, 1.0, 2.0], 0.5) == 0
    assert layer_index([0.0, 1.0, 2.0], 1.5) == 1
    with pytest.raises(ValidationError):
        layer_index([0.0, 1.0], 1.5)


def test_volume_rejects_bad_depths():
    with pytest.raises(ValidationError):
        _volume(np.ones((2, 2, 2)), [0.2, 0.1])
    ds = simulate_from_config(Config().with_overrides({**BURIED, "sim.n_pings": 2,
                                                      "sim.aperture_lines": 1}))
    grid = centered_grid((0.45, 0.45), 3, 0.01)
    for bad in ([], [-0.1], [0.1, 0.1]):
        with pytest.raises(ValidationError):
            reconstruct_volume(ds, grid, depths=bad)


def test_refracted_time_reduces_to_straight_line_without_contrast():
    model = SedimentModel(1500.0, 1500.0, 0.0)
    src, dst = np.array([0.0, 0.0, -1.5]), np.array([0.3, 0.4, 0.2])
    t = refracted_travel_time(src, dst, model)
    assert t == pytest.approx(np.linalg.norm(dst - src) / 1500.0, rel=1e-12)


def test_matched_speeds_equal_water_only_backprojection():
    cfg = Config().with_overrides({**BURIED, "sim.n_pings": 10, "sim.aperture_lines": 4,
                                   "volume.sediment_speed_mps": 1500.0})
    ds = pulse_compress(*(lambda d: (d, d.waveform))(simulate_from_config(cfg)))
    grid = centered_grid((0.45, 0.45), 9, 0.02)
    depths = (0.05, 0.11)
    vol = reconstruct_volume(ds, grid, depths, config=cfg)
    opts = BackprojectionOptions.from_config(cfg, ds, bistatic=True)
    for depth, layer in zip(depths, vol.layers):
        ref, _ = reconstruct_with_report(ds, grid.with_plane(depth), opts)
        scale = np.abs(ref.data).max()
        assert scale > 0
        assert np.max(np.abs(layer.data - ref.data)) <= 1e-6 * scale


@pytest.mark.slow
def test_buried_point_focuses_at_its_depth():
    cfg = Config().with_overrides(BURIED)
    ds = simulate_from_config(cfg)
    grid = centered_grid((0.45, 0.45), 21, 0.01)
    est = VolumeBackprojector(grid, cfg).fit()
    vol = est.transform(ds)
    k, i, j = vol.peak_index()
    assert vol.depths[k] == pytest.approx(0.11)
    assert abs(i - 10) <= 1 and abs(j - 10) <= 1
    assert len(est.reports_) == len(vol.depths)
    # focusing with the water speed alone puts the energy elsewhere
    water = reconstruct_volume(ds, grid, config=cfg,
                               model=SedimentModel(1500.0, 1500.0, 0.0))
    assert np.abs(water.data).max() < np.abs(vol.data).max()


def test_estimator_requires_fit():
    from sklearn.exceptions import NotFittedError
    est = VolumeBackprojector(centered_grid((0, 0), 3, 0.1))
    with pytest.raises(NotFittedError):
        est.transform(None)
    fitted = est.fit()
    assert fitted.depths_ == Config().volume.depths_m
    assert fitted.model_.sediment_speed_mps == Config().volume.sediment_speed_mps
