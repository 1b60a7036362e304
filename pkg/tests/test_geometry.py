import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sasimg._validation import ValidationError
from sasimg.config import Config
from sasimg.geometry import (Attitude, BeamSpec, ImagingGrid, PlatformState,
                             angular_support_offset, element_positions, grid_from_config,
                             in_fov, make_grid, rotate_point, rotation_matrix)
from sasimg.scenarios import linear_array
from sasimg.simulator import synth_trajectory

angles = st.floats(-np.pi, np.pi, allow_nan=False)


def _elementary(roll, pitch, yaw):
    """Independent construction: Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr, cp, sp, cy, sy = (np.cos(roll), np.sin(roll), np.cos(pitch), np.sin(pitch),
                              np.cos(yaw), np.sin(yaw))
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def test_identity_rotation():
    assert np.array_equal(rotate_point(Attitude(), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_positive_yaw_turns_north_to_east():
    out = rotate_point(Attitude(yaw=np.pi / 2), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-12)


def test_rotation_orthonormal_for_many_attitudes():
    rng = np.random.default_rng(3)
    for roll, pitch, yaw in rng.uniform(-np.pi, np.pi, (10_000, 3)):
        r = rotation_matrix(Attitude(roll, pitch, yaw))
        assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(r) - 1.0) < 1e-12


@given(angles, angles, angles)
def test_rotation_matches_elementary_product(roll, pitch, yaw):
    np.testing.assert_allclose(rotation_matrix(Attitude(roll, pitch, yaw)),
                               _elementary(roll, pitch, yaw), atol=1e-14)


def test_non_finite_attitude_rejected():
    with pytest.raises(ValidationError):
        Attitude(roll=np.nan)


def test_static_element_positions():
    arms = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.0]])
    s = PlatformState(np.array([1.0, 2.0, -3.0]), np.zeros(3), Attitude(), arms)
    for t in (0.0, 0.1, 2.0):
        _, rx = element_positions(s, t)
        np.testing.assert_array_equal(rx[0], [1.0, 2.5, -3.0])


def test_moving_receiver_displacement():
    arms = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.0]])
    s = PlatformState(np.zeros(3), np.array([1.0, 0.0, 0.0]), Attitude(), arms)
    _, rx0 = element_positions(s, 0.0)
    _, rx1 = element_positions(s, 0.1)
    np.testing.assert_allclose(rx1 - rx0, [[0.1, 0.0, 0.0]], atol=1e-15)
    _, frozen = element_positions(s, 0.1, stop_and_hop=True)
    np.testing.assert_array_equal(frozen, rx0)


def test_lever_arms_need_tx_plus_channels():
    with pytest.raises(ValidationError):
        PlatformState(np.zeros(3), lever_arms=np.zeros((1, 3)))


def test_beam_width_bounds():
    with pytest.raises(ValidationError):
        BeamSpec(np.pi, 0.5)
    with pytest.raises(ValidationError):
        BeamSpec(0.0, 0.5)


def _az_point(beam, angle, rng=10.0):
    ub, ua, _ = beam.frame()
    return rng * (np.cos(angle) * ub + np.sin(angle) * ua)


def test_boresight_always_inside():
    beam = BeamSpec.side_looking(0.1, 0.3, 0.4)
    tx = np.zeros(3)
    for r in (1e-3, 1.0, 1e4):
        assert in_fov(tx, tx, Attitude(), beam, r * beam.boresight)


def test_azimuth_boundary():
    beam = BeamSpec.side_looking(0.2, 0.6, 0.5)
    tx = np.zeros(3)
    assert not in_fov(tx, tx, Attitude(), beam, _az_point(beam, 0.1 + 1e-6))
    assert in_fov(tx, tx, Attitude(), beam, _az_point(beam, 0.1 - 1e-6))
    assert not in_fov(tx, tx, Attitude(), beam, _az_point(beam, -0.1 - 1e-6))


@settings(max_examples=200)
@given(roll=angles, pitch=st.floats(-1.2, 1.2), yaw=angles, turn=angles,
       p=st.lists(st.floats(-20, 20), min_size=3, max_size=3),
       tx=st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_fov_invariant_under_rigid_yaw(roll, pitch, yaw, turn, p, tx):
    beam = BeamSpec.side_looking(0.35, 1.2, 0.55)
    tx = np.array(tx)
    p = np.array(p)
    before = in_fov(tx, tx, Attitude(roll, pitch, yaw), beam, p)
    rz = _elementary(0.0, 0.0, turn)
    p2 = tx + rz @ (p - tx)
    after = in_fov(tx, tx, Attitude(roll, pitch, yaw + turn), beam, p2)
    # points within rounding of the cone surface may legitimately flip
    d = p - tx
    frame = beam.ned_frame(Attitude(roll, pitch, yaw))
    along = d @ frame[0]
    ta, te = beam.half_tangents()
    margin = min(abs(abs(d @ frame[1]) - ta * along), abs(abs(d @ frame[2]) - te * along),
                 abs(along))
    if margin > 1e-9:
        assert before == after


def test_shrinking_beam_never_adds_points():
    rng = np.random.default_rng(5)
    beam = BeamSpec.side_looking(0.5, 1.0, 0.5)
    pts = rng.uniform(-10, 10, (20000, 3))
    tx = np.array([0.0, 0.0, -5.0])
    wide = in_fov(tx, tx, Attitude(0.1, 0.05, 0.2), beam, pts)
    for f in (0.9, 0.5, 0.1):
        narrow = in_fov(tx, tx, Attitude(0.1, 0.05, 0.2), beam.narrowed(f), pts)
        assert not np.any(narrow & ~wide)
        wide = narrow


def test_bistatic_requires_both_cones():
    beam = BeamSpec.downward(0.2, 0.2)
    tx = np.array([0.0, 0.0, -1.0])
    rx = np.array([0.0, 1.0, -1.0])
    below_tx = np.array([0.0, 0.0, 0.0])
    assert in_fov(tx, rx, Attitude(), beam, below_tx)
    assert not in_fov(tx, rx, Attitude(), beam, below_tx, bistatic=True)


def test_support_offset_limits():
    assert angular_support_offset(100.0, 1e-12) < 1e-9
    assert abs(angular_support_offset(100.0, 2 * np.arctan(0.1)) - 10.0) < 1e-9


def test_grid_corners_have_full_aperture():
    cfg = Config()
    arms = linear_array(1, 0.04)
    script = synth_trajectory(250, 1.0, 0.02, 5.0, arms)
    beam = cfg.beam_spec()
    grid = make_grid(cfg, script.states[0], script.states[-1], beam)
    pts = grid.pixel_positions()
    corners = np.array([pts[0, 0], pts[0, -1], pts[-1, 0], pts[-1, -1]])
    ta, _ = beam.half_tangents()
    counts = np.zeros(4, int)
    for s in script.states:
        tx, _ = element_positions(s, 0.0)
        counts += in_fov(tx, tx, s.attitude, beam, corners)
    for c, n in zip(corners, counts):
        d = c - script.states[0].position
        along = np.hypot(d[1], d[2])
        length = 2 * ta * along * np.cos(np.arctan2(d[2], d[1]) - 0.55)
        assert n >= np.floor(length / 0.02)
    assert grid.x_start > 0


def test_grid_offset_and_empty_extent():
    cfg = Config()
    arms = linear_array(1, 0.04)
    script = synth_trajectory(20, 1.0, 0.02, 5.0, arms)
    with pytest.raises(ValidationError, match="empty"):
        make_grid(cfg, script.states[0], script.states[-1], cfg.beam_spec())
    explicit = cfg.with_overrides({"grid.nx": 4, "grid.ny": 6, "grid.center_x_m": 1.0,
                                   "grid.center_y_m": 8.0})
    g = grid_from_config(explicit, script.states[0], script.states[-1], cfg.beam_spec())
    assert g.shape == (4, 6)
    np.testing.assert_allclose([g.x_coords().mean(), g.y_coords().mean()], [1.0, 8.0])


def test_grid_metadata_round_trip():
    g = ImagingGrid(np.array([1.0, 2.0, 0.0]), 0.5, -1.0, 0.01, 0.02, 7, 9, 0.1)
    assert ImagingGrid.from_metadata(g.metadata()) == g
    assert g.block_shape(5) == (2, 2)
    with pytest.raises(ValidationError):
        ImagingGrid(np.zeros(3), 0, 0, 0.01, 0.01, 0, 3)
