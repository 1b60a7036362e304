"""NED geometry: attitude rotation, element positions, imaging grids, FOV.

Conventions: x north (along-track), y east (starboard), z down. The
seafloor is the plane z = 0 and the platform flies at negative z. Positive
roll lowers the starboard side, positive pitch raises the bow, positive yaw
turns to starboard.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, check_positive, check_vector3


@dataclass(frozen=True)
class Attitude:
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.roll, self.pitch, self.yaw])):
            raise ValidationError("attitude", "angles must be finite")

    def matrix(self):
        return rotation_matrix(self)


def rotation_matrix(attitude):
    """Body-to-NED rotation, written out term by term (yaw * pitch * roll)."""
    cr, sr = np.cos(attitude.roll), np.sin(attitude.roll)
    cp, sp = np.cos(attitude.pitch), np.sin(attitude.pitch)
    cy, sy = np.cos(attitude.yaw), np.sin(attitude.yaw)
    return np.array([
        [cp * cy, cy * sp * sr - cr * sy, cr * cy * sp + sr * sy],
        [cp * sy, cr * cy + sp * sr * sy, cr * sp * sy - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def rotate_point(attitude, p):
    """Rotate a body-frame vector (or an (N, 3) stack) into NED."""
    return np.asarray(p, dtype=float) @ rotation_matrix(attitude).T


@dataclass(frozen=True, eq=False)
class PlatformState:
    """Navigation snapshot of one ping.

    ``lever_arms`` holds body-frame element offsets: row 0 is the
    transmitter, rows 1.. are the receive channels.
    """

    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: Attitude = field(default_factory=Attitude)
    lever_arms: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))

    def __post_init__(self):
        object.__setattr__(self, "position", check_vector3(self.position, "nav.position"))
        object.__setattr__(self, "velocity", check_vector3(self.velocity, "nav.velocity"))
        arms = np.asarray(self.lever_arms, dtype=float)
        if arms.ndim != 2 or arms.shape[1] != 3 or arms.shape[0] < 2:
            raise ValidationError("nav.lever_arms", "expected (channels + 1, 3) offsets")
        if not np.all(np.isfinite(arms)):
            raise ValidationError("nav.lever_arms", "must be finite")
        object.__setattr__(self, "lever_arms", arms)

    @property
    def n_channels(self):
        return self.lever_arms.shape[0] - 1

    def replace(self, **changes):
        kw = dict(position=self.position, velocity=self.velocity,
                  attitude=self.attitude, lever_arms=self.lever_arms)
        kw.update(changes)
        return PlatformState(**kw)

    def __eq__(self, other):
        if not isinstance(other, PlatformState):
            return NotImplemented
        return (np.array_equal(self.position, other.position)
                and np.array_equal(self.velocity, other.velocity)
                and self.attitude == other.attitude
                and np.array_equal(self.lever_arms, other.lever_arms))


def element_positions(state, t_since_tx, stop_and_hop=False):
    """Transmitter and receiver positions ``t_since_tx`` seconds after transmit.

    The transmitter fires instantaneously from its lever arm at the ping
    position. Receivers ride the first-order kinematic path
    ``p + v t + R @ lever``; ``stop_and_hop`` freezes them at t = 0.

    Returns:
        (tx, rx): a 3-vector and an (n_channels, 3) array.
    """
    if t_since_tx < 0:
        raise ValidationError("t_since_tx", "must be >= 0")
    arms = rotate_point(state.attitude, state.lever_arms)
    tx = state.position + arms[0]
    rx = state.position + arms[1:]
    if not stop_and_hop:
        rx = rx + state.velocity * t_since_tx
    return tx, rx


@dataclass(frozen=True, eq=False)
class BeamSpec:
    """Hard-edged beam cone, FWHM widths in radians, boresight in body frame."""

    azimuth_fwhm: float
    elevation_fwhm: float
    boresight: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        for key, val in (("beam.azimuth_fwhm_rad", self.azimuth_fwhm),
                         ("beam.elevation_fwhm_rad", self.elevation_fwhm)):
            check_positive(val, key)
            if val >= np.pi:
                raise ValidationError(key, "FWHM must be below pi")
        b = check_vector3(self.boresight, "beam.boresight")
        n = np.linalg.norm(b)
        if n == 0:
            raise ValidationError("beam.boresight", "must be nonzero")
        object.__setattr__(self, "boresight", b / n)

    @classmethod
    def side_looking(cls, azimuth_fwhm, elevation_fwhm, depression=0.0, look="starboard"):
        sign = {"starboard": 1.0, "port": -1.0}.get(look)
        if sign is None:
            raise ValidationError("beam.look", f"unknown look direction {look!r}")
        return cls(azimuth_fwhm, elevation_fwhm,
                   np.array([0.0, sign * np.cos(depression), np.sin(depression)]))

    @classmethod
    def downward(cls, azimuth_fwhm, elevation_fwhm):
        return cls(azimuth_fwhm, elevation_fwhm, np.array([0.0, 0.0, 1.0]))

    def frame(self):
        """Orthonormal (boresight, azimuth axis, elevation axis) in body frame.

        The azimuth axis is the body x axis made orthogonal to boresight, so
        azimuth is always measured in the along-track direction.
        """
        ub = self.boresight
        ua = np.array([1.0, 0.0, 0.0]) - ub[0] * ub
        na = np.linalg.norm(ua)
        if na < 1e-12:
            raise ValidationError("beam.boresight", "boresight may not be along-track")
        ua = ua / na
        ue = np.cross(ub, ua)
        return ub, ua, ue

    def half_tangents(self):
        return np.tan(0.5 * self.azimuth_fwhm), np.tan(0.5 * self.elevation_fwhm)

    def narrowed(self, factor):
        return BeamSpec(self.azimuth_fwhm * factor, self.elevation_fwhm * factor, self.boresight)

    def ned_frame(self, attitude):
        """Beam axes rotated into NED, stacked as rows of a (3, 3) array."""
        return rotate_point(attitude, np.stack(self.frame()))


def _cone_test(sensor, frame, tan_az, tan_el, points, elevation_test):
    d = np.asarray(points, dtype=float) - sensor
    along = d @ frame[0]
    ok = (along > 0) & (np.abs(d @ frame[1]) <= tan_az * along)
    if elevation_test:
        ok &= np.abs(d @ frame[2]) <= tan_el * along
    return ok


def in_fov(tx, rx, attitude, beam, point, bistatic=False, elevation_test=True):
    """True where ``point`` lies inside the beam cone.

    The monostatic test uses the transmitter only; the bistatic test
    requires the point to be inside both the transmit cone and the receive
    cone, each evaluated from its own position. A point coincident with the
    sensor is outside by convention. ``point`` may be a 3-vector or an
    (N, 3) stack.
    """
    frame = beam.ned_frame(attitude)
    tan_az, tan_el = beam.half_tangents()
    tx = np.asarray(tx, dtype=float)
    ok = _cone_test(tx, frame, tan_az, tan_el, point, elevation_test)
    if bistatic:
        ok &= _cone_test(np.asarray(rx, dtype=float), frame, tan_az, tan_el, point,
                         elevation_test)
    if np.ndim(ok) == 0:
        return bool(ok)
    return ok


@dataclass(frozen=True, eq=False)
class ImagingGrid:
    """Regular pixel lattice on the horizontal plane ``z``.

    Pixel ``(i, j)`` sits at ``origin + (x_start + i dx, y_start + j dy, z)``.
    ``depths`` is set for volumetric grids (one layer per depth).
    """

    origin: np.ndarray
    x_start: float
    y_start: float
    dx: float
    dy: float
    nx: int
    ny: int
    z: float = 0.0
    depths: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "origin", check_vector3(self.origin, "grid.origin"))
        check_positive(self.dx, "grid.spacing_x_m")
        check_positive(self.dy, "grid.spacing_y_m")
        if self.nx < 1 or self.ny < 1:
            raise ValidationError("grid", f"empty grid ({self.nx} x {self.ny})")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        if self.depths is not None:
            object.__setattr__(self, "depths", tuple(float(d) for d in self.depths))

    @property
    def shape(self):
        return (self.nx, self.ny)

    def x_coords(self):
        return self.origin[0] + self.x_start + np.arange(self.nx) * self.dx

    def y_coords(self):
        return self.origin[1] + self.y_start + np.arange(self.ny) * self.dy

    def pixel_positions(self, z=None):
        z = self.origin[2] + self.z if z is None else z
        xx, yy = np.meshgrid(self.x_coords(), self.y_coords(), indexing="ij")
        return np.stack([xx, yy, np.full_like(xx, z)], axis=-1)

    def with_plane(self, z):
        return ImagingGrid(self.origin, self.x_start, self.y_start, self.dx, self.dy,
                           self.nx, self.ny, z, self.depths)

    def block_shape(self, block_size):
        return (-(-self.nx // block_size), -(-self.ny // block_size))

    def metadata(self):
        return {
            "origin": [float(v) for v in self.origin],
            "x_start": float(self.x_start), "y_start": float(self.y_start),
            "dx": float(self.dx), "dy": float(self.dy),
            "nx": self.nx, "ny": self.ny, "z": float(self.z),
        }

    @classmethod
    def from_metadata(cls, meta, depths=None):
        return cls(np.asarray(meta["origin"], float), meta["x_start"], meta["y_start"],
                   meta["dx"], meta["dy"], meta["nx"], meta["ny"], meta.get("z", 0.0),
                   depths)

    def __eq__(self, other):
        if not isinstance(other, ImagingGrid):
            return NotImplemented
        return self.metadata() == other.metadata() and self.depths == other.depths


def angular_support_offset(far_range, azimuth_fwhm):
    """Along-track margin giving a pixel at ``far_range`` full beam support."""
    return far_range * np.tan(0.5 * azimuth_fwhm)


def make_grid(config, first, last, beam):
    """Stripmap grid with the origin on the seafloor beneath the first ping.

    The along-track start is pushed forward by the far-range angular-support
    margin and the end is pulled back by the same amount, so every corner
    pixel is seen across the full azimuth beamwidth. A positive
    ``grid.extent_x_m`` fixes the along-track length instead of deriving it
    from the last ping.
    """
    g = config.grid
    altitude = -(first.position[2] - g.z_m)
    if altitude <= 0:
        raise ValidationError("nav.position", "first ping must be above the seafloor (z < 0)")
    origin = np.array([first.position[0], first.position[1], 0.0])
    far = max(abs(g.y_near_m), abs(g.y_far_m))
    offset = angular_support_offset(np.hypot(far, altitude), beam.azimuth_fwhm)
    x_start = offset
    if g.extent_x_m > 0:
        x_stop = x_start + g.extent_x_m
    else:
        x_stop = (last.position[0] - origin[0]) - offset
    nx = int(np.floor((x_stop - x_start) / g.spacing_x_m + 1e-9)) + 1
    ny = int(np.floor((g.y_far_m - g.y_near_m) / g.spacing_y_m + 1e-9)) + 1
    if x_stop < x_start or nx < 1 or ny < 1 or g.y_far_m < g.y_near_m:
        raise ValidationError("grid", "extents produce an empty grid")
    return ImagingGrid(origin, x_start, g.y_near_m, g.spacing_x_m, g.spacing_y_m,
                       nx, ny, g.z_m)


def grid_from_config(config, first, last, beam):
    """Explicit centered grid when ``grid.nx``/``grid.ny`` are set, else :func:`make_grid`."""
    g = config.grid
    if g.nx > 0 and g.ny > 0:
        hx = (g.nx - 1) / 2 * g.spacing_x_m
        hy = (g.ny - 1) / 2 * g.spacing_y_m
        return ImagingGrid(np.array([g.center_x_m, g.center_y_m, 0.0]), -hx, -hy,
                           g.spacing_x_m, g.spacing_y_m, g.nx, g.ny, g.z_m)
    return make_grid(config, first, last, beam)
