"""Coarse-to-fine block culling of pixels outside the beam footprint."""

from dataclasses import dataclass

import numpy as np

from .._validation import check_int
from ..geometry import element_positions, in_fov


@dataclass(frozen=True, eq=False)
class BlockMask:
    """Per-block keep flags for one ping; ``keep`` is ``ceil(nx/b) x ceil(ny/b)``."""

    keep: np.ndarray
    block_size: int
    grid_shape: tuple

    def pixel_mask(self):
        b = self.block_size
        nx, ny = self.grid_shape
        return np.repeat(np.repeat(self.keep, b, axis=0), b, axis=1)[:nx, :ny]

    def kept_pixels(self):
        """Flat row-major indices of every pixel in a kept block, ascending."""
        return np.flatnonzero(self.pixel_mask())

    @property
    def kept_fraction(self):
        return float(self.pixel_mask().mean())


def block_corners(grid, block_size, z=None):
    """Corner pixel positions of every block, ``(nbx, nby, 4, 3)``."""
    nx, ny = grid.shape
    b = block_size
    i0 = np.arange(0, nx, b)
    j0 = np.arange(0, ny, b)
    i1 = np.minimum(i0 + b - 1, nx - 1)
    j1 = np.minimum(j0 + b - 1, ny - 1)
    xs, ys = grid.x_coords(), grid.y_coords()
    zz = grid.origin[2] + grid.z if z is None else z
    out = np.empty((i0.size, j0.size, 4, 3))
    for c, (ii, jj) in enumerate(((i0, j0), (i0, j1), (i1, j0), (i1, j1))):
        out[:, :, c, 0] = xs[ii][:, None]
        out[:, :, c, 1] = ys[jj][None, :]
        out[:, :, c, 2] = zz
    return out


def _cull(nav, grid, beam, block_size, bistatic, elevation_test):
    block_size = check_int(block_size, "processing.block_size_px", 1)
    corners = block_corners(grid, block_size)
    pts = corners.reshape(-1, 3)
    tx, rx = element_positions(nav, 0.0)
    if bistatic:
        ok = np.zeros(pts.shape[0], bool)
        for r in rx:
            ok |= in_fov(tx, r, nav.attitude, beam, pts, True, elevation_test)
    else:
        ok = in_fov(tx, rx[0], nav.attitude, beam, pts, False, elevation_test)
    keep = ok.reshape(corners.shape[:3]).any(axis=2)
    return BlockMask(keep, block_size, grid.shape)


def cull_blocks(ping, grid, beam, block_size=5, elevation_test=True):
    """Keep a block iff any of its four corner pixels is inside the tx cone."""
    nav = getattr(ping, "nav", ping)
    return _cull(nav, grid, beam, block_size, False, elevation_test)


def cull_blocks_bistatic(ping, grid, beam, block_size=5, elevation_test=True):
    """Keep a block iff a corner lies in both the tx cone and some rx cone.

    Each cone is tested from its own element position, so widely separated
    transmit and receive elements prune more than a midpoint approximation.
    """
    nav = getattr(ping, "nav", ping)
    return _cull(nav, grid, beam, block_size, True, elevation_test)
