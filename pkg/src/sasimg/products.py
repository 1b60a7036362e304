"""Reconstructed image containers."""

from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError


@dataclass(eq=False)
class ComplexImage:
    """Complex accumulator over an imaging grid plus per-pixel ping counts.

    ``data`` and ``hits`` are indexed ``[ix, iy]``.
    """

    grid: object
    data: np.ndarray
    hits: np.ndarray

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape, np.complex128), np.zeros(grid.shape, np.int32))

    def __post_init__(self):
        if self.data.shape != tuple(self.grid.shape) or self.hits.shape != self.data.shape:
            raise ValidationError("image", "data/hits shape does not match the grid")

    def magnitude(self):
        return np.abs(self.data)

    def peak_index(self):
        return np.unravel_index(np.argmax(np.abs(self.data)), self.data.shape)

    def peak_position(self):
        i, j = self.peak_index()
        return np.array([self.grid.x_coords()[i], self.grid.y_coords()[j]])


@dataclass(eq=False)
class ComplexVolume:
    """Stack of complex layers sharing one lateral grid, one per focus depth."""

    layers: list
    depths: tuple

    def __post_init__(self):
        self.depths = tuple(float(d) for d in self.depths)
        if not self.layers:
            raise ValidationError("volume", "volume needs at least one layer")
        if len(self.layers) != len(self.depths):
            raise ValidationError("volume", "one depth per layer required")
        if any(b <= a for a, b in zip(self.depths, self.depths[1:])):
            raise ValidationError("volume.depths_m", "depths must be strictly increasing")
        shape = self.layers[0].data.shape
        if any(layer.data.shape != shape for layer in self.layers):
            raise ValidationError("volume", "layers must share one grid shape")

    @property
    def grid(self):
        return self.layers[0].grid

    @property
    def data(self):
        """(layers, nx, ny) complex array."""
        return np.stack([layer.data for layer in self.layers])

    def peak_index(self):
        return np.unravel_index(np.argmax(np.abs(self.data)), (len(self.layers),) + self.layers[0].data.shape)
