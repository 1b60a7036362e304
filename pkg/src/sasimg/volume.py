"""Layered sub-bottom imaging: one backprojected plane per focus depth.

Depths are measured downward from the water/sediment interface. Each
layer is an independent 2-D reconstruction whose delays follow the
refracted (Fermat) path on both the transmit and the receive leg.
"""

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError
from .beamform import BackprojectionOptions, reconstruct_with_report
from .config import Config
from .io import Dataset
from .preprocess import pulse_compress
from .products import ComplexVolume
from .refraction import SedimentModel

MIP_AXES = {"depth": 0, "x": 1, "y": 2}


def refracted_travel_time(src, dst, model):
    """One-way Fermat travel time between ``src`` and ``dst`` (NED meters)."""
    return model.travel_time(np.asarray(src, float), np.asarray(dst, float))


def sediment_from_config(config):
    v = config.volume
    return SedimentModel(config.sound_speed_mps, v.sediment_speed_mps, v.interface_z_m)


def _check_depths(depths):
    depths = tuple(float(d) for d in depths)
    if not depths:
        raise ValidationError("volume.depths_m", "at least one depth is required")
    if any(d < 0 or not np.isfinite(d) for d in depths):
        raise ValidationError("volume.depths_m", "depths are measured down from the interface "
                                                 "and must be finite and >= 0")
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValidationError("volume.depths_m", "depths must be strictly increasing")
    return depths


def reconstruct_volume_with_reports(dataset, grid, depths=None, model=None, config=None, log=None,
                                    **changes):
    """Like :func:`reconstruct_volume`, also returning one report per layer."""
    config = config or Config()
    depths = _check_depths(config.volume.depths_m if depths is None else depths)
    model = model or sediment_from_config(config)
    if isinstance(dataset, Dataset) and not dataset.compressed:
        dataset = pulse_compress(dataset, dataset.waveform)
    opts = BackprojectionOptions.from_config(config, dataset, bistatic=True, sediment=model,
                                             sound_speed_mps=model.water_speed_mps)
    opts = replace(opts, **changes)
    layers, reports = [], []
    for k, depth in enumerate(depths):
        layer_grid = grid.with_plane(model.interface_z_m + depth - grid.origin[2])
        image, report = reconstruct_with_report(dataset, layer_grid, opts)
        if log is not None:
            log.event(stage="volume_layer", layer=k, depth_m=depth,
                      ms=round(sum(report.ping_ms), 3), skipped=report.total_skipped)
        layers.append(image)
        reports.append(report)
    return ComplexVolume(layers, depths), reports


def reconstruct_volume(dataset, grid, depths=None, model=None, config=None, log=None, **changes):
    """Backproject one layer per depth below the interface.

    Args:
        dataset: pings with (near-field) bistatic geometry.
        grid: lateral grid; its plane ``z`` is replaced per layer.
        depths: focus depths in meters below the interface; defaults to
            ``volume.depths_m``.
        model: :class:`SedimentModel`; defaults to the ``volume`` section.
        **changes: overrides applied to the :class:`BackprojectionOptions`.

    Returns:
        :class:`ComplexVolume` with layers in depth order.
    """
    volume, _ = reconstruct_volume_with_reports(dataset, grid, depths, model, config, log,
                                                **changes)
    return volume


def _magnitudes(volume):
    if isinstance(volume, ComplexVolume):
        return np.abs(volume.data)
    arr = np.abs(np.asarray(volume))
    if arr.ndim != 3 or arr.size == 0:
        raise ValidationError("volume", "expected a nonempty 3-D volume")
    return arr


def mip(volume, axis="depth"):
    """Maximum-magnitude projection along ``"depth"``, ``"x"`` or ``"y"`` (or 0, 1, 2)."""
    ax = MIP_AXES.get(axis, axis) if isinstance(axis, str) else axis
    if ax not in (0, 1, 2) or isinstance(ax, bool):
        raise ValidationError("axis", f"invalid projection axis {axis!r}")
    return _magnitudes(volume).max(axis=ax)


def layer_index(depths, depth):
    """Nearest layer to ``depth``; the lower index wins an exact tie."""
    d = np.asarray(depths, float)
    if not d[0] <= depth <= d[-1]:
        raise ValidationError("depth", f"depth {depth} outside the layer span "
                                       f"[{d[0]}, {d[-1]}]")
    return int(np.argmin(np.abs(d - depth)))


def slice_depth(volume, depth):
    """Layer nearest to ``depth`` (no interpolation)."""
    return volume.layers[layer_index(volume.depths, depth)]


class VolumeBackprojector(TransformerMixin, BaseEstimator):
    """Dataset -> :class:`ComplexVolume` transformer over a fixed lateral grid.

    Attributes:
        depths_: layer depths in use.
        model_: the :class:`SedimentModel`.
        reports_: per-layer reconstruction reports from the last transform.
    """

    def __init__(self, grid, config=None, depths=None, model=None, culling=None):
        self.grid = grid
        self.config = config
        self.depths = depths
        self.model = model
        self.culling = culling

    def fit(self, X=None, y=None):
        config = self.config or Config()
        self.depths_ = _check_depths(config.volume.depths_m if self.depths is None
                                     else self.depths)
        self.model_ = self.model or sediment_from_config(config)
        return self

    def transform(self, X, log=None):
        check_is_fitted(self, "depths_")
        changes = {} if self.culling is None else {"culling": self.culling}
        volume, self.reports_ = reconstruct_volume_with_reports(
            X, self.grid, self.depths_, self.model_, self.config, log, **changes)
        return volume
