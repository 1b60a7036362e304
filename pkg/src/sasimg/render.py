"""Dynamic range compression and 8-bit raster export.

Magnitudes are normalized to [0, 1] and passed through the rational curve

    F(I) = q I / ((q - 1) I + 1),

which is strictly increasing for q > 0 and fixes both ends of [0, 1]. The
brightness parameter q is chosen so the median normalized magnitude lands
exactly on the requested brightness ``b``.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_open_unit
from .config import Config

RASTER_FORMATS = ("png", "pgm")


def compute_q(median, b):
    """Brightness parameter mapping ``median`` onto ``b``.

    Args:
        median: median normalized magnitude, in (0, 1).
        b: target output brightness, in (0, 1).

    Returns:
        ``q = (b - b m) / (m - b m)``.

    Raises:
        ValidationError: either argument outside (0, 1).
    """
    m = check_open_unit(median, "median", "median normalized intensity")
    b = check_open_unit(b, "drc.brightness", "brightness target")
    return (b - b * m) / (m - b * m)


def drc_curve(intensity, q):
    """Apply ``F(I) = q I / ((q - 1) I + 1)`` elementwise."""
    i = np.asarray(intensity, float)
    return q * i / ((q - 1.0) * i + 1.0)


def lower_median(values):
    """Lower median by selection; always an element of ``values``."""
    v = np.asarray(values, float).ravel()
    if v.size == 0:
        raise ValidationError("image", "median of an empty set")
    k = (v.size - 1) // 2
    return float(np.partition(v, k)[k])


@dataclass(frozen=True)
class DrcParams:
    """Compression parameters fitted to one image.

    ``scale`` is the magnitude that normalizes to 1; ``median`` the
    normalized median; ``q`` the curve parameter (``None`` when every
    counted pixel is at full scale and the output is set to ``b`` directly).
    """

    brightness: float
    scale: float
    median: float
    q: float = None


def _magnitudes(image):
    data = getattr(image, "data", image)
    mag = np.abs(np.asarray(data))
    if mag.size == 0:
        raise ValidationError("image", "empty image")
    if not np.all(np.isfinite(mag)):
        raise ValidationError("image", "image contains non-finite values")
    return mag


def fit_drc(image, b, clip_percentile=100.0, ignore_zeros=True):
    """Fit :class:`DrcParams` to an image's magnitudes.

    Args:
        image: complex or real array, or anything with a ``data`` array.
        b: target brightness in (0, 1).
        clip_percentile: percentile of the nonzero magnitudes that maps to
            1; 100 uses the maximum, lower values saturate bright outliers.
        ignore_zeros: exclude exactly-zero pixels (outside all coverage)
            from the median.

    Raises:
        ValidationError: all-zero image, non-finite values, or bad ``b``.
    """
    b = check_open_unit(b, "drc.brightness", "brightness target")
    if not 0.0 < clip_percentile <= 100.0:
        raise ValidationError("drc.clip_percentile", "must lie in (0, 100]")
    mag = _magnitudes(image)
    nonzero = mag[mag > 0]
    if nonzero.size == 0:
        raise ValidationError("image", "all-zero image cannot be compressed")
    scale = float(np.max(nonzero)) if clip_percentile == 100.0 else float(
        np.percentile(nonzero, clip_percentile))
    norm = np.minimum(mag / scale, 1.0)
    med = lower_median(norm[mag > 0] if ignore_zeros else norm)
    if med <= 0.0:
        raise ValidationError("image", "median intensity is zero; enable drc.ignore_zeros")
    q = None if med >= 1.0 else compute_q(med, b)
    return DrcParams(b, scale, med, q)


def compress(image, params):
    """Pre-quantization compressed intensities in [0, 1]."""
    norm = np.minimum(_magnitudes(image) / params.scale, 1.0)
    if params.q is None:
        return norm * params.brightness
    return drc_curve(norm, params.q)


def quantize(values):
    """Map [0, 1] to uint8 with round-half-even."""
    v = np.clip(np.asarray(values, float), 0.0, 1.0)
    return np.rint(v * 255.0).astype(np.uint8)


def apply_drc(image, b, clip_percentile=100.0, ignore_zeros=True):
    """Compress an image to an 8-bit raster whose median sits at ``b``."""
    return quantize(compress(image, fit_drc(image, b, clip_percentile, ignore_zeros)))


def export_raster(raster, path, fmt=None):
    """Write an 8-bit grayscale raster losslessly (row 0 at the top).

    Args:
        fmt: ``"png"`` or ``"pgm"``; inferred from the suffix when omitted.
    """
    arr = np.asarray(raster)
    if arr.dtype != np.uint8 or arr.ndim != 2:
        raise ValidationError("raster", "expected a 2-D uint8 raster")
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in RASTER_FORMATS:
        raise ValidationError("format", f"unsupported raster format {fmt!r}")
    Image.fromarray(np.ascontiguousarray(arr)).save(
        path, format="PNG" if fmt == "png" else "PPM")
    return path


def read_raster(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L")).copy()


class DynamicRangeCompressor(TransformerMixin, BaseEstimator):
    """Image -> uint8 raster with the median pinned to ``brightness``.

    Attributes:
        params_: :class:`DrcParams` fitted on the last ``fit``.
    """

    def __init__(self, brightness=0.3, clip_percentile=100.0, ignore_zeros=True):
        self.brightness = brightness
        self.clip_percentile = clip_percentile
        self.ignore_zeros = ignore_zeros

    @classmethod
    def from_config(cls, config=None):
        d = (config or Config()).drc
        return cls(d.brightness, d.clip_percentile, d.ignore_zeros)

    def fit(self, X, y=None):
        self.params_ = fit_drc(X, self.brightness, self.clip_percentile, self.ignore_zeros)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return quantize(compress(X, self.params_))
