"""Grayscale image helpers.

Images are plain 2-D ``float64`` numpy arrays of shape ``(height, width)``
with every intensity in ``[0, 1]``.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, ShapeError


def as_image(pixels, copy: bool = False) -> np.ndarray:
    """Validate ``pixels`` as an image and return it as a float64 array."""
    img = np.array(pixels, dtype=np.float64) if copy else np.asarray(pixels, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"image must be 2-D, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError(f"image must be non-empty, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InvalidInputError("image contains non-finite intensities")
    if img.min() < 0.0 or img.max() > 1.0:
        raise InvalidInputError("image intensities must lie in [0, 1]")
    return img


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    # row i averages the input interval [i*n_in/n_out, (i+1)*n_in/n_out)
    edges = np.arange(n_out + 1) * (n_in / n_out)
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = edges[i], edges[i + 1]
        for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                w[i, j] = overlap
        w[i] /= w[i].sum()
    return w


def resize_area(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Resample by area averaging. Identity when the shape already matches."""
    h, w = shape
    if img.shape == (h, w):
        return img
    out = _area_weights(img.shape[0], h) @ img @ _area_weights(img.shape[1], w).T
    return np.clip(out, 0.0, 1.0)


def upsample_nearest(values: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resampling of a 2-D map to ``shape``."""
    h, w = shape
    if values.shape == (h, w):
        return values
    rows = (np.arange(h) * values.shape[0]) // h
    cols = (np.arange(w) * values.shape[1]) // w
    return values[np.ix_(rows, cols)]
