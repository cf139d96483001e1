"""Backward image warping: sample the source at x + u(x) with bilinear weights."""

from __future__ import annotations

import numpy as np

from .fields import FieldError, ScalarImage, VectorField2D


def _bilinear(values: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float) -> np.ndarray:
    h, w = values.shape
    inside = (xs >= 0.0) & (xs <= w - 1.0) & (ys >= 0.0) & (ys <= h - 1.0)
    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    out = (
        values[y0, x0] * (1.0 - fx) * (1.0 - fy)
        + values[y0, x1] * fx * (1.0 - fy)
        + values[y1, x0] * (1.0 - fx) * fy
        + values[y1, x1] * fx * fy
    )
    return np.where(inside, out, fill)


def sample_bilinear(image: ScalarImage, x: float, y: float, fill: float = 0.0) -> float:
    """Bilinear sample at a single (x, y); fill outside [0, w-1] x [0, h-1]."""
    return float(
        _bilinear(image.intensity, np.asarray([x], float), np.asarray([y], float), fill)[0]
    )


def warp(source: ScalarImage, displacement: VectorField2D, fill: float = 0.0) -> ScalarImage:
    """Deformed image T with T(x) = S(x + u(x)), clamped to [0, 1]."""
    if source.grid.shape != displacement.grid.shape:
        raise FieldError(
            f"source {source.grid.shape} and field {displacement.grid.shape} differ"
        )
    h, w = source.grid.shape
    ygrid, xgrid = np.mgrid[0:h, 0:w].astype(np.float64)
    sampled = _bilinear(
        source.intensity, xgrid + displacement.ux, ygrid + displacement.uy, fill
    )
    return ScalarImage(source.grid, np.clip(sampled, 0.0, 1.0))
