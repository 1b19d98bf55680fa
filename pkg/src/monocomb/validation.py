"""Input checks shared by the functional API and the estimator wrappers."""
from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ShapeError
from .geometry import DepthMap, DisparityMap, FlowField


def _shape_of(obj) -> tuple[int, ...]:
    shape = getattr(obj, "shape", None)
    if shape is None:
        shape = np.shape(obj)
    return tuple(shape)


def check_same_shape(**named) -> tuple[int, int]:
    """Raise ``ShapeError`` unless all named grids share one ``(H, W)``.

    Guide images may carry a trailing channel axis.
    """
    shapes = {name: _shape_of(obj)[:2] for name, obj in named.items()}
    distinct = set(shapes.values())
    if len(distinct) > 1:
        desc = ", ".join(f"{name}={shape}" for name, shape in shapes.items())
        raise ShapeError(f"inputs must share dimensions: {desc}")
    return next(iter(distinct))


def check_guide(guide, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Return the guide as float64 ``(H, W, C)`` with values in ``[0, 1]``."""
    image = np.asarray(guide, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise ShapeError(f"guide must be (H, W), (H, W, 1) or (H, W, 3), got {image.shape}")
    if shape is not None and image.shape[:2] != tuple(shape):
        raise ShapeError(f"guide has dimensions {image.shape[:2]}, expected {tuple(shape)}")
    if not np.all(np.isfinite(image)) or image.min() < 0 or image.max() > 1:
        raise ValueError("guide intensities must be finite and lie in [0, 1]")
    return image


def as_disparity_map(X) -> DisparityMap:
    """Accept a ``DisparityMap`` or an array where 0/NaN mark invalid pixels."""
    if isinstance(X, DisparityMap):
        return X
    return DisparityMap(X)


def as_depth_map(X, depth_cap=None) -> DepthMap:
    if isinstance(X, DepthMap):
        return X
    return DepthMap(X, depth_cap=depth_cap)


def as_flow_field(X) -> FlowField:
    if isinstance(X, FlowField):
        return X
    return FlowField.from_uv(X)


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
