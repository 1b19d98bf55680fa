"""Pixel-grid containers and the pinhole depth/disparity relation.

Conventions used throughout the package: arrays are indexed ``[row, col]``,
pixel coordinates are ``(x=col, y=row)`` with the origin at the top-left
pixel centre, and all per-pixel arithmetic is float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, ShapeError

DEFAULT_DEPTH_CAP = 100.0


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_grid(values, name: str) -> np.ndarray:
    out = np.array(values, dtype=np.float64, copy=True)
    if out.ndim != 2 or out.size == 0:
        raise ShapeError(f"{name} must be a non-empty 2D grid, got shape {out.shape}")
    return out


def _as_mask(valid, shape: tuple[int, int], name: str) -> np.ndarray:
    out = np.array(valid, dtype=bool, copy=True)
    if out.shape != shape:
        raise ShapeError(f"{name} mask has shape {out.shape}, expected {shape}")
    return out


def first_pixel(mask: np.ndarray) -> tuple[int, int]:
    """``(x, y)`` of the first true pixel in raster order."""
    row, col = np.unravel_index(int(np.argmax(mask)), mask.shape)
    return int(col), int(row)


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length_px: float
    baseline_m: float

    def __post_init__(self):
        f, b = float(self.focal_length_px), float(self.baseline_m)
        if not np.isfinite(f) or f <= 0:
            raise DomainError(f"focal length must be positive, got {self.focal_length_px}")
        if not np.isfinite(b) or b <= 0:
            raise DomainError(f"baseline must be positive, got {self.baseline_m}")
        object.__setattr__(self, "focal_length_px", f)
        object.__setattr__(self, "baseline_m", b)

    @property
    def fb(self) -> float:
        return self.focal_length_px * self.baseline_m


@dataclass(frozen=True)
class PixelCoord:
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise DomainError(f"pixel coordinate must be finite, got ({self.x}, {self.y})")


class _Grid:
    values: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def density(self) -> float:
        return float(np.count_nonzero(self.valid)) / self.valid.size

    @property
    def is_dense(self) -> bool:
        return bool(self.valid.all())

    def filled(self, fill_value: float = 0.0) -> np.ndarray:
        """Values with invalid pixels replaced by ``fill_value``."""
        return np.where(self.valid, self.values, fill_value)


@dataclass(frozen=True, eq=False)
class DisparityMap(_Grid):
    """Per-pixel (virtual) disparity in pixels with a validity mask.

    Values at invalid pixels are carried along untouched but carry no meaning.
    """

    values: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        values = _as_grid(self.values, "disparity")
        if self.valid is None:
            valid = np.isfinite(values) & (values > 0)
        else:
            valid = _as_mask(self.valid, values.shape, "disparity")
        bad = valid & ~(np.isfinite(values) & (values > 0))
        if bad.any():
            x, y = first_pixel(bad)
            raise DomainError(
                f"disparity must be positive at valid pixels; pixel (x={x}, y={y}) "
                f"holds {values[y, x]!r}"
            )
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def dense(cls, values) -> "DisparityMap":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.ones(values.shape, dtype=bool))


@dataclass(frozen=True, eq=False)
class DepthMap(_Grid):
    """Per-pixel metric depth with a validity mask.

    Valid depths above ``depth_cap`` are clamped to it on construction; pass
    ``depth_cap=None`` to keep values as they are.
    """

    values: np.ndarray
    valid: np.ndarray = None
    depth_cap: float | None = DEFAULT_DEPTH_CAP

    def __post_init__(self):
        values = _as_grid(self.values, "depth")
        if self.valid is None:
            valid = np.isfinite(values) & (values > 0)
        else:
            valid = _as_mask(self.valid, values.shape, "depth")
        bad = valid & ~(np.isfinite(values) & (values > 0))
        if bad.any():
            x, y = first_pixel(bad)
            raise DomainError(
                f"depth must be positive at valid pixels; pixel (x={x}, y={y}) "
                f"holds {values[y, x]!r}"
            )
        if self.depth_cap is not None:
            if not self.depth_cap > 0:
                raise DomainError(f"depth cap must be positive, got {self.depth_cap}")
            np.minimum(values, self.depth_cap, out=values, where=valid)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel 2D displacement ``(u, v)`` from frame t1 to frame t2."""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        u = _as_grid(self.u, "flow u")
        v = _as_grid(self.v, "flow v")
        if u.shape != v.shape:
            raise ShapeError(f"flow components differ in shape: {u.shape} vs {v.shape}")
        finite = np.isfinite(u) & np.isfinite(v)
        if self.valid is None:
            valid = finite
        else:
            valid = _as_mask(self.valid, u.shape, "flow")
        bad = valid & ~finite
        if bad.any():
            x, y = first_pixel(bad)
            raise DomainError(f"flow must be finite at valid pixels; pixel (x={x}, y={y})")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "v", _frozen(v))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_uv(cls, uv, valid=None) -> "FlowField":
        uv = np.asarray(uv, dtype=np.float64)
        if uv.ndim != 3 or uv.shape[2] != 2:
            raise ShapeError(f"expected an (H, W, 2) array, got {uv.shape}")
        return cls(uv[..., 0], uv[..., 1], valid)

    @classmethod
    def zeros(cls, shape: tuple[int, int]) -> "FlowField":
        return cls(np.zeros(shape), np.zeros(shape), np.ones(shape, dtype=bool))

    @property
    def uv(self) -> np.ndarray:
        return np.stack([self.u, self.v], axis=-1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def density(self) -> float:
        return float(np.count_nonzero(self.valid)) / self.valid.size

    @property
    def is_dense(self) -> bool:
        return bool(self.valid.all())

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


def pixel_grid(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Column and row coordinate grids ``(x, y)`` as float64."""
    h, w = shape
    y, x = np.mgrid[0:h, 0:w]
    return x.astype(np.float64), y.astype(np.float64)


def depth_to_disparity(depth: DepthMap, cam: CameraIntrinsics) -> DisparityMap:
    """Virtual disparity ``f * B / D`` at every valid pixel.

    Invalid pixels stay invalid and keep their stored value.
    """
    bad = depth.valid & ~(depth.values > 0)
    if bad.any():
        x, y = first_pixel(bad)
        raise DomainError(f"non-positive depth at pixel (x={x}, y={y})")
    values = depth.values.copy()
    np.divide(cam.fb, depth.values, out=values, where=depth.valid)
    return DisparityMap(values, depth.valid)


def disparity_to_depth(
    disp: DisparityMap, cam: CameraIntrinsics, depth_cap: float | None = None
) -> DepthMap:
    bad = disp.valid & ~(disp.values > 0)
    if bad.any():
        x, y = first_pixel(bad)
        raise DomainError(f"non-positive disparity at pixel (x={x}, y={y})")
    values = disp.values.copy()
    np.divide(cam.fb, disp.values, out=values, where=disp.valid)
    return DepthMap(values, disp.valid, depth_cap=depth_cap)
