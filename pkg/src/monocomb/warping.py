"""Registration of t2 geometry into the t1 frame along the optical flow.

``warp_disparity`` gathers ``d2(p + u(p))`` by bilinear sampling,
``build_occlusion_mask`` resolves collisions of rounded flow targets with a
z-buffer rule (the closest source, i.e. the largest disparity, survives) and
``refine_mask`` cleans the mask with 3x3 closing and opening.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import ShapeError
from .geometry import DisparityMap, FlowField
from .validation import check_same_shape

_SQUARE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class WarpResult:
    """Warped disparity plus the bookkeeping of why pixels were dropped.

    ``occlusion``, ``out_of_view`` and ``unsupported`` partition the invalid
    pixels of ``warped``: every pixel is in at most one of them.
    """

    warped: DisparityMap
    occlusion: np.ndarray
    out_of_view: np.ndarray
    unsupported: np.ndarray

    @property
    def density(self) -> float:
        return self.warped.density

    @property
    def combined_mask(self) -> np.ndarray:
        return self.occlusion | self.out_of_view


def flow_targets(flow: FlowField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous targets ``p + u(p)`` and whether they lie inside the image.

    The image domain is the closed box spanned by the pixel centres,
    ``[0, W-1] x [0, H-1]``. Flow-invalid pixels are never in view.
    """
    h, w = flow.shape
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)[:, None]
    tx = cols + np.where(flow.valid, flow.u, 0.0)
    ty = rows + np.where(flow.valid, flow.v, 0.0)
    in_view = flow.valid & (tx >= 0) & (tx <= w - 1) & (ty >= 0) & (ty <= h - 1)
    return tx, ty, in_view


def _bilinear_rows(values, valid, tx, ty, in_view):
    h, w = values.shape
    x0 = np.floor(np.where(in_view, tx, 0.0))
    y0 = np.floor(np.where(in_view, ty, 0.0))
    # keep x0 + 1 inside the image; the right/bottom edge then gets weight fx = 1
    x0 = np.minimum(x0, max(w - 2, 0))
    y0 = np.minimum(y0, max(h - 2, 0))
    fx = np.where(in_view, tx, 0.0) - x0
    fy = np.where(in_view, ty, 0.0) - y0
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    total = np.zeros(tx.shape)
    weight = np.zeros(tx.shape)
    for yy, xx, wgt in (
        (y0, x0, (1.0 - fx) * (1.0 - fy)),
        (y0, x1, fx * (1.0 - fy)),
        (y1, x0, (1.0 - fx) * fy),
        (y1, x1, fx * fy),
    ):
        ok = valid[yy, xx] & in_view
        wgt = np.where(ok, wgt, 0.0)
        total += wgt * np.where(ok, values[yy, xx], 0.0)
        weight += wgt
    supported = in_view & (weight > 0)
    sample = np.divide(total, weight, out=np.zeros(tx.shape), where=supported)
    return sample, supported


def _row_chunks(h: int, jobs: int) -> list[slice]:
    jobs = max(1, min(int(jobs), h))
    bounds = np.linspace(0, h, jobs + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _sample(d2: DisparityMap, flow: FlowField, jobs: int = 1):
    tx, ty, in_view = flow_targets(flow)
    values, valid = d2.values, d2.valid
    if jobs <= 1:
        sample, supported = _bilinear_rows(values, valid, tx, ty, in_view)
        return sample, supported, in_view
    sample = np.zeros(tx.shape)
    supported = np.zeros(tx.shape, dtype=bool)

    def work(rows: slice):
        sample[rows], supported[rows] = _bilinear_rows(
            values, valid, tx[rows], ty[rows], in_view[rows]
        )

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        list(pool.map(work, _row_chunks(tx.shape[0], jobs)))
    return sample, supported, in_view


def warp_disparity(d2: DisparityMap, flow: FlowField, jobs: int = 1) -> DisparityMap:
    """Sample ``d2`` at ``p + u(p)`` for every pixel ``p``.

    Bilinear weights are renormalised over the valid neighbours; a sample is
    invalid when the target leaves the image or none of its weighted
    neighbours is valid. ``jobs > 1`` splits rows across threads with
    bit-identical results.
    """
    check_same_shape(d2=d2, flow=flow)
    sample, supported, _ = _sample(d2, flow, jobs)
    return DisparityMap(sample, supported)


def round_targets(tx: np.ndarray, ty: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Round-half-up per coordinate."""
    return np.floor(tx + 0.5).astype(np.intp), np.floor(ty + 0.5).astype(np.intp)


def build_occlusion_mask(d1: DisparityMap, flow: FlowField) -> np.ndarray:
    """Mask every source pixel that loses a collision of rounded flow targets.

    Within each bucket of sources sharing a rounded in-view target, the one
    with the largest ``d1`` (the closest point) is kept; ties go to the
    smallest raster index. Sources without a collision are never masked, and
    sources whose target leaves the image take no part in any bucket.
    Pixels with invalid ``d1`` lose every collision they are part of.
    """
    check_same_shape(d1=d1, flow=flow)
    h, w = flow.shape
    tx, ty, in_view = flow_targets(flow)
    rx, ry = round_targets(tx, ty)

    src = np.flatnonzero(in_view)
    bucket = (ry.ravel()[src] * w + rx.ravel()[src])
    disp = np.where(d1.valid, d1.values, -np.inf).ravel()[src]

    best = np.full(h * w, -np.inf)
    np.maximum.at(best, bucket, disp)
    contender = disp == best[bucket]
    first = np.full(h * w, h * w, dtype=np.intp)
    np.minimum.at(first, bucket[contender], src[contender])

    mask = np.zeros(h * w, dtype=bool)
    mask[src] = first[bucket] != src
    return mask.reshape(h, w)


def _dilate(mask):
    return ndimage.binary_dilation(mask, _SQUARE, border_value=0)


def _erode(mask):
    # outside the image counts as "set" so that erosion never eats into bands
    # touching the border (out-of-view regions always do)
    return ndimage.binary_erosion(mask, _SQUARE, border_value=1)


def refine_mask(mask: np.ndarray, iterations: int = 2) -> np.ndarray:
    """``iterations`` rounds of 3x3 closing, then ``iterations`` rounds of opening."""
    out = np.asarray(mask, dtype=bool)
    if out.ndim != 2:
        raise ShapeError(f"mask must be 2D, got shape {out.shape}")
    for _ in range(iterations):
        out = _erode(_dilate(out))
    for _ in range(iterations):
        out = _dilate(_erode(out))
    return out


def warp_with_occlusion(
    d1: DisparityMap,
    d2: DisparityMap,
    flow: FlowField,
    iterations: int = 2,
    morphology: str = "combined",
    jobs: int = 1,
) -> WarpResult:
    """Warp ``d2`` into the t1 frame and drop occluded and out-of-view pixels.

    ``morphology="combined"`` refines the union of geometric occlusion and
    out-of-view pixels; ``"occlusion"`` refines only the geometric part.
    Out-of-view pixels are exact and always stay masked.
    """
    if morphology not in ("combined", "occlusion"):
        raise ValueError(f"morphology must be 'combined' or 'occlusion', got {morphology!r}")
    check_same_shape(d1=d1, d2=d2, flow=flow)
    sample, supported, in_view = _sample(d2, flow, jobs)
    out_of_view = flow.valid & ~in_view
    raw = build_occlusion_mask(d1, flow)
    if morphology == "combined":
        refined = refine_mask(raw | out_of_view, iterations)
    else:
        refined = refine_mask(raw, iterations)
    occlusion = refined & ~out_of_view
    valid = supported & ~occlusion & ~out_of_view
    unsupported = ~valid & ~occlusion & ~out_of_view
    return WarpResult(
        warped=DisparityMap(sample, valid),
        occlusion=occlusion,
        out_of_view=out_of_view,
        unsupported=unsupported,
    )
