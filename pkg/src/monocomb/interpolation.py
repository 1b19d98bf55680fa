"""Image-guided sparse-to-dense interpolation of disparity maps.

Gaps are filled by edge-aware diffusion: every missing pixel becomes the
weighted mean of its grid neighbours, with weights
``exp(-edge_weight * |I(p) - I(q)|^2)`` taken from the guidance image, while
valid pixels stay fixed as anchors. The fixpoint of that averaging is the
solution of a sparse symmetric positive definite system.

Two solvers reach it: ``"direct"`` factorises the system once, ``"jacobi"``
runs the averaging sweeps literally until the largest update drops below
``tol`` or ``smoothing_iterations`` sweeps have run.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .exceptions import EmptyInputError, PreconditionError
from .geometry import DisparityMap
from .validation import check_guide, check_positive_int


@dataclass(frozen=True)
class InterpolatorConfig:
    """Parameters of the edge-aware diffusion.

    ``min_weight`` floors the neighbour weights so that regions cut off from
    every anchor by strong edges still receive a well-conditioned value.
    ``refine`` switches the dense refinement pass on; off means identity.
    """

    edge_weight: float = 50.0
    smoothing_iterations: int = 5000
    neighborhood: int = 4
    solver: str = "direct"
    tol: float = 1e-4
    min_weight: float = 1e-6
    refine: bool = False
    refine_iterations: int = 10

    def __post_init__(self):
        if not (np.isfinite(self.edge_weight) and self.edge_weight >= 0):
            raise ValueError(f"edge_weight must be >= 0, got {self.edge_weight}")
        check_positive_int(self.smoothing_iterations, "smoothing_iterations")
        check_positive_int(self.refine_iterations, "refine_iterations")
        if self.neighborhood not in (4, 8):
            raise ValueError(f"neighborhood must be 4 or 8, got {self.neighborhood}")
        if self.solver not in ("direct", "jacobi"):
            raise ValueError(f"solver must be 'direct' or 'jacobi', got {self.solver!r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0 < self.min_weight <= 1:
            raise ValueError(f"min_weight must lie in (0, 1], got {self.min_weight}")


def _offsets(neighborhood: int):
    """Neighbour offsets ``(dy, dx)``, one per undirected edge orientation."""
    if neighborhood == 4:
        return ((0, 1), (1, 0))
    return ((0, 1), (1, 0), (1, 1), (1, -1))


def _span(n: int, d: int) -> tuple[slice, slice]:
    """Slices selecting ``a`` and ``a + d`` along one axis of length ``n``."""
    if d >= 0:
        return slice(0, n - d), slice(d, n)
    return slice(-d, n), slice(0, n + d)


def edge_weights(guide: np.ndarray, cfg: InterpolatorConfig) -> list[tuple[int, int, np.ndarray]]:
    """Weights of all grid edges, grouped by offset.

    Each entry ``(dy, dx, w)`` holds ``w[a]`` for the edge between pixel
    ``a`` and pixel ``a + (dy, dx)`` over the overlapping region.
    """
    h, w = guide.shape[:2]
    out = []
    for dy, dx in _offsets(cfg.neighborhood):
        ys_a, ys_b = _span(h, dy)
        xs_a, xs_b = _span(w, dx)
        diff = guide[ys_a, xs_a] - guide[ys_b, xs_b]
        dist2 = np.einsum("...c,...c->...", diff, diff)
        wgt = np.maximum(np.exp(-cfg.edge_weight * dist2), cfg.min_weight)
        if dy != 0 and dx != 0:
            wgt = wgt / np.sqrt(2.0)
        out.append((dy, dx, wgt))
    return out


def _neighbour_sums(x: np.ndarray, weights) -> tuple[np.ndarray, np.ndarray]:
    """``sum_q w_pq * (x_q - x_p)`` and ``sum_q w_pq`` for every pixel ``p``.

    Each edge contributes ``+w*(x_b - x_a)`` to ``a`` and ``w*(x_a - x_b)``
    to ``b``; pairing opposite directions keeps the sum exactly symmetric
    under image flips.
    """
    h, w = x.shape
    flux = np.zeros((h, w))
    wsum = np.zeros((h, w))
    for dy, dx, wgt in weights:
        ys_a, ys_b = _span(h, dy)
        xs_a, xs_b = _span(w, dx)
        delta = wgt * (x[ys_b, xs_b] - x[ys_a, xs_a])
        # both directions of one orientation are summed first, so that a flip
        # only swaps the operands of a single (commutative) addition
        f = np.zeros((h, w))
        s = np.zeros((h, w))
        f[ys_a, xs_a] = delta
        f[ys_b, xs_b] -= delta
        s[ys_a, xs_a] = wgt
        s[ys_b, xs_b] += wgt
        flux += f
        wsum += s
    return flux, wsum


def _solve_jacobi(values, valid, weights, cfg) -> np.ndarray:
    # midpoint start: independent of traversal order, so flips commute exactly
    lo, hi = values[valid].min(), values[valid].max()
    x = np.where(valid, values, lo + (hi - lo) / 2)
    gaps = ~valid
    for _ in range(cfg.smoothing_iterations):
        flux, wsum = _neighbour_sums(x, weights)
        update = np.where(gaps, flux / wsum, 0.0)
        x = x + update
        if np.abs(update).max() < cfg.tol:
            break
    return x


def _solve_direct(values, valid, weights) -> np.ndarray:
    h, w = values.shape
    unknown = ~valid
    n = int(np.count_nonzero(unknown))
    index = np.full((h, w), -1, dtype=np.int64)
    index[unknown] = np.arange(n)
    anchors = np.where(valid, values, 0.0)

    diag = np.zeros((h, w))
    rhs = np.zeros((h, w))
    rows, cols, data = [], [], []
    for dy, dx, wgt in weights:
        ys_a, ys_b = _span(h, dy)
        xs_a, xs_b = _span(w, dx)
        ia, ib = index[ys_a, xs_a], index[ys_b, xs_b]
        diag[ys_a, xs_a] += wgt
        diag[ys_b, xs_b] += wgt
        rhs[ys_a, xs_a] += np.where(ib < 0, wgt * anchors[ys_b, xs_b], 0.0)
        rhs[ys_b, xs_b] += np.where(ia < 0, wgt * anchors[ys_a, xs_a], 0.0)
        both = (ia >= 0) & (ib >= 0)
        ea, eb, ew = ia[both], ib[both], wgt[both]
        rows += [ea, eb]
        cols += [eb, ea]
        data += [-ew, -ew]
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    data.append(diag[unknown])
    system = sp.csc_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    out = np.where(valid, values, 0.0)
    out[unknown] = spsolve(system, rhs[unknown])
    return out


def _mirror_order(values, valid, image) -> int:
    """-1, 0 or 1 as the problem sorts before, equal to or after its mirror image."""
    key = np.concatenate([valid.ravel(), values.ravel(), image.ravel()])
    mirrored = np.concatenate(
        [valid[:, ::-1].ravel(), values[:, ::-1].ravel(), image[:, ::-1].ravel()]
    )
    differ = np.flatnonzero(key != mirrored)
    if differ.size == 0:
        return 0
    return -1 if key[differ[0]] < mirrored[differ[0]] else 1


def _solve_direct_canonical(values, valid, image, cfg) -> np.ndarray:
    # The factorisation's round-off depends on pixel order. Solving whichever
    # of the problem and its left-right mirror sorts first makes the output
    # commute exactly with horizontal flips.
    order = _mirror_order(values, valid, image)
    if order <= 0:
        out = _solve_direct(values, valid, edge_weights(image, cfg))
        return (out + out[:, ::-1]) / 2 if order == 0 else out
    mirrored = _solve_direct(
        values[:, ::-1], valid[:, ::-1], edge_weights(np.ascontiguousarray(image[:, ::-1]), cfg)
    )
    return mirrored[:, ::-1]


def interpolate(
    sparse: DisparityMap, guide, cfg: InterpolatorConfig | None = None
) -> DisparityMap:
    """Fill every invalid pixel of ``sparse``; valid pixels are returned unchanged.

    The result is dense and never leaves ``[min, max]`` of the valid inputs.
    """
    cfg = cfg or InterpolatorConfig()
    image = check_guide(guide, sparse.shape)
    valid = sparse.valid
    if not valid.any():
        raise EmptyInputError("cannot interpolate a map without valid pixels")
    values = np.where(valid, sparse.values, 0.0)
    if valid.all():
        return DisparityMap(values, valid)

    if cfg.solver == "direct":
        out = _solve_direct_canonical(values, valid, image, cfg)
    else:
        out = _solve_jacobi(values, valid, edge_weights(image, cfg), cfg)
    lo, hi = values[valid].min(), values[valid].max()
    # the exact fixpoint obeys the maximum principle; clip solver round-off
    out = np.where(valid, values, np.clip(out, lo, hi))
    return DisparityMap(out, np.ones(out.shape, dtype=bool))


def refine_dense(
    dense: DisparityMap, guide, cfg: InterpolatorConfig | None = None
) -> DisparityMap:
    """Edge-aware smoothing of an already dense map.

    Identity unless ``cfg.refine`` is set; then ``cfg.refine_iterations``
    sweeps of ``x += sum w (x_q - x) / (1 + sum w)`` are applied.
    """
    cfg = cfg or InterpolatorConfig()
    if not dense.is_dense:
        raise PreconditionError(
            f"refine_dense needs a dense map, got density {dense.density:.4f}"
        )
    image = check_guide(guide, dense.shape)
    if not cfg.refine:
        return dense
    weights = edge_weights(image, cfg)
    x = dense.values.copy()
    for _ in range(cfg.refine_iterations):
        flux, wsum = _neighbour_sums(x, weights)
        x = x + flux / (1.0 + wsum)
    return DisparityMap(x, np.ones(x.shape, dtype=bool))
