"""KITTI-style scene flow metrics: end-point error, outlier rate, splits.

Scene flow is evaluated as the triple (D1, D2, OF). A pixel is a scene flow
outlier when any of the three components is. Results are reported per
quantity for background (object label 0), foreground (label > 0) and all
pixels, mirroring the layout of the KITTI scene flow tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .assembly import SceneFlowFrame
from .exceptions import EmptyInputError, ShapeError
from .geometry import DisparityMap, FlowField
from .kitti_io import ObjectMap
from .validation import check_same_shape

ABS_THRESHOLD_PX = 3.0
REL_THRESHOLD = 0.05
DEFAULT_PENALTY_CAP = 100.0

QUANTITIES = ("D1", "D2", "OF", "SF")
SPLITS = ("bg", "fg", "all")


class OutlierRule(str, Enum):
    """``KITTI``: err > 3 px AND err > 5 % (devkit). ``PAPER_LITERAL``: OR."""

    KITTI = "kitti"
    PAPER_LITERAL = "paper-literal"


def is_outlier(err, gt_magnitude, rule: OutlierRule | str = OutlierRule.KITTI):
    """Vectorised outlier test; returns a bool or bool array."""
    rule = OutlierRule(rule)
    err = np.asarray(err, dtype=np.float64)
    gt_magnitude = np.asarray(gt_magnitude, dtype=np.float64)
    over_abs = err > ABS_THRESHOLD_PX
    over_rel = err > REL_THRESHOLD * gt_magnitude
    if rule is OutlierRule.KITTI:
        out = over_abs & over_rel
    else:
        out = over_abs | over_rel
    return bool(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class PixelErrors:
    """Per-pixel error of one component against its ground truth.

    ``domain`` is the ground-truth support; ``missing`` marks domain pixels
    without an estimate, whose error is the (capped) ground-truth magnitude
    and which always count as outliers.
    """

    error: np.ndarray
    magnitude: np.ndarray
    domain: np.ndarray
    missing: np.ndarray

    def outliers(self, rule: OutlierRule | str) -> np.ndarray:
        return np.asarray(is_outlier(self.error, self.magnitude, rule)) | self.missing


def pixel_errors(estimate, ground_truth, penalty_cap: float = DEFAULT_PENALTY_CAP) -> PixelErrors:
    check_same_shape(estimate=estimate, ground_truth=ground_truth)
    if isinstance(ground_truth, FlowField) and isinstance(estimate, FlowField):
        gu = np.where(ground_truth.valid, ground_truth.u, 0.0)
        gv = np.where(ground_truth.valid, ground_truth.v, 0.0)
        eu = np.where(estimate.valid, estimate.u, 0.0)
        ev = np.where(estimate.valid, estimate.v, 0.0)
        magnitude = np.hypot(gu, gv)
        error = np.hypot(eu - gu, ev - gv)
    elif isinstance(ground_truth, DisparityMap) and isinstance(estimate, DisparityMap):
        gt = ground_truth.filled(0.0)
        magnitude = np.abs(gt)
        error = np.abs(estimate.filled(0.0) - gt)
    else:
        raise TypeError(
            "estimate and ground truth must both be DisparityMap or both FlowField, got "
            f"{type(estimate).__name__} and {type(ground_truth).__name__}"
        )
    missing = ground_truth.valid & ~estimate.valid
    error = np.where(missing, np.minimum(magnitude, penalty_cap), error)
    return PixelErrors(error, magnitude, ground_truth.valid.copy(), missing)


def _domain(errs: PixelErrors, eval_mask, missing: str) -> np.ndarray:
    if missing not in ("penalize", "exclude"):
        raise ValueError(f"missing must be 'penalize' or 'exclude', got {missing!r}")
    dom = errs.domain.copy()
    if eval_mask is not None:
        eval_mask = np.asarray(eval_mask, dtype=bool)
        if eval_mask.shape != dom.shape:
            raise ShapeError(f"eval_mask has shape {eval_mask.shape}, expected {dom.shape}")
        dom &= eval_mask
    if missing == "exclude":
        dom &= ~errs.missing
    if not dom.any():
        raise EmptyInputError("no pixels to evaluate")
    return dom


def epe(
    estimate,
    ground_truth,
    eval_mask=None,
    missing: str = "penalize",
    penalty_cap: float = DEFAULT_PENALTY_CAP,
) -> float:
    """Mean end-point error over the ground-truth domain.

    ``eval_mask`` (True = evaluate) restricts the domain further.
    ``missing="exclude"`` drops pixels without an estimate instead of
    penalising them.
    """
    errs = pixel_errors(estimate, ground_truth, penalty_cap)
    dom = _domain(errs, eval_mask, missing)
    return float(errs.error[dom].sum() / np.count_nonzero(dom))


def koe(
    estimate,
    ground_truth,
    eval_mask=None,
    rule: OutlierRule | str = OutlierRule.KITTI,
    missing: str = "penalize",
    penalty_cap: float = DEFAULT_PENALTY_CAP,
) -> float:
    """Outlier rate in percent over the evaluated pixels."""
    errs = pixel_errors(estimate, ground_truth, penalty_cap)
    dom = _domain(errs, eval_mask, missing)
    return 100.0 * np.count_nonzero(errs.outliers(rule) & dom) / np.count_nonzero(dom)


@dataclass(frozen=True)
class MetricCell:
    epe: float
    koe: float
    evaluated_pixels: int
    outliers: int

    @classmethod
    def from_counts(cls, error_sum: float, outliers: int, n: int) -> "MetricCell":
        if n == 0:
            return cls(math.nan, math.nan, 0, 0)
        return cls(float(error_sum) / n, 100.0 * outliers / n, int(n), int(outliers))

    @property
    def empty(self) -> bool:
        return self.evaluated_pixels == 0


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Metrics over D1/D2/OF/SF x bg/fg/all.

    The SF cell's ``epe`` is the sum of the three component errors over the
    jointly evaluated pixels, i.e. the report's ``sum_epe``.
    """

    cells: dict = field(repr=False)
    density: float
    masked_mode: bool
    rule: OutlierRule
    total_pixels: int
    kept_pixels: int
    # pixels with all three ground-truth components, and those among them kept
    labeled_pixels: int = 0
    kept_labeled_pixels: int = 0

    def cell(self, quantity: str, split: str = "all") -> MetricCell:
        return self.cells[quantity][split]

    @property
    def sum_epe(self) -> float:
        return self.cells["SF"]["all"].epe

    @property
    def density_labeled(self) -> float:
        """Density over ground-truth-labeled pixels only, in percent.

        ``density`` counts over the whole image.
        """
        if self.labeled_pixels == 0:
            return math.nan
        return 100.0 * self.kept_labeled_pixels / self.labeled_pixels

    def to_kv(self) -> str:
        lines = [
            f"rule={self.rule.value}",
            f"masked={'true' if self.masked_mode else 'false'}",
            f"density={self.density:.6f}",
            f"total_pixels={self.total_pixels}",
            f"kept_pixels={self.kept_pixels}",
            f"density_labeled={_fmt(self.density_labeled, 6)}",
            f"sum_epe={_fmt(self.sum_epe, 6)}",
        ]
        for q in QUANTITIES:
            for s in SPLITS:
                c = self.cells[q][s]
                lines += [
                    f"{q}.{s}.epe={_fmt(c.epe, 6)}",
                    f"{q}.{s}.koe={_fmt(c.koe, 6)}",
                    f"{q}.{s}.n={c.evaluated_pixels}",
                    f"{q}.{s}.outliers={c.outliers}",
                ]
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        return render_table(self)


def _fmt(value: float, digits: int) -> str:
    return "nan" if math.isnan(value) else f"{value:.{digits}f}"


def _split_masks(obj: ObjectMap | None, shape) -> dict[str, np.ndarray]:
    if obj is None:
        fg = np.zeros(shape, dtype=bool)
    else:
        if obj.shape != tuple(shape):
            raise ShapeError(f"object map has dimensions {obj.shape}, expected {tuple(shape)}")
        fg = obj.foreground
    return {"bg": ~fg, "fg": fg, "all": np.ones(shape, dtype=bool)}


def scene_flow_outliers(
    frame: SceneFlowFrame,
    gt: SceneFlowFrame,
    obj: ObjectMap | None = None,
    rule: OutlierRule | str = OutlierRule.KITTI,
    *,
    exclude=None,
    masked: bool = False,
    domain: str = "joint",
    penalty_cap: float = DEFAULT_PENALTY_CAP,
) -> EvalReport:
    """Evaluate an estimated scene flow frame against ground truth.

    Dense mode (``masked=False``) penalises pixels without an estimate.
    Masked mode drops them, together with every pixel set in ``exclude``.

    ``domain="joint"`` evaluates every quantity on the pixels where all
    three ground-truth components are valid, so the SF outlier rate can
    never fall below a component rate. ``domain="component"`` evaluates
    D1, D2 and OF each on its own ground-truth support, as the KITTI devkit
    does.
    """
    rule = OutlierRule(rule)
    if domain not in ("joint", "component"):
        raise ValueError(f"domain must be 'joint' or 'component', got {domain!r}")
    shape = check_same_shape(
        est_d1=frame.d1, est_d2=frame.d2, est_flow=frame.flow,
        gt_d1=gt.d1, gt_d2=gt.d2, gt_flow=gt.flow,
    )
    dropped = np.zeros(shape, dtype=bool)
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=bool)
        if exclude.shape != shape:
            raise ShapeError(f"mask has dimensions {exclude.shape}, expected {shape}")
        dropped |= exclude
    if masked:
        dropped |= ~frame.valid
    kept = ~dropped

    comps = {
        "D1": pixel_errors(frame.d1, gt.d1, penalty_cap),
        "D2": pixel_errors(frame.d2, gt.d2, penalty_cap),
        "OF": pixel_errors(frame.flow, gt.flow, penalty_cap),
    }
    outliers = {q: e.outliers(rule) for q, e in comps.items()}
    joint = kept & comps["D1"].domain & comps["D2"].domain & comps["OF"].domain
    domains = {
        q: joint if domain == "joint" else (e.domain & kept) for q, e in comps.items()
    }
    errors = {q: e.error for q, e in comps.items()}
    errors["SF"] = errors["D1"] + errors["D2"] + errors["OF"]
    outliers["SF"] = outliers["D1"] | outliers["D2"] | outliers["OF"]
    domains["SF"] = joint

    splits = _split_masks(obj, shape)
    cells = {}
    for q in QUANTITIES:
        cells[q] = {}
        for s, split in splits.items():
            sel = domains[q] & split
            n = int(np.count_nonzero(sel))
            cells[q][s] = MetricCell.from_counts(
                errors[q][sel].sum(), int(np.count_nonzero(outliers[q] & sel)), n
            )

    total = int(np.prod(shape))
    estimated = kept if masked else frame.valid
    labeled = gt.d1.valid & gt.d2.valid & gt.flow.valid
    return EvalReport(
        cells=cells,
        density=100.0 * np.count_nonzero(estimated) / total,
        masked_mode=masked,
        rule=rule,
        total_pixels=total,
        kept_pixels=int(np.count_nonzero(estimated)),
        labeled_pixels=int(np.count_nonzero(labeled)),
        kept_labeled_pixels=int(np.count_nonzero(labeled & estimated)),
    )


def evaluate_masked(
    frame: SceneFlowFrame,
    gt: SceneFlowFrame,
    obj: ObjectMap | None,
    mask,
    rule: OutlierRule | str = OutlierRule.KITTI,
    **kwargs,
) -> EvalReport:
    """Evaluate only where ``mask`` is False and the estimate is valid."""
    return scene_flow_outliers(frame, gt, obj, rule, exclude=mask, masked=True, **kwargs)


def aggregate(reports: list[EvalReport]) -> EvalReport:
    """Pool pixel counts over several frames (the devkit's averaging)."""
    if not reports:
        raise EmptyInputError("no reports to aggregate")
    rules = {r.rule for r in reports}
    if len(rules) != 1:
        raise ValueError("cannot aggregate reports computed with different outlier rules")
    cells = {}
    for q in QUANTITIES:
        cells[q] = {}
        for s in SPLITS:
            parts = [r.cells[q][s] for r in reports if not r.cells[q][s].empty]
            n = sum(c.evaluated_pixels for c in parts)
            error_sum = math.fsum(c.epe * c.evaluated_pixels for c in parts)
            cells[q][s] = MetricCell.from_counts(error_sum, sum(c.outliers for c in parts), n)
    total = sum(r.total_pixels for r in reports)
    kept = sum(r.kept_pixels for r in reports)
    return EvalReport(
        cells=cells,
        density=100.0 * kept / total,
        masked_mode=all(r.masked_mode for r in reports),
        rule=reports[0].rule,
        total_pixels=total,
        kept_pixels=kept,
        labeled_pixels=sum(r.labeled_pixels for r in reports),
        kept_labeled_pixels=sum(r.kept_labeled_pixels for r in reports),
    )


def render_table(report: EvalReport) -> str:
    """Fixed-width table, two decimals, in the D1/D2/OF/SF x bg/fg/all layout."""
    col = 8
    label = 10
    head1 = " " * label + "".join(f"{q:^{3 * col}}" for q in QUANTITIES)
    head2 = " " * label + "".join(f"{s:>{col}}" for _ in QUANTITIES for s in SPLITS)
    rows = []
    for name, attr in (("KOE [%]", "koe"), ("EPE [px]", "epe")):
        cells = []
        for q in QUANTITIES:
            for s in SPLITS:
                val = getattr(report.cells[q][s], attr)
                cells.append(f"{'--' if math.isnan(val) else f'{val:.2f}':>{col}}")
        rows.append(f"{name:<{label}}" + "".join(cells))
    mode = "masked" if report.masked_mode else "dense"
    footer = [
        f"sum EPE   {_fmt(report.sum_epe, 2)} px",
        f"density   {report.density:.2f} %  ({_fmt(report.density_labeled, 2)} % of labeled)",
        f"rule      {report.rule.value}",
        f"mode      {mode}",
    ]
    return "\n".join([head1, head2, *rows, *footer]) + "\n"


def parse_report(text: str) -> dict[str, float | str]:
    """Parse ``metric=value`` lines; numeric values become floats."""
    out: dict[str, float | str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = key.strip(), value.strip()
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out


def check_thresholds(report: EvalReport, thresholds: dict[str, float]) -> list[str]:
    """Return a message for every metric above its threshold.

    Keys are ``sum_epe`` or ``<quantity>.<split>.<epe|koe>``.
    """
    values = parse_report(report.to_kv())
    violations = []
    for key, limit in sorted(thresholds.items()):
        if key not in values or isinstance(values[key], str):
            raise KeyError(f"unknown threshold metric {key!r}")
        val = values[key]
        if not math.isnan(val) and val > limit:
            violations.append(f"{key}={val:.4f} exceeds threshold {limit}")
    return violations
