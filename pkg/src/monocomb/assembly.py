"""Packaging of the (d1, d2 registered to t1, flow) scene flow triple."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import PreconditionError
from .geometry import DisparityMap, FlowField
from .validation import check_same_shape
from .warping import WarpResult


@dataclass(frozen=True, eq=False)
class SceneFlowFrame:
    """Scene flow in image space, all components on the t1 pixel grid."""

    d1: DisparityMap
    d2: DisparityMap
    flow: FlowField

    def __post_init__(self):
        check_same_shape(d1=self.d1, d2=self.d2, flow=self.flow)

    @property
    def shape(self) -> tuple[int, int]:
        return self.d1.shape

    @property
    def valid(self) -> np.ndarray:
        """Pixels where all three components carry an estimate."""
        return self.d1.valid & self.d2.valid & self.flow.valid

    @property
    def density(self) -> float:
        return float(np.count_nonzero(self.valid)) / self.valid.size

    @property
    def is_dense(self) -> bool:
        return bool(self.valid.all())


def assemble_sparse(d1: DisparityMap, warp: WarpResult, flow: FlowField) -> SceneFlowFrame:
    """Non-dense scene flow from the warping stage.

    ``d1`` and ``flow`` inherit the validity of the warped disparity, so
    occluded and out-of-view pixels drop out of every component.
    """
    check_same_shape(d1=d1, warped=warp.warped, flow=flow)
    keep = warp.warped.valid
    return SceneFlowFrame(
        d1=DisparityMap(d1.values, d1.valid & keep),
        d2=warp.warped,
        flow=FlowField(flow.u, flow.v, flow.valid & keep),
    )


def assemble_dense(d1r: DisparityMap, d2i: DisparityMap, flow: FlowField) -> SceneFlowFrame:
    check_same_shape(d1=d1r, d2=d2i, flow=flow)
    for name, comp in (("d1", d1r), ("d2", d2i), ("flow", flow)):
        if not comp.is_dense:
            raise PreconditionError(
                f"assemble_dense needs dense inputs; {name} has density {comp.density:.4f}"
            )
    return SceneFlowFrame(d1r, d2i, flow)
