"""scikit-learn style wrappers around the functional pipeline.

The stages are stateless or nearly so, but exposing them as estimators
gives ``get_params``/``set_params``/``clone`` and lets them be configured and
swapped the same way as any other scikit-learn component.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError  # noqa: F401  (re-exported)
from sklearn.utils.validation import check_is_fitted

from .assembly import SceneFlowFrame, assemble_dense, assemble_sparse
from .geometry import (
    DEFAULT_DEPTH_CAP,
    CameraIntrinsics,
    DepthMap,
    depth_to_disparity,
    disparity_to_depth,
)
from .interpolation import InterpolatorConfig, edge_weights, interpolate, refine_dense
from .validation import (
    as_depth_map,
    as_disparity_map,
    as_flow_field,
    check_guide,
    check_positive_int,
    check_same_shape,
)
from .warping import WarpResult, warp_disparity, warp_with_occlusion


class DisparityConverter(TransformerMixin, BaseEstimator):
    """Depth (meters) to virtual disparity (pixels) via ``f * B / D``.

    ``transform`` accepts a ``DepthMap`` or an array in which 0/NaN mark
    missing depth; valid depths above ``depth_cap`` are clamped first.
    """

    def __init__(self, focal_length_px=None, baseline_m=None, depth_cap=DEFAULT_DEPTH_CAP):
        self.focal_length_px = focal_length_px
        self.baseline_m = baseline_m
        self.depth_cap = depth_cap

    def fit(self, X=None, y=None):
        if self.focal_length_px is None or self.baseline_m is None:
            raise ValueError("focal_length_px and baseline_m must be set")
        self.camera_ = CameraIntrinsics(self.focal_length_px, self.baseline_m)
        return self

    def transform(self, X):
        check_is_fitted(self, "camera_")
        depth = as_depth_map(X, depth_cap=self.depth_cap)
        depth = DepthMap(depth.values, depth.valid, depth_cap=self.depth_cap)
        return depth_to_disparity(depth, self.camera_)

    def inverse_transform(self, X):
        check_is_fitted(self, "camera_")
        return disparity_to_depth(as_disparity_map(X), self.camera_)


class OcclusionAwareWarper(BaseEstimator):
    """Register t2 geometry into the t1 frame.

    ``fit(d1, flow)`` derives the occlusion and out-of-view masks from the
    t1 disparity and the flow; ``transform(d2)`` warps any t2 disparity map
    with that flow and drops the masked pixels.
    """

    def __init__(self, iterations=2, morphology="combined", n_jobs=1):
        self.iterations = iterations
        self.morphology = morphology
        self.n_jobs = n_jobs

    def fit(self, d1, flow):
        check_positive_int(self.iterations, "iterations", minimum=0)
        check_positive_int(self.n_jobs, "n_jobs")
        d1 = as_disparity_map(d1)
        flow = as_flow_field(flow)
        check_same_shape(d1=d1, flow=flow)
        self.d1_ = d1
        self.flow_ = flow
        self.shape_ = flow.shape
        self.result_ = None
        return self

    def transform(self, d2) -> WarpResult:
        check_is_fitted(self, "flow_")
        self.result_ = warp_with_occlusion(
            self.d1_, as_disparity_map(d2), self.flow_,
            iterations=self.iterations, morphology=self.morphology, jobs=self.n_jobs,
        )
        self.occlusion_mask_ = self.result_.occlusion
        self.out_of_view_mask_ = self.result_.out_of_view
        return self.result_

    def fit_transform(self, d1, flow, d2) -> WarpResult:
        return self.fit(d1, flow).transform(d2)

    def warp_only(self, d2):
        """Plain bilinear warp without any masking."""
        check_is_fitted(self, "flow_")
        return warp_disparity(as_disparity_map(d2), self.flow_, jobs=self.n_jobs)


class EdgeAwareInterpolator(TransformerMixin, BaseEstimator):
    """Image-guided gap filling; ``fit`` takes the guidance image."""

    def __init__(
        self,
        edge_weight=50.0,
        smoothing_iterations=5000,
        neighborhood=4,
        solver="direct",
        tol=1e-4,
        min_weight=1e-6,
        refine=False,
        refine_iterations=10,
    ):
        self.edge_weight = edge_weight
        self.smoothing_iterations = smoothing_iterations
        self.neighborhood = neighborhood
        self.solver = solver
        self.tol = tol
        self.min_weight = min_weight
        self.refine = refine
        self.refine_iterations = refine_iterations

    @property
    def config(self) -> InterpolatorConfig:
        return InterpolatorConfig(**self.get_params())

    def fit(self, X, y=None):
        cfg = self.config
        self.guide_ = check_guide(X)
        self.n_edges_ = sum(w.size for _, _, w in edge_weights(self.guide_, cfg))
        return self

    def transform(self, X):
        check_is_fitted(self, "guide_")
        return interpolate(as_disparity_map(X), self.guide_, self.config)

    def refine_dense(self, X):
        check_is_fitted(self, "guide_")
        return refine_dense(as_disparity_map(X), self.guide_, self.config)


class MonoComb(BaseEstimator):
    """The full combination: convert, warp, interpolate, refine, assemble.

    ``predict`` takes the two monocular depth maps, the forward flow and the
    reference image and returns a dense ``SceneFlowFrame``.
    """

    def __init__(
        self,
        focal_length_px=None,
        baseline_m=None,
        depth_cap=DEFAULT_DEPTH_CAP,
        warper=None,
        interpolator=None,
    ):
        self.focal_length_px = focal_length_px
        self.baseline_m = baseline_m
        self.depth_cap = depth_cap
        self.warper = warper
        self.interpolator = interpolator

    def fit(self, X=None, y=None):
        self.converter_ = DisparityConverter(
            self.focal_length_px, self.baseline_m, self.depth_cap
        ).fit()
        self.warper_ = self.warper if self.warper is not None else OcclusionAwareWarper()
        self.interpolator_ = (
            self.interpolator if self.interpolator is not None else EdgeAwareInterpolator()
        )
        return self

    def predict_sparse(self, depth_1, depth_2, flow) -> tuple[SceneFlowFrame, WarpResult]:
        """Non-dense scene flow right after warping, plus the warp bookkeeping."""
        check_is_fitted(self, "converter_")
        d1 = self.converter_.transform(depth_1)
        d2 = self.converter_.transform(depth_2)
        flow = as_flow_field(flow)
        warp = self.warper_.fit_transform(d1, flow, d2)
        return assemble_sparse(d1, warp, flow), warp

    def predict(self, depth_1, depth_2, flow, guide) -> SceneFlowFrame:
        check_is_fitted(self, "converter_")
        d1 = self.converter_.transform(depth_1)
        d2 = self.converter_.transform(depth_2)
        flow = as_flow_field(flow)
        warp = self.warper_.fit_transform(d1, flow, d2)
        self.interpolator_.fit(guide)
        d2i = self.interpolator_.transform(warp.warped)
        d1r = self.interpolator_.refine_dense(d1)
        return assemble_dense(d1r, d2i, flow)


__all__ = [
    "DisparityConverter",
    "EdgeAwareInterpolator",
    "MonoComb",
    "NotFittedError",
    "OcclusionAwareWarper",
]
