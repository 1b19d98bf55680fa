"""Scene flow from monocular depth and optical flow.

Two depth maps (t1, t2) become virtual disparities, the t2 map is warped into
the t1 frame with the optical flow, occluded and out-of-view pixels are
dropped, and the gaps are filled by edge-aware interpolation guided by the
reference image.
"""
from .assembly import SceneFlowFrame, assemble_dense, assemble_sparse
from .estimators import (
    DisparityConverter,
    EdgeAwareInterpolator,
    MonoComb,
    OcclusionAwareWarper,
)
from .evaluation import (
    EvalReport,
    MetricCell,
    OutlierRule,
    aggregate,
    epe,
    evaluate_masked,
    koe,
    scene_flow_outliers,
)
from .exceptions import (
    ConfigError,
    DomainError,
    EmptyInputError,
    FormatError,
    MonoCombError,
    PreconditionError,
    RangeError,
    SceneError,
    ShapeError,
)
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    DisparityMap,
    FlowField,
    depth_to_disparity,
    disparity_to_depth,
)
from .interpolation import InterpolatorConfig, interpolate, refine_dense
from .warping import WarpResult, build_occlusion_mask, refine_mask, warp_disparity, warp_with_occlusion

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "ConfigError",
    "DepthMap",
    "DisparityConverter",
    "DisparityMap",
    "DomainError",
    "EdgeAwareInterpolator",
    "EmptyInputError",
    "EvalReport",
    "FlowField",
    "FormatError",
    "InterpolatorConfig",
    "MetricCell",
    "MonoComb",
    "MonoCombError",
    "OcclusionAwareWarper",
    "OutlierRule",
    "PreconditionError",
    "RangeError",
    "SceneError",
    "SceneFlowFrame",
    "ShapeError",
    "WarpResult",
    "aggregate",
    "assemble_dense",
    "assemble_sparse",
    "build_occlusion_mask",
    "depth_to_disparity",
    "disparity_to_depth",
    "epe",
    "evaluate_masked",
    "interpolate",
    "koe",
    "refine_dense",
    "refine_mask",
    "scene_flow_outliers",
    "warp_disparity",
    "warp_with_occlusion",
]
