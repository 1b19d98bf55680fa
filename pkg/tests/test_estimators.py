import numpy as np
import pytest
from sklearn.base import clone

from monocomb.estimators import (
    DisparityConverter,
    EdgeAwareInterpolator,
    MonoComb,
    NotFittedError,
    OcclusionAwareWarper,
)
from monocomb.geometry import DepthMap, DisparityMap, FlowField
from monocomb.interpolation import InterpolatorConfig, interpolate
from monocomb.synthetic import render, two_layer_scene
from monocomb.warping import warp_with_occlusion


def test_converter_round_trip():
    conv = DisparityConverter(720.0, 0.5).fit()
    depth = np.array([[10.0, 0.0], [500.0, 20.0]])
    d = conv.transform(depth)
    np.testing.assert_array_equal(d.valid, [[True, False], [True, True]])
    assert d.values[1, 0] == 720 * 0.5 / 100.0  # clamped at the default cap
    back = conv.inverse_transform(d)
    np.testing.assert_allclose(back.values[d.valid], [10.0, 100.0, 20.0])


def test_converter_cap_applies_to_depth_maps():
    conv = DisparityConverter(720.0, 0.5, depth_cap=50.0).fit()
    d = conv.transform(DepthMap(np.array([[80.0]]), depth_cap=None))
    assert d.values[0, 0] == 720 * 0.5 / 50.0


def test_converter_needs_camera():
    with pytest.raises(ValueError):
        DisparityConverter().fit()
    with pytest.raises(NotFittedError):
        DisparityConverter(1.0, 1.0).transform(np.ones((2, 2)))


def test_params_and_clone():
    interp = EdgeAwareInterpolator(edge_weight=10.0, solver="jacobi")
    model = MonoComb(700.0, 0.5, warper=OcclusionAwareWarper(iterations=1), interpolator=interp)
    params = model.get_params()
    assert params["interpolator__edge_weight"] == 10.0
    assert params["warper__iterations"] == 1
    twin = clone(model)
    assert twin.get_params()["interpolator__solver"] == "jacobi"
    model.set_params(interpolator__edge_weight=3.0)
    assert interp.edge_weight == 3.0
    assert interp.config == InterpolatorConfig(edge_weight=3.0, solver="jacobi")


def test_warper_matches_functional_api(rng):
    d1 = DisparityMap(rng.uniform(1, 50, (12, 12)))
    d2 = DisparityMap(rng.uniform(1, 50, (12, 12)))
    flow = FlowField(rng.uniform(-3, 3, (12, 12)), rng.uniform(-3, 3, (12, 12)))
    est = OcclusionAwareWarper(n_jobs=2).fit_transform(d1, flow, d2)
    ref = warp_with_occlusion(d1, d2, flow)
    np.testing.assert_array_equal(est.warped.values, ref.warped.values)
    np.testing.assert_array_equal(est.occlusion, ref.occlusion)


def test_warper_validates_params():
    d = DisparityMap(np.ones((3, 3)))
    with pytest.raises(ValueError):
        OcclusionAwareWarper(n_jobs=0).fit(d, FlowField.zeros((3, 3)))
    with pytest.raises(NotFittedError):
        OcclusionAwareWarper().transform(d)


def test_interpolator_matches_functional_api(rng):
    values = rng.uniform(1, 50, (10, 10))
    sparse = DisparityMap(values, rng.random((10, 10)) > 0.7)
    guide = rng.random((10, 10, 3))
    est = EdgeAwareInterpolator().fit(guide).transform(sparse)
    np.testing.assert_array_equal(est.values, interpolate(sparse, guide).values)


def test_monocomb_recovers_two_layer_scene():
    r = render(two_layer_scene(width=160, height=80))
    model = MonoComb(r.camera.focal_length_px, r.camera.baseline_m).fit()
    sparse, warp = model.predict_sparse(r.depth_1, r.depth_2, r.flow)
    assert 0 < sparse.density < 1
    frame = model.predict(r.depth_1, r.depth_2, r.flow, r.image_1)
    assert frame.is_dense
    gt = r.disparity_2_registered.values
    keep = ~(r.occlusion | r.out_of_view)
    np.testing.assert_allclose(frame.d2.values[keep & warp.warped.valid],
                               gt[keep & warp.warped.valid], atol=1e-9)
