import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monocomb.exceptions import EmptyInputError, PreconditionError, ShapeError
from monocomb.geometry import DisparityMap
from monocomb.interpolation import InterpolatorConfig, edge_weights, interpolate, refine_dense

JACOBI = InterpolatorConfig(solver="jacobi", tol=1e-12, smoothing_iterations=200000)


def unguided_reference(values, valid, neighborhood=4):
    """Harmonic fill with unit weights by a dense linear solve."""
    h, w = values.shape
    n = h * w
    steps = [(0, 1, 1.0), (1, 0, 1.0)]
    if neighborhood == 8:
        steps += [(1, 1, 1 / np.sqrt(2)), (1, -1, 1 / np.sqrt(2))]
    lap = np.zeros((n, n))
    for y in range(h):
        for x in range(w):
            for dy, dx, wgt in steps:
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w:
                    a, b = y * w + x, yy * w + xx
                    lap[a, a] += wgt
                    lap[b, b] += wgt
                    lap[a, b] -= wgt
                    lap[b, a] -= wgt
    known = valid.ravel()
    x = values.ravel().astype(float).copy()
    unknown = ~known
    rhs = -lap[np.ix_(unknown, known)] @ x[known]
    x[unknown] = np.linalg.solve(lap[np.ix_(unknown, unknown)], rhs)
    return x.reshape(h, w)


def random_sparse(rng, shape, density=0.2):
    values = rng.uniform(1, 100, shape)
    valid = rng.random(shape) < density
    valid.flat[rng.integers(valid.size)] = True
    return DisparityMap(values, valid)


@pytest.mark.parametrize("neighborhood", [4, 8])
@pytest.mark.parametrize("solver", ["direct", "jacobi"])
def test_constant_guide_matches_unguided_reference(rng, neighborhood, solver):
    cfg = InterpolatorConfig(neighborhood=neighborhood, solver=solver, tol=1e-12,
                             smoothing_iterations=200000)
    for _ in range(5):
        sparse = random_sparse(rng, (9, 11))
        got = interpolate(sparse, np.full((9, 11), 0.3), cfg)
        ref = unguided_reference(sparse.values, sparse.valid, neighborhood)
        np.testing.assert_allclose(got.values, ref, atol=1e-6)


def test_anchors_are_untouched(rng):
    sparse = random_sparse(rng, (20, 20))
    out = interpolate(sparse, rng.random((20, 20, 3)))
    np.testing.assert_array_equal(out.values[sparse.valid], sparse.values[sparse.valid])
    assert out.is_dense


def test_single_anchor_fills_constant():
    values = np.zeros((5, 5))
    values[2, 3] = 7.0
    out = interpolate(DisparityMap(values), np.random.default_rng(0).random((5, 5)))
    np.testing.assert_array_equal(out.values, np.full((5, 5), 7.0))


def test_dense_input_is_returned_unchanged(rng):
    d = DisparityMap(rng.uniform(1, 5, (4, 4)))
    np.testing.assert_array_equal(interpolate(d, np.zeros((4, 4))).values, d.values)


def test_empty_input():
    with pytest.raises(EmptyInputError):
        interpolate(DisparityMap(np.zeros((3, 3))), np.zeros((3, 3)))


def test_guide_shape_mismatch():
    with pytest.raises(ShapeError):
        interpolate(DisparityMap(np.ones((3, 3))), np.zeros((3, 4)))


def test_guide_range_checked():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        interpolate(DisparityMap(np.ones((3, 3))), np.full((3, 3), 2.0))


def two_region_fixture(h=40, w=60, edge=30):
    guide = np.zeros((h, w, 3))
    guide[:, edge:] = 1.0
    values = np.zeros((h, w))
    valid = np.zeros((h, w), bool)
    for y, x, val in ((5, 4, 10.0), (30, 20, 10.0), (10, 45, 50.0), (35, 55, 50.0)):
        values[y, x] = val
        valid[y, x] = True
    return DisparityMap(values, valid), guide, edge


@pytest.mark.parametrize("solver", ["direct", "jacobi"])
def test_two_regions_do_not_bleed(solver):
    sparse, guide, edge = two_region_fixture()
    cfg = InterpolatorConfig(solver=solver, tol=1e-10, smoothing_iterations=100000)
    out = interpolate(sparse, guide, cfg).values
    assert np.abs(out[:, :edge] - 10.0).max() <= 0.01
    assert np.abs(out[:, edge:] - 50.0).max() <= 0.01


def test_jacobi_converges_to_direct(rng):
    sparse = random_sparse(rng, (15, 15))
    guide = rng.random((15, 15, 3))
    cfg = InterpolatorConfig(edge_weight=1.0)
    direct = interpolate(sparse, guide, cfg)
    jac = interpolate(sparse, guide, dataclasses.replace(JACOBI, edge_weight=1.0))
    np.testing.assert_allclose(jac.values, direct.values, atol=1e-6)


def test_jacobi_iteration_cap_is_respected(rng):
    sparse = random_sparse(rng, (15, 15))
    guide = rng.random((15, 15))
    one = interpolate(sparse, guide, InterpolatorConfig(solver="jacobi", smoothing_iterations=1))
    many = interpolate(sparse, guide, JACOBI)
    assert not np.allclose(one.values, many.values)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(0,), (1,), (0, 1)]))
def test_jacobi_flip_equivariance_is_exact(seed, axes):
    rng = np.random.default_rng(seed)
    sparse = random_sparse(rng, (8, 9))
    guide = rng.random((8, 9, 3))
    cfg = InterpolatorConfig(solver="jacobi", smoothing_iterations=50)
    out = interpolate(sparse, guide, cfg).values
    flipped = DisparityMap(np.flip(sparse.values, axes), np.flip(sparse.valid, axes))
    out_f = interpolate(flipped, np.flip(guide, axes), cfg).values
    np.testing.assert_array_equal(np.flip(out_f, axes), out)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([4, 8]))
def test_direct_horizontal_flip_is_exact(seed, neighborhood):
    rng = np.random.default_rng(seed)
    sparse = random_sparse(rng, (8, 9))
    guide = rng.random((8, 9, 3))
    cfg = InterpolatorConfig(neighborhood=neighborhood)
    out = interpolate(sparse, guide, cfg).values
    flipped = DisparityMap(sparse.values[:, ::-1], sparse.valid[:, ::-1])
    out_f = interpolate(flipped, guide[:, ::-1], cfg).values
    np.testing.assert_array_equal(out_f[:, ::-1], out)


def test_direct_mirror_symmetric_input_gives_symmetric_output():
    values = np.zeros((6, 6))
    values[2, 0] = values[2, 5] = 3.0
    values[4, 1] = values[4, 4] = 9.0
    half = np.random.default_rng(0).random((6, 3))
    guide = np.concatenate([half, half[:, ::-1]], axis=1)
    out = interpolate(DisparityMap(values), guide).values
    np.testing.assert_array_equal(out, out[:, ::-1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_direct_vertical_flip_up_to_round_off(seed):
    rng = np.random.default_rng(seed)
    sparse = random_sparse(rng, (8, 9))
    guide = rng.random((8, 9, 3))
    out = interpolate(sparse, guide).values
    flipped = DisparityMap(sparse.values[::-1], sparse.valid[::-1])
    out_f = interpolate(flipped, guide[::-1]).values
    # weights down to 1e-6 make the system ill-conditioned; allow round-off
    np.testing.assert_allclose(out_f[::-1], out, rtol=0, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 500.0), st.sampled_from([4, 8]))
def test_maximum_principle_property(seed, edge_weight, neighborhood):
    rng = np.random.default_rng(seed)
    sparse = random_sparse(rng, (10, 10), density=rng.uniform(0.01, 0.9))
    cfg = InterpolatorConfig(edge_weight=edge_weight, neighborhood=neighborhood)
    out = interpolate(sparse, rng.random((10, 10, 3)), cfg)
    anchors = sparse.values[sparse.valid]
    assert out.values.min() >= anchors.min() and out.values.max() <= anchors.max()
    assert out.density == 1.0


def test_edge_weights_floor_and_diagonal():
    guide = np.zeros((2, 2, 1))
    guide[0, 0] = 1.0
    cfg = InterpolatorConfig(edge_weight=1000.0, neighborhood=8, min_weight=1e-6)
    by_offset = {(dy, dx): w for dy, dx, w in edge_weights(guide, cfg)}
    assert by_offset[(0, 1)][0, 0] == 1e-6
    assert by_offset[(0, 1)][1, 0] == 1.0
    assert by_offset[(1, -1)][0, 0] == pytest.approx(1 / np.sqrt(2))
    assert by_offset[(1, 1)][0, 0] == pytest.approx(1e-6 / np.sqrt(2))


def test_refine_identity_by_default(rng):
    d = DisparityMap(rng.uniform(1, 5, (6, 6)))
    assert refine_dense(d, np.zeros((6, 6))) is d


def test_refine_smooths_within_range(rng):
    d = DisparityMap(rng.uniform(1, 5, (6, 6)))
    out = refine_dense(d, np.zeros((6, 6)), InterpolatorConfig(refine=True))
    assert out.values.std() < d.values.std()
    assert out.values.min() >= d.values.min() and out.values.max() <= d.values.max()


def test_refine_needs_dense():
    with pytest.raises(PreconditionError):
        refine_dense(DisparityMap(np.array([[1.0, 0.0]])), np.zeros((1, 2)))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"neighborhood": 6},
        {"solver": "cg"},
        {"edge_weight": -1.0},
        {"tol": 0.0},
        {"min_weight": 0.0},
        {"smoothing_iterations": 0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        InterpolatorConfig(**kwargs)
