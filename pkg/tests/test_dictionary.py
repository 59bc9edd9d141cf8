import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pdeid.dictionary import (FeatureMatrix, TargetVector, build_features, build_target, devectorize, fd_derivative,
                              fd_weights, ground_truth_features, normalize_columns, vectorize)
from pdeid.lasso import signed_support
from pdeid.locpoly import BandwidthPlan, SmoothedFields
from pdeid.solvers import BurgersSpec, solve_burgers
from pdeid.types import Field, SpaceTimeGrid, canonical_term_order

PLAN = BandwidthPlan(1, 1)


def fields_from(g, u_t, derivs, P=None):
    P = len(derivs) - 1 if P is None else P
    return SmoothedFields(g, Field(g, u_t), tuple(Field(g, d) for d in derivs), PLAN, P)


def test_shape_and_constant_column():
    g = SpaceTimeGrid(4, 3)
    rng = np.random.default_rng(1)
    F = build_features(fields_from(g, rng.random(g.shape), [rng.random(g.shape) for _ in range(3)]))
    assert F.values.shape == (12, 10)
    np.testing.assert_array_equal(F.column(0), 1.0)
    np.testing.assert_array_equal(F.scales, 1.0)
    assert F.labels[5] == "u*u_x" and F.labels[6] == "u_xx"


def test_zero_field_columns():
    g = SpaceTimeGrid(5, 4)
    z = np.zeros(g.shape)
    F = build_features(fields_from(g, z, [z, z, z]))
    assert np.all(F.values[:, 1:] == 0)
    N = normalize_columns(F)
    np.testing.assert_array_equal(N.scales, 1.0)


def test_linear_field_columns():
    g = SpaceTimeGrid(6, 3)
    X = np.broadcast_to(g.x[:, None], g.shape)
    F = build_features(fields_from(g, np.zeros(g.shape), [X, np.ones(g.shape), np.zeros(g.shape)]))
    labels = F.labels
    np.testing.assert_allclose(F.column(labels.index("u_x")), 1)
    np.testing.assert_allclose(F.column(labels.index("u^2")), vectorize(X**2))
    np.testing.assert_allclose(F.column(labels.index("u*u_x")), vectorize(X))


def test_missing_order():
    g = SpaceTimeGrid(3, 3)
    z = np.zeros(g.shape)
    sf = fields_from(g, z, [z, z], P=1)
    with pytest.raises(ValueError, match="missing"):
        build_features(sf, canonical_term_order(2))


def test_vectorization_order():
    g = SpaceTimeGrid(2, 2)
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    sf = fields_from(g, np.array([[a, b], [c, d]]), [np.zeros(g.shape)])
    np.testing.assert_array_equal(build_target(sf).values, [a, c, b, d])
    M = 3
    r = np.arange(12)
    v = vectorize(np.arange(12).reshape(3, 4, order="F"))
    np.testing.assert_array_equal(v, r)
    # row r is node (r mod M, r div M)
    A = np.arange(12.0).reshape(3, 4)
    vv = vectorize(A)
    for k in range(12):
        assert vv[k] == A[k % M, k // M]


@given(arrays(np.float64, (4, 5), elements=st.floats(-1e6, 1e6)))
def test_devectorize_roundtrip(a):
    g = SpaceTimeGrid(4, 5)
    sf = fields_from(g, a, [np.zeros(g.shape)])
    np.testing.assert_array_equal(devectorize(build_target(sf).values, g), a)


def test_constant_target():
    g = SpaceTimeGrid(3, 4)
    sf = fields_from(g, np.full(g.shape, 2.5), [np.zeros(g.shape)])
    np.testing.assert_array_equal(build_target(sf).values, 2.5)


def test_normalization_examples():
    terms = canonical_term_order(0)
    vals = np.column_stack([np.ones(8), np.full(8, 3.0), np.random.default_rng(3).standard_normal(8)])
    F = normalize_columns(FeatureMatrix(vals, terms, np.ones(3)))
    np.testing.assert_allclose(F.column(0), 1)
    np.testing.assert_allclose(F.column(1), 1)
    assert F.scales[1] == pytest.approx(3)
    np.testing.assert_allclose(np.linalg.norm(F.values, axis=0) / np.sqrt(8), 1, atol=1e-12)


@settings(max_examples=50)
@given(arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3)))
def test_normalization_bound_and_sign_invariance(vals):
    F = normalize_columns(FeatureMatrix(vals, canonical_term_order(0), np.ones(3)))
    assert np.linalg.norm(F.values, axis=0).max() / np.sqrt(12) <= 1 + 1e-12
    assert np.all(F.scales > 0)
    np.testing.assert_allclose(F.values * F.scales, vals, rtol=1e-12, atol=1e-12 * np.abs(vals).max(initial=1))
    beta = np.array([0.5, -2.0, 0.0])
    assert signed_support(F.unscale(beta)) == signed_support(beta)


def test_normalization_composes():
    vals = np.column_stack([np.ones(4), [1.0, 2, 3, 4], [0.0, 0, 0, 0]])
    F1 = normalize_columns(FeatureMatrix(vals, canonical_term_order(0), np.ones(3)))
    F2 = normalize_columns(F1)
    np.testing.assert_allclose(F2.scales, F1.scales)


def test_fd_weights():
    np.testing.assert_allclose(fd_weights([-1, 0, 1], 1), [-0.5, 0, 0.5])
    np.testing.assert_allclose(fd_weights([-1, 0, 1], 2), [1, -2, 1])
    np.testing.assert_allclose(fd_weights([-2, -1, 0, 1, 2], 1), [1 / 12, -2 / 3, 0, 2 / 3, -1 / 12],
                               atol=1e-14)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_fd_fourth_order(order):
    errs = []
    for n in (40, 80):
        h = 1.0 / n
        x = np.arange(n) * h
        f = np.sin(2 * np.pi * x)
        exact = (2 * np.pi) ** order * np.sin(2 * np.pi * x + order * np.pi / 2)
        errs.append(np.abs(fd_derivative(f, 0, h, order, periodic=True) - exact).max())
    assert errs[0] / errs[1] > 14


def test_fd_one_sided_exact_on_polynomials():
    x = np.linspace(0, 1, 30)
    f = x**4
    np.testing.assert_allclose(fd_derivative(f, 0, x[1], 1, periodic=False), 4 * x**3, atol=1e-8)


def test_ground_truth_x_times_t():
    target = SpaceTimeGrid(10, 8, 1.0, 0.1)
    fine = Field.from_function(SpaceTimeGrid(40, 32, 1.0, 0.1), lambda X, T: X * T)
    F, y = ground_truth_features(fine, target, 2, periodic=False)
    assert F.is_ground_truth
    X, T = np.meshgrid(target.x, target.t, indexing="ij")
    np.testing.assert_allclose(y.values, vectorize(X), atol=1e-8)
    np.testing.assert_allclose(F.column(3), vectorize(T), atol=1e-8)
    np.testing.assert_allclose(F.column(6), 0, atol=1e-8)


def test_ground_truth_constant():
    target = SpaceTimeGrid(5, 5)
    fine = Field(SpaceTimeGrid(20, 20), np.full((20, 20), 2.0))
    F, y = ground_truth_features(fine, target, 2)
    nz = [j for j in range(F.K) if np.any(np.abs(F.column(j)) > 1e-9)]
    assert [F.labels[j] for j in nz] == ["1", "u", "u^2"]
    np.testing.assert_allclose(y.values, 0, atol=1e-9)


def test_ground_truth_needs_resolution():
    target = SpaceTimeGrid(10, 10)
    with pytest.raises(ValueError, match="factors"):
        ground_truth_features(Field(SpaceTimeGrid(30, 40), np.zeros((30, 40))), target, 2)
    with pytest.raises(ValueError, match="factors"):
        ground_truth_features(Field(SpaceTimeGrid(40, 35), np.zeros((40, 35))), target, 2)


def test_ground_truth_burgers_residual_refines():
    nu = 0.03
    beta = np.zeros(10)
    beta[5], beta[6] = -1, nu
    res = []
    for M, N in ((64, 20), (128, 40)):
        target = SpaceTimeGrid(M, N)
        fine = solve_burgers(BurgersSpec(nu, SpaceTimeGrid(4 * M, 4 * N)))
        F, y = ground_truth_features(fine, target, 2)
        r = devectorize(y.values - F.values @ beta, target)
        # skip the initial jump neighbourhood (x near 0 and 1) and the first slices
        res.append(np.abs(r[M // 5: -M // 5, N // 4:]).max())
    assert res[1] < res[0]
    assert res[1] < 1e-2
