import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igatopo.splines import (
    KnotVector,
    RationalBasis,
    basis_funs_vec,
    eval_basis,
    eval_basis_derivs,
    eval_rational_vec,
    knot_insert,
    nurbs_circle,
)
from igatopo.geometry import STAR_KNOTS


def _open_kv(p, n_el):
    inner = np.linspace(0, 1, n_el + 1)[1:-1]
    return KnotVector(p, np.concatenate([[0] * (p + 1), inner, [1] * (p + 1)]))


def test_linear_basis_hat_functions():
    kv = KnotVector(1, [0, 0, 0.5, 1, 1])
    span, N = eval_basis(kv, 0.25)
    assert span == 1
    np.testing.assert_allclose(N, [0.5, 0.5], atol=1e-15)
    span, N = eval_basis(kv, 1.0)
    np.testing.assert_allclose(N, [0.0, 1.0], atol=1e-15)


def test_quadratic_bernstein_values():
    kv = KnotVector(2, [0, 0, 0, 1, 1, 1])
    _, N = eval_basis(kv, 0.3)
    np.testing.assert_allclose(N, [0.7**2, 2 * 0.3 * 0.7, 0.3**2], atol=1e-15)


@pytest.mark.parametrize("knots", [[0, 1, 0.5, 1], [0, 0, 0.5, 0.5, 0.5, 1, 1]])
def test_invalid_knot_vectors(knots):
    with pytest.raises(ValueError):
        KnotVector(1, knots)


def test_parameter_outside_range():
    kv = _open_kv(2, 3)
    with pytest.raises(ValueError):
        basis_funs_vec(kv, [1.5])


def test_derivative_order_above_degree():
    with pytest.raises(ValueError):
        eval_basis_derivs(_open_kv(1, 2), 0.3, 2)


@settings(max_examples=30, deadline=None)
@given(p=st.integers(1, 4), n_el=st.integers(1, 6), seed=st.integers(0, 2**31))
def test_partition_of_unity_and_nonnegative(p, n_el, seed):
    kv = _open_kv(p, n_el)
    x = np.random.default_rng(seed).random(1000)
    _, ders = basis_funs_vec(kv, x, 0)
    N = ders[:, 0, :]
    assert np.all(N >= -1e-15)
    np.testing.assert_allclose(N.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(p=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_derivatives_match_central_differences(p, seed):
    kv = _open_kv(p, 4)
    rng = np.random.default_rng(seed)
    # keep away from knots where derivatives jump
    x = 0.25 * rng.integers(0, 4, 50) + rng.uniform(0.01, 0.24, 50)
    h = 1e-6
    span, d = basis_funs_vec(kv, x, 1)
    sp_, Np = basis_funs_vec(kv, x + h, 0)
    sm_, Nm = basis_funs_vec(kv, x - h, 0)
    assert np.array_equal(span, sp_) and np.array_equal(span, sm_)
    fd = (Np[:, 0] - Nm[:, 0]) / (2 * h)
    scale = np.abs(d[:, 1]).max()
    np.testing.assert_allclose(d[:, 1], fd, atol=1e-6 * scale)


def test_rational_basis_partition_and_derivatives():
    rng = np.random.default_rng(3)
    kv_u, kv_v = _open_kv(1, 2), _open_kv(2, 3)
    w = rng.uniform(0.5, 2.0, (kv_u.n, kv_v.n))
    basis = RationalBasis(kv_u, kv_v, w)
    xi, eta = rng.uniform(0.01, 0.49, 200), rng.uniform(0.01, 0.32, 200)
    idx, R, dR = eval_rational_vec(basis, xi, eta)
    np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(dR.sum(axis=1), 0.0, atol=1e-10)
    h = 1e-6
    c = rng.random(kv_u.n * kv_v.n)

    def f(a, b):
        i, r, _ = eval_rational_vec(basis, a, b, derivs=False)
        return np.einsum("ij,ij->i", r, c[i])

    g = np.einsum("ija,ij->ia", dR, c[idx])
    np.testing.assert_allclose(g[:, 0], (f(xi + h, eta) - f(xi - h, eta)) / (2 * h), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(g[:, 1], (f(xi, eta + h) - f(xi, eta - h)) / (2 * h), rtol=1e-6, atol=1e-8)


def test_nonpositive_weights_rejected():
    kv = _open_kv(1, 1)
    with pytest.raises(ValueError):
        RationalBasis(kv, kv, np.array([[1.0, 0.0], [1.0, 1.0]]))


def test_circle_is_exact():
    c = nurbs_circle(3.0, center=(1.0, -2.0), start_angle=-np.pi / 4)
    assert c.ctrl.shape == (9, 2)
    np.testing.assert_allclose(c.kv.knots, [0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1])
    np.testing.assert_allclose(c.weights[1::2], np.sqrt(2) / 2)
    np.testing.assert_allclose(c.weights[::2], 1.0)
    pts = c.evaluate(np.linspace(0, 1, 1001))
    np.testing.assert_allclose(np.hypot(pts[:, 0] - 1.0, pts[:, 1] + 2.0), 3.0, rtol=1e-14)


def test_circle_with_star_knots_has_21_points():
    c = nurbs_circle(10.0)
    r = c.insert(STAR_KNOTS)
    assert r.ctrl.shape[0] == 21
    t = np.random.default_rng(0).random(100)
    np.testing.assert_allclose(r.evaluate(t), c.evaluate(t), atol=1e-12)
    np.testing.assert_allclose(np.hypot(*r.evaluate(t).T), 10.0, rtol=1e-14)


def test_insert_into_circle_arc_preserves_points():
    c = nurbs_circle(1.0)
    t = np.linspace(0, 1, 97)
    np.testing.assert_allclose(c.insert([0.5 + 1 / 16]).evaluate(t), c.evaluate(t), atol=1e-12)


def test_knot_multiplicity_limit():
    c = nurbs_circle(1.0)
    with pytest.raises(ValueError):
        c.insert([0.5])  # already has multiplicity p
    with pytest.raises(ValueError):
        c.insert([1.0])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), direction=st.sampled_from([0, 1]))
def test_surface_knot_insertion_invariance(seed, direction):
    rng = np.random.default_rng(seed)
    kv_u, kv_v = _open_kv(1, 2), _open_kv(2, 2)
    basis = RationalBasis(kv_u, kv_v, rng.uniform(0.5, 2.0, (kv_u.n, kv_v.n)))
    ctrl = rng.random((kv_u.n, kv_v.n, 2))
    new = rng.uniform(0.05, 0.45, 2)
    nb, nc = knot_insert(basis, ctrl, direction, new)
    xi, eta = rng.random(100), rng.random(100)

    def ev(b, P):
        idx, R, _ = eval_rational_vec(b, xi, eta, derivs=False)
        return np.einsum("ij,ijk->ik", R, P.reshape(-1, 2)[idx])

    np.testing.assert_allclose(ev(nb, nc), ev(basis, ctrl), atol=1e-12)


def test_midpoint_refinement_quadruples_elements():
    from igatopo.geometry import build_annulus_model

    p = build_annulus_model().patches[1]
    n0 = p.basis.kv_u.n_elements * p.basis.kv_v.n_elements
    r = p.refined(1)
    assert r.basis.kv_u.n_elements * r.basis.kv_v.n_elements == 4 * n0
