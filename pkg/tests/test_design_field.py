import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igatopo.design_field import (
    expand,
    make_design_field,
    make_symmetry_map,
    read_density_csv,
    reduce_gradient,
    write_density_csv,
)
from igatopo.geometry import build_annulus_model

DESIGN = build_annulus_model().patches[1]
FIELD = make_design_field(DESIGN, 4, 4)


@pytest.mark.parametrize(
    "spans, mode, n_var",
    [((4, 4), "none", 100), ((4, 4), "x", 50), ((4, 4), "xy", 25), ((8, 8), "xy", 81), ((32, 32), "xy", 1089)],
)
def test_variable_counts(spans, mode, n_var):
    f = make_design_field(DESIGN, *spans)
    assert make_symmetry_map(f, mode).n_var == n_var


def test_constant_field_has_zero_gradient():
    rng = np.random.default_rng(0)
    xi, eta = rng.random(200), rng.random(200)
    v, gx, gy = FIELD.evaluate(np.full(FIELD.m, 0.5), xi, eta)
    np.testing.assert_allclose(v, 0.5, atol=1e-14)
    assert np.abs(gx).max() < 1e-12 and np.abs(gy).max() < 1e-12


def test_unit_coefficient_gives_basis_function():
    xi, eta = np.array([0.3, 0.6]), np.array([0.1, 0.7])
    B = FIELD.basis_matrix(xi, eta).toarray()
    j = 37
    c = np.zeros(FIELD.m)
    c[j] = 1.0
    v, _, _ = FIELD.evaluate(c, xi, eta)
    np.testing.assert_allclose(v, B[:, j], atol=1e-15)


def test_physical_gradient_matches_finite_differences():
    from igatopo.reconstruct import invert_map

    rng = np.random.default_rng(1)
    c = rng.random(FIELD.m)
    xi, eta = rng.uniform(0.1, 0.9, 30), rng.uniform(0.01, 0.99, 30)
    v, gx, gy = FIELD.evaluate(c, xi, eta)
    x = FIELD.patch.evaluate(xi, eta)
    h = 1e-5
    fd = []
    for d in (np.array([h, 0.0]), np.array([0.0, h])):
        up = FIELD.evaluate(c, *invert_map(FIELD.patch, x + d)[:2])[0]
        dn = FIELD.evaluate(c, *invert_map(FIELD.patch, x - d)[:2])[0]
        fd.append((up - dn) / (2 * h))
    scale = np.abs(np.concatenate([gx, gy])).max()
    np.testing.assert_allclose(gx, fd[0], atol=1e-5 * scale)
    np.testing.assert_allclose(gy, fd[1], atol=1e-5 * scale)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_convex_hull_bound(seed):
    rng = np.random.default_rng(seed)
    c = rng.random(FIELD.m)
    v, _, _ = FIELD.evaluate(c, rng.random(1000), rng.random(1000))
    assert v.min() >= c.min() - 1e-12 and v.max() <= c.max() + 1e-12


def test_seam_continuity():
    c = np.random.default_rng(2).random(FIELD.m)
    xi = np.linspace(0, 1, 11)
    a, _, _ = FIELD.evaluate(c, xi, np.zeros(11))
    b, _, _ = FIELD.evaluate(c, xi, np.ones(11))
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_continuity_across_element_boundaries():
    c = np.random.default_rng(3).random(FIELD.m)
    knots = np.unique(FIELD.patch.basis.kv_v.knots)[1:-1]
    xi = np.full(knots.size, 0.37)
    h = 1e-9
    vl, gxl, gyl = FIELD.evaluate(c, xi, knots - h)
    vr, gxr, gyr = FIELD.evaluate(c, xi, knots + h)
    np.testing.assert_allclose(vl, vr, atol=1e-8)
    # quadratic direction is C1 across single knots, the quarter knots are C0
    single = np.array([FIELD.patch.basis.kv_v.multiplicity(k) == 1 for k in knots])
    np.testing.assert_allclose(gxl[single], gxr[single], atol=1e-6)
    np.testing.assert_allclose(gyl[single], gyr[single], atol=1e-6)


@pytest.mark.parametrize("mode", ["x", "xy"])
def test_expanded_field_is_mirror_symmetric(mode):
    smap = make_symmetry_map(FIELD, mode)
    c = smap.expand(np.random.default_rng(4).random(smap.n_var))
    rng = np.random.default_rng(5)
    xi, eta = rng.random(100), rng.random(100)
    pts = FIELD.patch.evaluate(xi, eta)
    from igatopo.reconstruct import invert_map

    v = FIELD.evaluate(c, xi, eta)[0]
    mirrors = [np.array([1.0, -1.0])] + ([np.array([-1.0, 1.0])] if mode == "xy" else [])
    for mir in mirrors:
        mxi, meta, _ = invert_map(FIELD.patch, pts * mir)
        np.testing.assert_allclose(FIELD.evaluate(c, mxi, meta)[0], v, atol=1e-10)


def test_symmetry_map_surjective_and_counts():
    smap = make_symmetry_map(FIELD, "xy")
    assert set(np.unique(smap.assign)) == set(range(25))
    assert smap.counts().sum() == FIELD.m
    g = reduce_gradient(smap, np.ones(FIELD.m))
    np.testing.assert_array_equal(g, smap.counts())
    assert 4 in smap.counts()


def test_identity_map():
    smap = make_symmetry_map(FIELD, "none")
    x = np.random.default_rng(6).random(FIELD.m)
    np.testing.assert_array_equal(expand(smap, x), x)
    np.testing.assert_array_equal(reduce_gradient(smap, x), x)


def test_constant_variables_expand_to_constant():
    smap = make_symmetry_map(FIELD, "xy")
    np.testing.assert_array_equal(smap.expand(np.full(25, 0.3)), 0.3)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), mode=st.sampled_from(["none", "x", "xy"]))
def test_expand_and_reduce_are_adjoint(seed, mode):
    smap = make_symmetry_map(FIELD, mode)
    rng = np.random.default_rng(seed)
    x, g = rng.random(smap.n_var), rng.random(FIELD.m)
    assert abs(smap.expand(x) @ g - x @ smap.reduce_gradient(g)) < 1e-12 * max(1.0, abs(x @ smap.reduce_gradient(g)))


def test_length_mismatch_errors():
    smap = make_symmetry_map(FIELD, "xy")
    with pytest.raises(ValueError):
        smap.expand(np.zeros(24))
    with pytest.raises(ValueError):
        smap.reduce_gradient(np.zeros(3))
    with pytest.raises(ValueError):
        make_symmetry_map(FIELD, "diagonal")


def test_restrict_inverts_expand():
    smap = make_symmetry_map(FIELD, "xy")
    x = np.random.default_rng(7).random(25)
    np.testing.assert_array_equal(smap.restrict(smap.expand(x)), x)
    with pytest.raises(ValueError):
        smap.restrict(np.random.default_rng(8).random(FIELD.m))


def test_solution_refinement_leaves_density_untouched():
    from igatopo.problem import ProblemSetup, TopOptProblem

    a = TopOptProblem(ProblemSetup(levels=1)).field
    b = TopOptProblem(ProblemSetup(levels=3)).field
    c = np.random.default_rng(9).random(a.m)
    t = np.random.default_rng(10).random((50, 2))
    np.testing.assert_array_equal(a.evaluate(c, t[:, 0], t[:, 1])[0], b.evaluate(c, t[:, 0], t[:, 1])[0])


def test_csv_round_trip(tmp_path):
    c = np.random.default_rng(11).random(FIELD.m)
    path = tmp_path / "density.csv"
    text = write_density_csv(FIELD, c, path)
    assert text.splitlines()[0] == "index,x,y,v"
    np.testing.assert_array_equal(read_density_csv(FIELD, path), c)
    assert path.read_text() == text


def test_csv_mismatch_rejected(tmp_path):
    path = tmp_path / "density.csv"
    write_density_csv(make_design_field(DESIGN, 8, 8), np.zeros(324), path)
    with pytest.raises(ValueError):
        read_density_csv(FIELD, path)
    empty = tmp_path / "empty.csv"
    empty.write_text("index,x,y,v\n")
    with pytest.raises(ValueError):
        read_density_csv(FIELD, empty)
