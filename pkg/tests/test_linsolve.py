import numpy as np
import pytest
import scipy.sparse.linalg as spla

from igatopo.assembly import Assembler, Dirichlet, Neumann, assemble
from igatopo.design_field import make_design_field
from igatopo.errors import SolverError
from igatopo.geometry import build_annulus_model, build_plate_model, refine_model
from igatopo.linsolve import solve_adjoint, solve_primal
from igatopo.materials import constant, make_law

BASE = constant(67.0)
LR = {"left": Dirichlet(300.0), "right": Dirichlet(200.0)}


def annulus_system(levels=1, bcs=LR, seed=0):
    model = refine_model(build_annulus_model(), levels)
    field = make_design_field(build_annulus_model().patches[1], 4, 4)
    laws = {"in": constant(1e-4), "out": BASE, "design": make_law("emt")}
    c = np.random.default_rng(seed).random(field.m)
    return Assembler(model, field, bcs).assemble(laws, c)


def test_no_dirichlet_rejected():
    sysm = assemble(build_plate_model(n_el=(2, 2)), None, {"out": BASE}, {"left": Neumann((1.0, 0.0))})
    with pytest.raises(SolverError, match="no Dirichlet"):
        solve_primal(sysm)


def test_constant_dirichlet_gives_constant_field():
    bcs = {s: Dirichlet(250.0) for s in ("left", "right", "top", "bottom")}
    T = solve_primal(annulus_system(1, bcs)).T
    np.testing.assert_allclose(T, 250.0, atol=1e-10)


def test_residual_and_prescribed_values():
    sysm = annulus_system(2)
    st = solve_primal(sysm)
    assert st.residual < 1e-10
    np.testing.assert_array_equal(st.T[sysm.dirichlet_dofs], sysm.dirichlet_values)


def test_zero_adjoint_load():
    st = solve_primal(annulus_system(1))
    np.testing.assert_array_equal(solve_adjoint(st, np.zeros(st.T.size)).P, 0.0)


def test_adjoint_vanishes_on_dirichlet_dofs():
    sysm = annulus_system(1)
    st = solve_primal(sysm)
    P = solve_adjoint(st, np.random.default_rng(1).random(sysm.n_dof)).P
    np.testing.assert_array_equal(P[sysm.dirichlet_dofs], 0.0)


def test_adjoint_equals_homogenized_primal():
    sysm = annulus_system(1)
    st = solve_primal(sysm)
    load = np.random.default_rng(2).random(sysm.n_dof)
    P = solve_adjoint(st, load).P
    # independent factorization of the full matrix with the Dirichlet rows removed
    free = sysm.free_dofs
    Kff = sysm.K[free][:, free].tocsc()
    ref = spla.spsolve(Kff, load[free])
    scale = np.abs(ref).max()
    np.testing.assert_allclose(P[free], ref, atol=1e-9 * scale)


def test_factorization_reuse_matches_fresh_factorization():
    sysm = annulus_system(1)
    st = solve_primal(sysm)
    rng = np.random.default_rng(3)
    loads = [rng.random(sysm.n_dof) for _ in range(3)]
    reused = [solve_adjoint(st, f).P for f in loads]
    fresh = [solve_adjoint(solve_primal(sysm), f).P for f in loads]
    for a, b in zip(reused, fresh):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max())


def test_adjoint_load_size_checked():
    st = solve_primal(annulus_system(0))
    with pytest.raises(ValueError):
        solve_adjoint(st, np.zeros(3))
