import numpy as np
import pytest

from igatopo.errors import GeometryError
from igatopo.geometry import (
    build_annulus_model,
    build_plate_model,
    interface_quadrature,
    perturb_star,
    quadrature_points,
    refine_model,
)


def _region_areas(model):
    areas = {}
    for p in model.patches:
        areas[p.region] = areas.get(p.region, 0.0) + quadrature_points(p).w.sum()
    return areas


def test_unit_square_area_exact():
    m = build_plate_model(L=1.0, n_el=(3, 5))
    assert abs(quadrature_points(m.patches[0]).w.sum() - 1.0) < 1e-14


def test_gauss_rule_integrates_cubics():
    m = build_plate_model(L=2.0, n_el=(3, 2))
    q = quadrature_points(m.patches[0])
    f = q.x[:, 0] ** 3 * q.x[:, 1] ** 2 - 2 * q.x[:, 1] ** 3
    exact = (2**4 / 4) * (2**3 / 3) - 2 * 2 * (2**4 / 4)
    assert abs(np.sum(q.w * f) - exact) < 1e-12 * abs(exact)


def test_annulus_area_and_watertightness():
    m = refine_model(build_annulus_model(), 2)
    A = _region_areas(m)
    exact = np.pi * (50**2 - 10**2)
    assert abs(A["design"] - exact) / exact < 1e-8
    assert abs(A["in"] - np.pi * 100) / (np.pi * 100) < 1e-8
    assert abs(sum(A.values()) - 140**2) / 140**2 < 1e-6


def test_patch_layout_and_tags():
    m = build_annulus_model()
    assert [p.name for p in m.patches] == ["in", "design", "outer0", "outer1", "outer2", "outer3"]
    assert m.design_patch == 1
    assert m.boundary_names() == {"left", "right", "bottom", "top"}
    for p in m.patches:
        assert p.degrees == (1, 2)


@pytest.mark.parametrize("levels, n_dof", [(3, 937), (5, 12937)])
def test_dof_counts(levels, n_dof):
    assert refine_model(build_annulus_model(), levels).n_dof == n_dof


@pytest.mark.parametrize("star", [False, True])
def test_interface_coincidence(star):
    kw = dict(star_in=(0.3, 5, np.pi), star_out=(0.4, 8, -np.pi / 2), R_in=15, R_out=40) if star else {}
    m = refine_model(build_annulus_model(**kw), 1)
    for it in m.interfaces:
        s = np.linspace(0, 1, 50)
        pa, pb = m.patches[it.p1], m.patches[it.p2]
        xa = pa.evaluate(*pa.side_params(it.side1, it.range1[0] + (it.range1[1] - it.range1[0]) * s))
        xb = pb.evaluate(*pb.side_params(it.side2, it.range2[0] + (it.range2[1] - it.range2[0]) * s))
        assert np.abs(xa - xb).max() < 1e-10


def test_interface_normals_opposite_and_outward():
    m = build_annulus_model()
    for it in m.interfaces:
        q1, q2 = interface_quadrature(m, it)
        np.testing.assert_allclose(q1.normal, -q2.normal, atol=1e-15)
        np.testing.assert_allclose(np.hypot(*q1.normal.T), 1.0, atol=1e-12)
        # side 1 is the design ring on every interface; its xi0 edge faces the centre
        r = q1.x / np.hypot(*q1.x.T)[:, None]
        sign = -1.0 if it.side1 == "xi0" else 1.0
        np.testing.assert_allclose(np.sum(q1.normal * r, axis=1), sign, atol=1e-12)


def test_interface_dofs_not_merged():
    m = build_annulus_model()
    din, dd = set(m.dofs(0)), set(m.dofs(1))
    assert not din & dd


def test_positive_jacobian_everywhere():
    m = refine_model(build_annulus_model(star_in=(0.3, 5, 0.0), R_in=15, R_out=40), 2)
    for p in m.patches:
        assert np.all(quadrature_points(p).detJ > 0)


def test_refinement_preserves_map():
    m = build_annulus_model()
    r = refine_model(m, 2)
    t = np.random.default_rng(1).random((100, 2))
    for p0, p1 in zip(m.patches, r.patches):
        np.testing.assert_allclose(p1.evaluate(t[:, 0], t[:, 1]), p0.evaluate(t[:, 0], t[:, 1]), atol=1e-12)


def test_star_perturbation_radius():
    from igatopo.splines import nurbs_circle

    c = nurbs_circle(10.0)
    ctrl = perturb_star(c.ctrl, 0.3, 5, 0.0)
    th = np.arctan2(c.ctrl[:, 1], c.ctrl[:, 0])
    np.testing.assert_allclose(np.hypot(*ctrl.T), np.hypot(*c.ctrl.T) * (1 + 0.3 * np.sin(5 * th)), rtol=1e-12)


@pytest.mark.parametrize("kw", [dict(R_in=50, R_out=10), dict(R_out=80), dict(R_in=0)])
def test_invalid_radii(kw):
    with pytest.raises(ValueError):
        build_annulus_model(**kw)


def test_folded_patch_detected():
    from dataclasses import replace

    p = build_plate_model(L=1.0, n_el=(1, 1), degrees=(1, 1)).patches[0]
    bad = replace(p, ctrl=p.ctrl[::-1].copy())
    with pytest.raises(GeometryError):
        quadrature_points(bad)
