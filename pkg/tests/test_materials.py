import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igatopo.materials import LAW_KINDS, constant, dkappa_dv, kappa_eff, make_law

# closed-form range endpoints of each law over its density interval
TABLE_RANGES = {
    "emt": (0.27, 398.0),
    "maxwell": (0.27, 398.0),
    "porous_cu": (70.24, 398.0),
    "cusnpb": (28.31, 399.95),
    "tcoh": (36.01, 228.52),
}


def test_endpoint_values():
    assert abs(kappa_eff(make_law("emt"), 0.0) - 398.0) < 1e-6
    assert abs(kappa_eff(make_law("emt"), 1.0) - 0.27) < 1e-6
    assert abs(kappa_eff(make_law("maxwell"), 0.0) - 398.0) < 1e-6
    assert abs(kappa_eff(make_law("maxwell"), 1.0) - 0.27) < 1e-6
    assert abs(kappa_eff(make_law("porous_cu"), 0.7) - 70.24) < 0.01
    assert abs(kappa_eff(make_law("porous_cu"), 0.7) - 398 * 0.3 / 1.7) < 1e-12
    assert abs(kappa_eff(make_law("cusnpb"), 0.3) - 28.31) < 0.01
    assert abs(kappa_eff(make_law("tcoh"), 0.2) - 36.01) < 0.05
    assert abs(kappa_eff(make_law("tcoh"), 0.8) - 228.52) < 0.05


@pytest.mark.parametrize("kind", sorted(TABLE_RANGES))
def test_range_matches_table(kind):
    lo, hi = make_law(kind).kappa_range
    elo, ehi = TABLE_RANGES[kind]
    assert abs(lo - elo) <= 5e-3 * elo
    assert abs(hi - ehi) <= 5e-3 * ehi


def test_gyroid_polynomial_verbatim():
    # the printed polynomial, not the tabulated range, is authoritative
    law = make_law("gyroid")
    C = (0.5934, 0.1119, 0.0631, 0.0583, 0.0578, 0.0577, 0.0577)
    v = 0.55
    assert abs(law.kappa(v) - 398 * sum(c * v**k for k, c in enumerate(C, 1))) < 1e-10


def test_porous_derivative_closed_form():
    law = make_law("porous_cu")
    assert dkappa_dv(law, 0.0) == pytest.approx(-796.0, rel=1e-14)
    v = np.linspace(0, 0.7, 11)
    np.testing.assert_allclose(law.dkappa(v), -2 * 398 / (1 + v) ** 2, rtol=1e-14)


def test_constant_law():
    law = constant(67.0)
    assert law.is_constant
    np.testing.assert_array_equal(law.kappa(np.linspace(0, 1, 5)), 67.0)
    np.testing.assert_array_equal(law.dkappa(np.linspace(0, 1, 5)), 0.0)
    with pytest.raises(ValueError):
        constant(0.0)


@pytest.mark.parametrize("kind", LAW_KINDS)
def test_derivative_matches_finite_differences(kind):
    law = make_law(kind)
    h = 1e-7
    v = np.linspace(law.v_min + 2 * h, law.v_max - 2 * h, 1000)
    fd = (law.kappa(v + h) - law.kappa(v - h)) / (2 * h)
    scale = max(np.abs(law.dkappa(v)).max(), 1e-12)
    np.testing.assert_allclose(law.dkappa(v), fd, rtol=1e-5, atol=1e-5 * scale)


def test_emt_derivative_at_half():
    law = make_law("emt")
    h = 1e-7
    fd = (law.kappa(0.5 + h) - law.kappa(0.5 - h)) / (2 * h)
    assert abs(law.dkappa(0.5) - fd) < 1e-6 * abs(fd)


@settings(max_examples=50, deadline=None)
@given(kind=st.sampled_from(LAW_KINDS), u=st.floats(0, 1))
def test_positive_on_interval(kind, u):
    law = make_law(kind)
    assert law.kappa(law.v_min + u * (law.v_max - law.v_min)) > 0


def test_out_of_range_is_clamped_with_warning(caplog):
    law = make_law("porous_cu")
    with caplog.at_level(logging.WARNING):
        k = law.kappa(0.9)
    assert k == law.kappa(0.7)
    assert "clamped" in caplog.text


def test_non_finite_density_rejected():
    with pytest.raises(ValueError):
        make_law("emt").kappa(np.nan)


def test_unknown_law():
    with pytest.raises(ValueError):
        make_law("graphene")


def test_overrides():
    law = make_law("emt", kappa_m=100.0, v_max=0.5)
    assert law.v_max == 0.5
    assert abs(law.kappa(0.0) - 100.0) < 1e-12
