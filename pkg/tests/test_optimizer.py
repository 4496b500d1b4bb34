import csv

import numpy as np
import pytest

from igatopo.errors import OptimizerError
from igatopo.objectives import ObjectiveSpec
from igatopo.optimizer import (
    STOP_REASONS,
    OptimizerConfig,
    gradient_audit,
    minimize,
    minimize_constrained,
)
from igatopo.problem import ProblemSetup, TopOptProblem


def bowl(center, scale=None):
    center = np.asarray(center, dtype=float)
    s = np.ones_like(center) if scale is None else np.asarray(scale, dtype=float)

    def f(x):
        d = x - center
        return float(np.sum(s * d * d)) + 1.0, 2 * s * d

    return f


class Constrained:
    """(v - 1)^2 summed, with g = v_0 - bound <= 0."""

    def __init__(self, bound):
        self.bound = bound

    def __call__(self, x):
        class V:
            pass

        v = V()
        v.J = float(np.sum((x - 1.0) ** 2))
        v.grad = 2 * (x - 1.0)
        v.terms = {}
        e = np.zeros_like(x)
        e[0] = 1.0
        v.constraints = [x[0] - self.bound]
        v.constraint_grads = [e]
        return v


def test_bowl_interior_minimum():
    res = minimize(bowl(np.full(5, 0.3)), np.full(5, 0.9), 0.0, 1.0, OptimizerConfig(objective_limit=1e-300))
    np.testing.assert_allclose(res.x, 0.3, atol=1e-8)
    assert res.stop_reason in STOP_REASONS


def test_bowl_minimum_outside_box_lands_on_bound():
    res = minimize(bowl(np.full(4, 1.2)), np.full(4, 0.1), 0.0, 1.0, OptimizerConfig(objective_limit=1e-300))
    np.testing.assert_array_equal(res.x, 1.0)


def test_constraint_active_at_solution():
    res = minimize_constrained(Constrained(0.4), np.full(3, 0.2), 0.0, 2.0)
    assert res.x[0] == pytest.approx(0.4, abs=1e-5)
    np.testing.assert_allclose(res.x[1:], 1.0, atol=1e-6)
    assert res.multipliers[0] == pytest.approx(1.2, rel=1e-3)


def test_inactive_constraint_matches_unconstrained():
    cfg = OptimizerConfig(objective_limit=1e-300)
    a = minimize_constrained(Constrained(5.0), np.full(3, 0.2), 0.0, 2.0, cfg)
    b = minimize(lambda x: Constrained(5.0)(x), np.full(3, 0.2), 0.0, 2.0, cfg)
    np.testing.assert_allclose(a.x, b.x, atol=1e-8)
    np.testing.assert_allclose(a.x, 1.0, atol=1e-6)


def test_no_constraints_is_plain_minimize():
    f = bowl([0.2, 0.7, 0.5], [1.0, 3.0, 10.0])
    a = minimize_constrained(f, np.full(3, 0.9), 0.0, 1.0)
    b = minimize(f, np.full(3, 0.9), 0.0, 1.0)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.record.J == b.record.J


def test_infeasible_constraint_raises():
    # v_0 <= -1 cannot hold with v_0 >= 0
    with pytest.raises(OptimizerError) as info:
        minimize_constrained(Constrained(-1.0), np.full(2, 0.5), 0.0, 2.0, OptimizerConfig(max_outer=3))
    assert info.value.iterate is not None


def test_constant_objective_has_zero_gradient():
    res = minimize(lambda x: (4.0, np.zeros_like(x)), np.full(3, 0.5), 0.0, 1.0)
    assert res.stop_reason == "optimality_tolerance"
    assert res.n_iterations == 0
    audit = gradient_audit(lambda x: (4.0, np.zeros_like(x)), np.full(3, 0.5))
    assert np.abs(audit.finite_difference).max() < 1e-10


def test_objective_scaling_keeps_first_direction():
    f1 = bowl([0.2, 0.7, 0.5], [1.0, 3.0, 10.0])

    def f2(x):
        J, g = f1(x)
        return 1e3 * J, 1e3 * g

    steps = []
    for f in (f1, f2):
        res = minimize(f, np.full(3, 0.9), 0.0, 1.0, OptimizerConfig(max_iterations=1))
        steps.append(res.x - 0.9)
    a, b = steps
    cos = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    assert abs(1 - cos) < 1e-10


def test_stop_reasons():
    f = bowl(np.full(3, 0.3))
    assert minimize(f, np.full(3, 0.9), 0, 1, OptimizerConfig(objective_limit=2.0)).stop_reason == "objective_limit"
    assert minimize(f, np.full(3, 0.9), 0, 1, OptimizerConfig(max_iterations=1, objective_limit=1e-300)).stop_reason == "max_iterations"
    r = minimize(f, np.full(3, 0.9), 0, 1, OptimizerConfig(objective_limit=1e-300, optimality_tolerance=1e-4))
    assert r.stop_reason == "optimality_tolerance"
    r = minimize(f, np.full(3, 0.9), 0, 1, OptimizerConfig(objective_limit=1e-300, step_tolerance=0.05, optimality_tolerance=1e-300))
    assert r.stop_reason == "step_tolerance"


def test_non_finite_oracle_raises_with_iterate():
    def f(x):
        return (np.nan if x[0] < 0.5 else float(x @ x)), 2 * x

    with pytest.raises(OptimizerError) as info:
        minimize(f, np.full(2, 0.9), 0.0, 1.0)
    assert info.value.iterate[0] < 0.5


def test_iterates_stay_in_bounds():
    seen = []

    def f(x):
        seen.append(x.copy())
        return bowl([2.0, -1.0, 0.5])(x)

    minimize(f, np.full(3, 0.5), 0.0, 1.0)
    seen = np.array(seen)
    assert seen.min() >= 0.0 and seen.max() <= 1.0


def test_deterministic_history():
    f = bowl([0.2, 0.7, 0.5], [1.0, 3.0, 10.0])
    a = minimize(f, np.full(3, 0.9), 0.0, 1.0)
    b = minimize(f, np.full(3, 0.9), 0.0, 1.0)
    assert a.record.J == b.record.J
    np.testing.assert_array_equal(a.x, b.x)


@pytest.mark.parametrize(
    "kw",
    [{"objective_limit": 0.0}, {"step_tolerance": -1.0}, {"max_iterations": -1}, {"shrink": 1.0}, {"penalty_growth": 1.0}],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OptimizerConfig(**kw)


def test_history_csv(tmp_path):
    f = bowl([0.2, 0.7])
    res = minimize(lambda x: (*f(x), {"J_cloak": f(x)[0]}), np.full(2, 0.9), 0.0, 1.0)
    path = tmp_path / "history.csv"
    res.record.to_csv(path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == len(res.record) == res.n_iterations + 1
    assert list(rows[0]) == ["iteration", "J", "J_cloak", "pg_norm", "step_norm"]
    assert [float(r["J"]) for r in rows] == res.record.J
    J = [float(r["J"]) for r in rows]
    assert all(b <= a for a, b in zip(J, J[1:]))


def test_penalty_only_objective_gradient():
    p = TopOptProblem(ProblemSetup(levels=1, objective=ObjectiveSpec("cloak", chi=1.0)))
    c_only = p.penalty

    def oracle(x):
        c = p.coefficients(x)
        return c_only.value(c), p.smap.reduce_gradient(c_only.explicit_gradient(c))

    x = np.random.default_rng(0).uniform(0.1, 0.9, p.n_var)
    assert gradient_audit(oracle, x).discrepancy < 1e-7
