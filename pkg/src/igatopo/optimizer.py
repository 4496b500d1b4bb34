"""Box-constrained projected L-BFGS with Armijo backtracking, an augmented
Lagrangian wrapper for inequality constraints ``g(x) <= 0`` and a
central-difference gradient auditor.

An oracle is any callable ``x -> value``. The value is either a tuple
``(J, grad)`` / ``(J, grad, terms)`` or an object with attributes ``J``,
``grad`` and optionally ``terms``, ``constraints`` and ``constraint_grads``
(see :class:`igatopo.problem.Evaluation`).
"""
from __future__ import annotations

import csv
import logging
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import OptimizerError

__all__ = [
    "OptimizerConfig",
    "RunRecord",
    "OptimizeResult",
    "STOP_REASONS",
    "minimize",
    "minimize_constrained",
    "gradient_audit",
    "AuditResult",
]

log = logging.getLogger(__name__)

STOP_REASONS = ("objective_limit", "step_tolerance", "optimality_tolerance", "max_iterations")


@dataclass(frozen=True)
class OptimizerConfig:
    """Stopping criteria and algorithm constants.

    ``penalty``, ``penalty_growth`` and ``max_outer`` drive the augmented
    Lagrangian; ``feasibility_tolerance`` is absolute in constraint units.
    """

    max_iterations: int = 300
    objective_limit: float = 1e-10
    step_tolerance: float = 1e-10
    optimality_tolerance: float = 1e-10
    memory: int = 10
    armijo: float = 1e-4
    shrink: float = 0.5
    max_trials: int = 40
    initial_step: float = 0.1
    penalty: float = 1.0
    penalty_growth: float = 10.0
    max_outer: int = 12
    feasibility_tolerance: float = 1e-6

    def __post_init__(self):
        for name in ("objective_limit", "step_tolerance", "optimality_tolerance", "feasibility_tolerance", "penalty"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 0 or self.memory < 1 or self.max_trials < 1:
            raise ValueError("iteration limits must be positive")
        if not 0 < self.shrink < 1 or not 0 < self.armijo < 1:
            raise ValueError("line-search constants must lie in (0, 1)")
        if not self.penalty_growth > 1:
            raise ValueError("penalty growth must exceed 1")


@dataclass
class RunRecord:
    """Per-iteration history. Row 0 is the initial point."""

    J: list = field(default_factory=list)
    terms: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    pg_norm: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    def append(self, J, terms, constraints, pg, step, t):
        self.J.append(float(J))
        self.terms.append(dict(terms))
        self.constraints.append([float(c) for c in constraints])
        self.pg_norm.append(float(pg))
        self.step_norm.append(float(step))
        self.wall_time.append(float(t))

    def __len__(self):
        return len(self.J)

    def extend(self, other: "RunRecord"):
        for name in ("J", "terms", "constraints", "pg_norm", "step_norm", "wall_time"):
            getattr(self, name).extend(getattr(other, name))

    def rows(self, include_time: bool = False) -> list[dict]:
        keys = sorted({k for t in self.terms for k in t})
        ncon = max((len(c) for c in self.constraints), default=0)
        out = []
        for i in range(len(self)):
            row = {"iteration": i, "J": self.J[i]}
            for k in keys:
                row[k] = self.terms[i].get(k, "")
            for j in range(ncon):
                c = self.constraints[i]
                row[f"g{j}"] = c[j] if j < len(c) else ""
            row["pg_norm"] = self.pg_norm[i]
            row["step_norm"] = self.step_norm[i]
            if include_time:
                row["wall_time"] = self.wall_time[i]
            out.append(row)
        return out

    def to_csv(self, path, include_time: bool = False) -> None:
        """Write the history; floats in shortest round-trip form.

        Wall time is left out by default so identical runs give identical
        files.
        """
        rows = self.rows(include_time)
        if not rows:
            raise ValueError("empty run record")
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


@dataclass
class OptimizeResult:
    x: np.ndarray
    J: float
    stop_reason: str
    record: RunRecord
    n_iterations: int
    constraints: list = field(default_factory=list)
    multipliers: np.ndarray | None = None


@dataclass
class _Value:
    J: float
    grad: np.ndarray
    terms: dict
    constraints: list
    constraint_grads: list


def _call(oracle, x) -> _Value:
    out = oracle(x)
    if isinstance(out, tuple):
        J, g = out[0], out[1]
        terms = out[2] if len(out) > 2 else {}
        cons, cgrads = [], []
    else:
        J, g = out.J, out.grad
        terms = getattr(out, "terms", {}) or {}
        cons = list(getattr(out, "constraints", []) or [])
        cgrads = list(getattr(out, "constraint_grads", []) or [])
    g = np.asarray(g, dtype=float)
    if not np.isfinite(J) or not np.all(np.isfinite(g)):
        raise OptimizerError("oracle returned a non-finite objective or gradient", iterate=np.array(x, copy=True))
    if not all(np.isfinite(c) for c in cons):
        raise OptimizerError("oracle returned a non-finite constraint", iterate=np.array(x, copy=True))
    return _Value(float(J), g, dict(terms), [float(c) for c in cons], [np.asarray(c, dtype=float) for c in cgrads])


def _bounds(x0, lower, upper):
    x0 = np.asarray(x0, dtype=float)
    lo = np.broadcast_to(np.asarray(lower, dtype=float), x0.shape).copy()
    hi = np.broadcast_to(np.asarray(upper, dtype=float), x0.shape).copy()
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return np.clip(x0, lo, hi), lo, hi


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize(oracle, x0, lower, upper, config: OptimizerConfig | None = None, callback=None) -> OptimizeResult:
    """Projected L-BFGS on ``lower <= x <= upper``.

    Every iterate is projected onto the box before it is evaluated, so the
    record only contains feasible points.

    Raises
    ------
    OptimizerError
        If the oracle returns a non-finite value; ``err.iterate`` holds the
        offending point.
    """
    cfg = config or OptimizerConfig()
    x, lo, hi = _bounds(x0, lower, upper)
    t0 = time.perf_counter()
    val = _call(oracle, x)
    rec = RunRecord()
    pairs: deque = deque(maxlen=cfg.memory)
    span = np.where(hi > lo, hi - lo, 1.0)

    def pg_norm(x, g):
        return float(np.max(np.abs(np.clip(x - g, lo, hi) - x), initial=0.0))

    rec.append(val.J, val.terms, val.constraints, pg_norm(x, val.grad), 0.0, time.perf_counter() - t0)
    reason = "max_iterations"
    it = 0
    while True:
        if val.J <= cfg.objective_limit:
            reason = "objective_limit"
            break
        if rec.pg_norm[-1] <= cfg.optimality_tolerance:
            reason = "optimality_tolerance"
            break
        if it >= cfg.max_iterations:
            break
        g = val.grad
        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        if pairs:
            d = -_two_loop(np.where(active, 0.0, g), list(pairs))
            d[active] = 0.0
            if not d @ g < 0:
                pairs.clear()
        if not pairs:
            gmax = np.max(np.abs(np.where(active, 0.0, g)), initial=0.0)
            d = np.where(active, 0.0, -g) * (cfg.initial_step * np.min(span) / gmax if gmax > 0 else 0.0)
        # Armijo backtracking along the projected path
        alpha = 1.0
        accepted = None
        for _ in range(cfg.max_trials):
            xt = np.clip(x + alpha * d, lo, hi)
            step = xt - x
            if not np.any(step):
                break
            vt = _call(oracle, xt)
            if vt.J <= val.J + cfg.armijo * (g @ step):
                accepted = (xt, vt, step)
                break
            alpha *= cfg.shrink
        it += 1
        if accepted is None:
            if pairs:
                # retry with a steepest-descent step before giving up
                pairs.clear()
                rec.append(val.J, val.terms, val.constraints, rec.pg_norm[-1], 0.0, time.perf_counter() - t0)
                continue
            rec.append(val.J, val.terms, val.constraints, rec.pg_norm[-1], 0.0, time.perf_counter() - t0)
            reason = "step_tolerance"
            break
        xt, vt, step = accepted
        y = vt.grad - g
        sy = step @ y
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(y):
            pairs.append((step, y, 1.0 / sy))
        x, val = xt, vt
        snorm = float(np.max(np.abs(step)))
        rec.append(val.J, val.terms, val.constraints, pg_norm(x, val.grad), snorm, time.perf_counter() - t0)
        if callback is not None:
            callback(it, x, val)
        if snorm <= cfg.step_tolerance:
            reason = "step_tolerance"
            break
    log.info("minimize: %s after %d iterations, J=%.6g", reason, it, val.J)
    return OptimizeResult(x, val.J, reason, rec, it, val.constraints)


def minimize_constrained(oracle, x0, lower, upper, config: OptimizerConfig | None = None,
                         n_constraints: int | None = None) -> OptimizeResult:
    """Augmented Lagrangian for ``g_j(x) <= 0`` around :func:`minimize`.

    The oracle supplies ``constraints`` and ``constraint_grads``. With no
    constraints this is exactly :func:`minimize`. ``max_iterations``
    applies to each inner solve, ``max_outer`` bounds the multiplier
    updates.

    Raises
    ------
    OptimizerError
        If the constraints are still violated after the last penalty level.
    """
    cfg = config or OptimizerConfig()
    x, lo, hi = _bounds(x0, lower, upper)
    first = _call(oracle, x)
    reason = "max_iterations"
    m = len(first.constraints) if n_constraints is None else n_constraints
    if m == 0:
        return minimize(oracle, x, lo, hi, cfg)
    lam = np.zeros(m)
    rho = cfg.penalty
    record = RunRecord()
    total = 0

    def augmented(xv):
        v = _call(oracle, xv)
        g = np.asarray(v.constraints)
        shifted = np.maximum(0.0, lam + rho * g)
        L = v.J + float(np.sum(shifted**2 - lam**2)) / (2 * rho)
        grad = v.grad.copy()
        for j in range(m):
            if shifted[j] > 0:
                grad += shifted[j] * v.constraint_grads[j]
        return _Value(L, grad, v.terms | {"J_objective": v.J}, v.constraints, v.constraint_grads)

    prev_viol = np.inf
    for outer in range(cfg.max_outer):
        res = minimize(augmented, x, lo, hi, cfg)
        record.extend(res.record)
        total += res.n_iterations
        x = res.x
        v = _call(oracle, x)
        g = np.asarray(v.constraints)
        viol = float(np.max(g))
        lam_new = np.maximum(0.0, lam + rho * g)
        log.info("augmented Lagrangian outer %d: J=%.6g max g=%.3g rho=%.3g", outer, v.J, viol, rho)
        reason = res.stop_reason
        settled = np.allclose(lam_new, lam, rtol=1e-6, atol=1e-12)
        lam = lam_new
        if viol <= cfg.feasibility_tolerance and settled:
            break
        if viol > 0.25 * prev_viol:
            rho *= cfg.penalty_growth
        prev_viol = max(viol, 0.0)
    v = _call(oracle, x)
    viol = float(np.max(v.constraints))
    if viol > cfg.feasibility_tolerance:
        raise OptimizerError(
            f"constraints violated by {viol:.3g} after {cfg.max_outer} penalty levels", iterate=np.array(x, copy=True)
        )
    return OptimizeResult(x, v.J, reason, record, total, v.constraints, lam)


@dataclass
class AuditResult:
    """Adjoint versus central-difference gradients."""

    discrepancy: float
    adjoint: np.ndarray
    finite_difference: np.ndarray
    indices: np.ndarray


def gradient_audit(oracle, x, epsilon: float = 1e-6, indices=None, component=None) -> AuditResult:
    """Largest ``|g_adj - g_fd| / max(|g_fd|, 1e-12)`` over the audited
    variables.

    ``component = None`` audits the objective, an integer audits that
    constraint.
    """
    x = np.asarray(x, dtype=float)
    idx = np.arange(x.size) if indices is None else np.asarray(indices, dtype=np.int64)

    def pick(v):
        if component is None:
            return v.J, v.grad
        return v.constraints[component], v.constraint_grads[component]

    _, g = pick(_call(oracle, x))
    fd = np.empty(idx.size)
    for k, i in enumerate(idx):
        e = np.zeros_like(x)
        e[i] = epsilon
        fp, _ = pick(_call(oracle, x + e))
        fm, _ = pick(_call(oracle, x - e))
        fd[k] = (fp - fm) / (2 * epsilon)
    ga = g[idx]
    disc = np.abs(ga - fd) / np.maximum(np.abs(fd), 1e-12)
    return AuditResult(float(np.max(disc, initial=0.0)), ga, fd, idx)
