"""Topology-optimization problem: model, density field, reference fields,
objective and constraints wired to primal and adjoint solves.

The objective gradient with respect to the density coefficients is::

    dJ/dv = dJ/dv|explicit - sum_s P_s^T (dK/dv) T_s

with one primal state ``T_s`` and adjoint ``K P_s = dJ/dT_s`` per boundary
condition set ``s`` (one for most objectives, two for the bidirectional
one). Constraint gradients use their own adjoint solve on the same
factorization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import Assembler, Dirichlet, BETA_DEFAULT, GAMMA_DEFAULT
from .errors import ObjectiveError
from .design_field import DensityField, SymmetryMap, make_design_field, make_symmetry_map
from .geometry import MultiPatchModel, build_annulus_model, refine_model
from .linsolve import SolvedState, solve_adjoint, solve_primal
from .materials import KAPPA_INSULATOR, KAPPA_IRON, KAPPA_SENSOR, MaterialLaw, constant, make_law
from .objectives import (
    ConcentrationFlux,
    IntermediatePenalty,
    MaxTemperature,
    ObjectiveSpec,
    ReferenceFields,
    RotationMismatch,
    SquaredDeviation,
)

__all__ = ["ProblemSetup", "Evaluation", "TopOptProblem", "default_bcs", "vertical_bcs"]

log = logging.getLogger(__name__)


def default_bcs() -> dict:
    """300 K on the left, 200 K on the right, adiabatic top and bottom."""
    return {"left": Dirichlet(300.0), "right": Dirichlet(200.0)}


def vertical_bcs() -> dict:
    """300 K on the top, 200 K on the bottom, adiabatic left and right."""
    return {"top": Dirichlet(300.0), "bottom": Dirichlet(200.0)}


_DEFAULT_KAPPA_IN = {
    "cloak": KAPPA_INSULATOR,
    "cloaked_sensor": KAPPA_SENSOR,
    "concentrator": None,
    "rotator": None,
    "cloak_concentrator": None,
    "bidirectional": None,
}


@dataclass
class ProblemSetup:
    """Everything needed to build a :class:`TopOptProblem` (lengths in mm).

    ``kappa_in = None`` selects the objective's default inner material:
    insulator for the cloak, the sensor for the cloaked sensor and base
    material otherwise. ``bcs_vertical`` is the cloak load case of the
    bidirectional objective; ``bcs`` is the main (or concentrator) case.
    """

    L: float = 140.0
    R_in: float = 10.0
    R_out: float = 50.0
    star_in: tuple | None = None
    star_out: tuple | None = None
    levels: int = 3
    spans_circ: int = 4
    spans_radial: int = 4
    symmetry: str = "xy"
    law: MaterialLaw = field(default_factory=lambda: make_law("emt"))
    kappa_base: float = KAPPA_IRON
    kappa_in: float | None = None
    kappa_cloak_reference: float = KAPPA_INSULATOR
    bcs: dict = field(default_factory=default_bcs)
    bcs_vertical: dict = field(default_factory=vertical_bcs)
    sources: tuple = ()
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    constraints: tuple = ()
    beta: float = BETA_DEFAULT
    gamma: float = GAMMA_DEFAULT
    initial: object = None

    def inner_kappa(self) -> float:
        k = self.kappa_in
        if k is None:
            k = _DEFAULT_KAPPA_IN[self.objective.kind]
        return self.kappa_base if k is None else float(k)


@dataclass
class Evaluation:
    """Objective value, sub-terms and gradients at one design point."""

    x: np.ndarray
    J: float
    grad: np.ndarray
    terms: dict
    constraints: list = field(default_factory=list)
    constraint_grads: list = field(default_factory=list)
    states: dict = field(default_factory=dict)


class TopOptProblem:
    """Objective/gradient oracle over the reduced design variables."""

    def __init__(self, setup: ProblemSetup, model: MultiPatchModel | None = None):
        self.setup = setup
        base = build_annulus_model(setup.L, setup.R_in, setup.R_out, setup.star_in, setup.star_out)
        if setup.sources:
            base = base.with_sources(setup.sources)
        self.base_model = base
        self.field: DensityField = make_design_field(base.patches[base.design_patch], setup.spans_circ, setup.spans_radial)
        self.smap: SymmetryMap = make_symmetry_map(self.field, setup.symmetry)
        self.model = model if model is not None else refine_model(base, setup.levels)
        law = setup.law
        self.law = law
        self.lower = np.full(self.n_var, law.v_min)
        self.upper = np.full(self.n_var, law.v_max)
        kind = setup.objective.kind
        self.bc_sets = {"main": setup.bcs}
        if kind == "bidirectional":
            self.bc_sets["vertical"] = setup.bcs_vertical
        self.assemblers = {
            name: Assembler(self.model, self.field, bcs, setup.beta, setup.gamma) for name, bcs in self.bc_sets.items()
        }
        k_in = setup.inner_kappa()
        base_law = constant(setup.kappa_base)
        self.laws = {"in": constant(k_in), "out": base_law, "design": law}
        self.n_solves = 0
        self._cache_key = None
        self._cache = None
        self._build_functionals()

    # ------------------------------------------------------------------ setup
    @property
    def n_var(self) -> int:
        return self.smap.n_var

    @property
    def n_dof(self) -> int:
        return self.model.n_dof

    def initial_point(self) -> np.ndarray:
        init = self.setup.initial
        if init is None:
            return np.full(self.n_var, 0.5 * (self.law.v_min + self.law.v_max))
        arr = np.asarray(init, dtype=float)
        if arr.ndim == 0:
            return np.full(self.n_var, float(arr))
        if arr.shape != (self.n_var,):
            raise ValueError(f"initial design has {arr.size} values, expected {self.n_var}")
        return arr.copy()

    def _solve(self, bc_name: str, laws: dict, coeffs=None) -> SolvedState:
        self.n_solves += 1
        sysm = self.assemblers[bc_name].assemble(laws, coeffs)
        return solve_primal(sysm, label=f"{self.setup.objective.kind}/{bc_name}")

    def reference_fields(self, bc_name: str = "main", kappa_in: float | None = None) -> ReferenceFields:
        """Base plate ``T_bar`` and design-filled-with-base ``T_tilde``."""
        base = constant(self.setup.kappa_base)
        k_in = self.laws["in"] if kappa_in is None else constant(kappa_in)
        T_bar = self._solve(bc_name, {"in": base, "out": base, "design": base}).T
        T_tilde = self._solve(bc_name, {"in": k_in, "out": base, "design": base}).T
        return ReferenceFields(T_bar, T_tilde)

    def _build_functionals(self):
        s = self.setup
        kind = s.objective.kind
        a_main = self.assemblers["main"]
        self.refs = {"main": self.reference_fields("main")}
        refs = self.refs["main"]
        self.cloak = self.sensor = self.conc = self.rot = None
        if kind == "cloak":
            self.cloak = self._cloak_functional(a_main, refs.T_bar, refs.T_tilde, ("out",))
            refs.J_cloak = self.cloak.norm
        elif kind == "cloaked_sensor":
            self.sensor = self._cloak_functional(a_main, refs.T_bar, refs.T_tilde, ("in", "out"))
            refs.J_cloaksen = self.sensor.norm
        if kind in ("concentrator", "cloak_concentrator", "bidirectional"):
            edge = a_main.interface_eval("in", "design", "in")
            self.conc = ConcentrationFlux(edge, self.laws["in"].kappa(0.0), refs.T_bar)
            refs.Psi = self.conc.norm
        if kind == "rotator":
            self.rot = RotationMismatch(a_main.region_quadrature("in"), self.laws["in"].kappa(0.0), refs.T_bar, s.objective.theta)
            refs.J_rtr = self.rot.norm
        if kind in ("cloak_concentrator", "bidirectional"):
            # the inner region is base material here, so the cloak term is
            # normalized by the insulated plate instead of T_tilde
            name = "vertical" if kind == "bidirectional" else "main"
            r = self.reference_fields(name, s.kappa_cloak_reference)
            self.refs[name] = r if name != "main" else self.refs["main"]
            if name == "main":
                refs.T_tilde = r.T_tilde
            self.cloak = self._cloak_functional(self.assemblers[name], r.T_bar, r.T_tilde, ("out",))
            self.refs[name].J_cloak = self.cloak.norm
            self.cloak_state = name
        else:
            self.cloak_state = "main"
        self.penalty = None
        if s.objective.chi > 0:
            for pidx, region, dofs, R, grad, w, x, xi, eta in a_main.bulk:
                if region == "design":
                    self.penalty = IntermediatePenalty(self.field.basis_matrix(xi, eta), w)
        self.constraint_fns = [MaxTemperature(a_main.region_quadrature(("in", "design", "out")), c) for c in s.constraints]

    @staticmethod
    def _cloak_functional(assembler, T_bar, T_tilde, regions) -> SquaredDeviation:
        ops = assembler.region_quadrature(regions)
        norm = SquaredDeviation(ops, T_bar).raw(T_tilde)
        if not norm > 0:
            raise ValueError("cloak normalizer vanishes: the reference with the design filled by base material equals the plate")
        return SquaredDeviation(ops, T_bar, norm)

    # ------------------------------------------------------------- evaluation
    def coefficients(self, x) -> np.ndarray:
        return self.smap.expand(x)

    def evaluate(self, x) -> Evaluation:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if self._cache_key == key:
            return self._cache
        c = self.coefficients(x)
        kind = self.setup.objective.kind
        states = {name: self._solve(name, self.laws, c) for name in self.bc_sets}
        loads = {name: np.zeros(self.n_dof) for name in states}
        terms = {}
        T = states["main"].T
        if kind == "cloak":
            J = terms["J_cloak"] = self.cloak.value(T)
            loads["main"] += self.cloak.load(T)
        elif kind == "cloaked_sensor":
            J = terms["J_cloaksen"] = self.sensor.value(T)
            loads["main"] += self.sensor.load(T)
        elif kind == "rotator":
            J = terms["J_rtr"] = self.rot.value(T)
            loads["main"] += self.rot.load(T)
        elif kind == "concentrator":
            psi = self._psi(T)
            J = terms["J_cntr"] = 1.0 / psi
            terms["Psi_cntr"] = psi
            loads["main"] += -self.conc.load() / psi**2
        else:  # cloak_concentrator, bidirectional
            Tc = states[self.cloak_state].T
            psi = self._psi(T)
            jc = self.cloak.value(Tc)
            terms["J_cloak"] = jc
            terms["Psi_cntr"] = psi
            J = jc + psi**-4
            loads[self.cloak_state] += self.cloak.load(Tc)
            loads["main"] += -4.0 * psi**-5 * self.conc.load()
        grad_c = np.zeros(self.field.m)
        if self.penalty is not None:
            jp = self.penalty.value(c)
            terms["J_pen"] = jp
            J = J + self.setup.objective.chi * jp
            grad_c += self.setup.objective.chi * self.penalty.explicit_gradient(c)
        for name, st in states.items():
            if np.any(loads[name]):
                P = solve_adjoint(st, loads[name]).P
                grad_c -= self.assemblers[name].dK_contract(self.laws, c, P, st.T)
        cons, cgrads = [], []
        for fn in self.constraint_fns:
            g = fn.violation(T)
            P = solve_adjoint(states["main"], fn.load(T)).P
            gc = -self.assemblers["main"].dK_contract(self.laws, c, P, T)
            cons.append(g)
            cgrads.append(self.smap.reduce_gradient(gc))
            terms.setdefault("tau_max", fn.value(T))
        terms["J"] = J
        terms["primal_solves"] = len(states)
        ev = Evaluation(x.copy(), float(J), self.smap.reduce_gradient(grad_c), terms, cons, cgrads, states)
        self._cache_key, self._cache = key, ev
        return ev

    def _psi(self, T) -> float:
        psi = self.conc.value(T)
        if psi == 0 or not np.isfinite(psi):
            raise ObjectiveError("concentration measure vanishes")
        return psi

    def fun(self, x) -> float:
        return self.evaluate(x).J

    def grad(self, x) -> np.ndarray:
        return self.evaluate(x).grad

    def constraint_values(self, x) -> list:
        return self.evaluate(x).constraints

    def constraint_gradients(self, x) -> list:
        return self.evaluate(x).constraint_grads

    def temperature(self, x, bc_name: str = "main") -> np.ndarray:
        return self.evaluate(x).states[bc_name].T
