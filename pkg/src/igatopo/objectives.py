"""Objective functionals and the maximum-temperature constraint.

Each functional is built from sparse evaluation operators (see
:class:`igatopo.assembly.RegionQuadrature`) and exposes

* ``value(T)`` with sub-terms,
* ``load(T)``: the derivative with respect to the temperature DOFs, used as
  the adjoint right-hand side,

and, for functionals that depend on the density directly,
``explicit_gradient(coeffs)``. All integrals are in SI units.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import EdgeEval, RegionQuadrature
from .errors import ObjectiveError

__all__ = [
    "ReferenceFields",
    "ObjectiveSpec",
    "ConstraintSpec",
    "OBJECTIVE_KINDS",
    "SquaredDeviation",
    "ConcentrationFlux",
    "RotationMismatch",
    "IntermediatePenalty",
    "MaxTemperature",
    "eval_cloak",
    "eval_intermediate_penalty",
    "eval_concentrator",
    "eval_rotator",
    "eval_cloaked_sensor",
    "eval_cloak_concentrator",
    "eval_bidirectional",
    "eval_max_temp_constraint",
]

OBJECTIVE_KINDS = ("cloak", "concentrator", "rotator", "cloaked_sensor", "cloak_concentrator", "bidirectional")


@dataclass
class ReferenceFields:
    """Reference temperatures and normalizers for one geometry and BC set.

    ``T_bar`` solves the homogeneous base plate, ``T_tilde`` the plate whose
    design region is filled with base material (inner region unchanged).
    """

    T_bar: np.ndarray
    T_tilde: np.ndarray | None = None
    J_cloak: float | None = None
    Psi: float | None = None
    J_rtr: float | None = None
    J_cloaksen: float | None = None


@dataclass(frozen=True)
class ObjectiveSpec:
    """Objective selection.

    ``chi`` adds the intermediate-density penalty; ``theta`` is the rotator
    angle (rad).
    """

    kind: str = "cloak"
    chi: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective {self.kind!r}; expected one of {OBJECTIVE_KINDS}")
        if self.chi < 0:
            raise ValueError("penalty weight must be non-negative")


@dataclass(frozen=True)
class ConstraintSpec:
    """Maximum-temperature constraint ``tau_max <= T_max`` over a disk."""

    T_max: float
    radius: float = 15.0
    center: tuple = (0.0, 0.0)
    A: float = 1.5
    kind: str = "max_temperature"

    def __post_init__(self):
        if not self.A > 1:
            raise ValueError("aggregation base A must exceed 1")
        if not self.radius > 0:
            raise ValueError("constraint radius must be positive")


class SquaredDeviation:
    """``int_Omega (T - T_ref)^2 dOmega / norm`` over the operator's region."""

    def __init__(self, ops: RegionQuadrature, T_ref: np.ndarray, norm: float = 1.0):
        self.ops = ops
        self.ref_q = ops.E @ T_ref
        self.norm = float(norm)
        if not self.norm > 0:
            raise ObjectiveError("normalizer must be positive")

    def raw(self, T) -> float:
        d = self.ops.E @ T - self.ref_q
        return float(np.sum(self.ops.w * d * d))

    def value(self, T) -> float:
        return self.raw(T) / self.norm

    def load(self, T) -> np.ndarray:
        d = self.ops.E @ T - self.ref_q
        return 2.0 * (self.ops.E.T @ (self.ops.w * d)) / self.norm


class ConcentrationFlux:
    """Heat entering the inner region through its inflow half boundary,
    relative to the reference plate.

    The inflow half is fixed by the reference flux: points where the
    reference heat flux enters the inner region (``q_bar . n < 0`` with ``n``
    the outward normal of the inner region).
    """

    def __init__(self, edge: EdgeEval, kappa_in: float, T_bar: np.ndarray):
        self.edge = edge
        self.kappa = float(kappa_in)
        nx, ny = edge.normal[:, 0], edge.normal[:, 1]
        # q . n = -kappa grad T . n
        self.Qn = -self.kappa * (sp.diags(nx) @ edge.Gx + sp.diags(ny) @ edge.Gy)
        qn_ref = self.Qn @ T_bar
        self.mask = qn_ref < 0
        if not np.any(self.mask):
            raise ObjectiveError("reference field has no inflow into the inner region")
        self.wm = edge.w * self.mask
        self.norm = float(self.wm @ qn_ref)

    def raw(self, T) -> float:
        return float(self.wm @ (self.Qn @ T))

    def value(self, T) -> float:
        return self.raw(T) / self.norm

    def load(self, T=None) -> np.ndarray:
        return (self.Qn.T @ self.wm) / self.norm


class RotationMismatch:
    """``int_in |q - R(theta) q_bar|^2 / int_in |q_bar|^2`` with ``q = -kappa grad T``."""

    def __init__(self, ops: RegionQuadrature, kappa_in: float, T_bar: np.ndarray, theta: float):
        self.ops = ops
        self.kappa = float(kappa_in)
        qx, qy = -self.kappa * (ops.Gx @ T_bar), -self.kappa * (ops.Gy @ T_bar)
        c, s = np.cos(theta), np.sin(theta)
        self.tx, self.ty = c * qx - s * qy, s * qx + c * qy
        self.norm = float(np.sum(ops.w * (qx * qx + qy * qy)))
        if not self.norm > 0:
            raise ObjectiveError("reference flux vanishes in the inner region")

    def value(self, T) -> float:
        dx = -self.kappa * (self.ops.Gx @ T) - self.tx
        dy = -self.kappa * (self.ops.Gy @ T) - self.ty
        return float(np.sum(self.ops.w * (dx * dx + dy * dy))) / self.norm

    def load(self, T) -> np.ndarray:
        dx = -self.kappa * (self.ops.Gx @ T) - self.tx
        dy = -self.kappa * (self.ops.Gy @ T) - self.ty
        w = self.ops.w
        return -2.0 * self.kappa * (self.ops.Gx.T @ (w * dx) + self.ops.Gy.T @ (w * dy)) / self.norm


class IntermediatePenalty:
    """``int_design v^4 (1 - v)^4 dOmega`` and its coefficient gradient."""

    def __init__(self, B: sp.csr_matrix, w: np.ndarray):
        self.B = B
        self.BT = B.T.tocsr()
        self.w = w

    def value(self, coeffs) -> float:
        v = self.B @ coeffs
        return float(np.sum(self.w * v**4 * (1 - v) ** 4))

    def explicit_gradient(self, coeffs) -> np.ndarray:
        v = self.B @ coeffs
        return self.BT @ (self.w * 4 * v**3 * (1 - v) ** 3 * (1 - 2 * v))


class MaxTemperature:
    """Exponentially weighted mean ``int T A^T H / int A^T H`` over a disk.

    ``H`` is the sharp indicator of the disk at quadrature points. The
    weights are shifted by the maximum point temperature, which leaves the
    quotient unchanged and avoids overflow.
    """

    def __init__(self, ops: RegionQuadrature, spec: ConstraintSpec):
        r = np.hypot(ops.x[:, 0] - spec.center[0], ops.x[:, 1] - spec.center[1])
        H = r <= spec.radius
        if not np.any(H):
            raise ValueError("constraint region contains no quadrature points")
        self.E = ops.E[np.nonzero(H)[0]]
        self.ET = self.E.T.tocsr()
        self.w = ops.w[H]
        self.lnA = float(np.log(spec.A))
        self.spec = spec

    def _weights(self, T):
        Tq = self.E @ T
        e = np.exp(self.lnA * (Tq - Tq.max()))
        return Tq, self.w * e

    def value(self, T) -> float:
        Tq, we = self._weights(T)
        return float(np.sum(we * Tq) / np.sum(we))

    def load(self, T) -> np.ndarray:
        Tq, we = self._weights(T)
        D = np.sum(we)
        tau = np.sum(we * Tq) / D
        return self.ET @ (we * (1 + self.lnA * (Tq - tau)) / D)

    def violation(self, T) -> float:
        return self.value(T) - self.spec.T_max


# thin functional wrappers -------------------------------------------------


def eval_cloak(T, functional: SquaredDeviation) -> float:
    return functional.value(T)


def eval_cloaked_sensor(T, functional: SquaredDeviation) -> float:
    return functional.value(T)


def eval_intermediate_penalty(coeffs, penalty: IntermediatePenalty):
    return penalty.value(coeffs), penalty.explicit_gradient(coeffs)


def eval_concentrator(T, functional: ConcentrationFlux):
    """``(Psi, J)`` with ``J = 1 / Psi``."""
    psi = functional.value(T)
    if psi == 0 or not np.isfinite(psi):
        raise ObjectiveError("concentration measure vanishes")
    return psi, 1.0 / psi


def eval_rotator(T, functional: RotationMismatch) -> float:
    return functional.value(T)


def eval_cloak_concentrator(T, cloak: SquaredDeviation, conc: ConcentrationFlux):
    """``J_cloak + Psi^-4`` evaluated on one temperature field."""
    psi, _ = eval_concentrator(T, conc)
    return cloak.value(T) + psi**-4


def eval_bidirectional(T_horiz, T_vert, cloak: SquaredDeviation, conc: ConcentrationFlux):
    """``J_cloak(T_vert) + Psi(T_horiz)^-4``."""
    psi, _ = eval_concentrator(T_horiz, conc)
    return cloak.value(T_vert) + psi**-4


def eval_max_temp_constraint(T, functional: MaxTemperature):
    """``(tau_max, tau_max - T_max)``."""
    tau = functional.value(T)
    return tau, tau - functional.spec.T_max
