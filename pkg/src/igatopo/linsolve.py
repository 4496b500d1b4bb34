"""Direct solves of the reduced conduction system and its adjoints.

Dirichlet DOFs are eliminated with lifting; the free/free block is factorized
once per design and reused for every adjoint right-hand side.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import LinearSystem
from .errors import SolverError

__all__ = ["SolvedState", "AdjointState", "solve_primal", "solve_adjoint"]


@dataclass
class SolvedState:
    """Temperature coefficients plus the factorization that produced them."""

    T: np.ndarray
    system: LinearSystem = field(repr=False)
    factor: object = field(repr=False)
    residual: float = 0.0

    def solve_reduced(self, rhs_free: np.ndarray) -> np.ndarray:
        return self.factor.solve(rhs_free)


@dataclass
class AdjointState:
    P: np.ndarray
    load: np.ndarray
    residual: float = 0.0


def _factorize(Kff, label: str):
    try:
        lu = spla.splu(Kff.tocsc(), permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SolverError(f"factorization failed for {label}: {exc}") from exc
    d = lu.U.diagonal()
    if not np.all(np.isfinite(d)) or np.min(np.abs(d)) == 0.0:
        raise SolverError(f"singular stiffness matrix for {label}")
    return lu


class _PairedFactor:
    """Factorization in mean/difference unknowns; ``solve`` acts on free
    temperature DOFs like a plain factor."""

    def __init__(self, lu, S):
        self.lu, self.S, self.ST = lu, S, S.T.tocsr()

    def solve(self, rhs):
        return self.S @ self.lu.solve(self.ST @ rhs)


def _factor_system(system: LinearSystem, label: str):
    red = system.reducer
    cp = system.coupling
    if cp is None:
        Kff, Kfd = red.blocks(system.K)
        return _factorize(Kff, label), Kff, Kfd
    Kff, Kfd = red.blocks(system.K_soft)
    Ky = (cp.S.T @ Kff @ cp.S + cp.K_pen).tocsc()
    return _PairedFactor(_factorize(Ky, label), cp.S), Ky, Kfd


def solve_primal(system: LinearSystem, label: str = "model") -> SolvedState:
    """Solve ``K T = F`` with prescribed Dirichlet values.

    Raises
    ------
    SolverError
        If the problem has neither Dirichlet nor Robin boundaries, or the
        factorization is singular.
    """
    red = system.reducer
    if system.dirichlet_dofs.size == 0 and not system.has_robin:
        raise SolverError(f"{label}: no Dirichlet or Robin boundary, temperature is not determined")
    lu, Kr, Kfd = _factor_system(system, label)
    Td = system.dirichlet_values
    rhs = system.F[red.free] - Kfd @ Td
    Tf = lu.solve(rhs)
    if not np.all(np.isfinite(Tf)):
        raise SolverError(f"{label}: non-finite temperature")
    T = np.empty(system.n_dof)
    T[red.free] = Tf
    T[red.fixed] = Td
    if system.coupling is None:
        r, b = Kr @ Tf - rhs, rhs
    else:
        ST = system.coupling.S.T
        b = ST @ rhs
        r = Kr @ lu.lu.solve(b) - b
    res = np.linalg.norm(r) / max(np.linalg.norm(b), np.finfo(float).tiny)
    return SolvedState(T, system, lu, float(res))


def solve_adjoint(state: SolvedState, load) -> AdjointState:
    """Solve ``K^T P = F_J`` with ``P = 0`` on Dirichlet DOFs.

    ``K`` is symmetric, so the primal factorization is reused.
    """
    load = np.asarray(load, dtype=float)
    red = state.system.reducer
    if load.shape != (state.system.n_dof,):
        raise ValueError(f"adjoint load must have length {state.system.n_dof}")
    rhs = load[red.free]
    P = np.zeros(state.system.n_dof)
    if np.any(rhs):
        P[red.free] = state.factor.solve(rhs)
    return AdjointState(P, load)
