"""B-spline and NURBS kernels: Cox-de Boor evaluation, rational tensor-product
bases and Boehm knot insertion.

All evaluators return only the ``p + 1`` non-zero functions of a span together
with the span index; mapping local functions to global unknowns is left to the
caller. The ``*_vec`` variants work on arrays of parameters and are what the
assembly code uses; the scalar functions are thin wrappers around them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KnotVector",
    "RationalBasis",
    "NurbsCurve",
    "find_span",
    "basis_funs_vec",
    "eval_basis",
    "eval_basis_derivs",
    "eval_rational",
    "eval_rational_vec",
    "knot_insert",
    "curve_knot_insert",
    "nurbs_circle",
]

_KNOT_TOL = 1e-14


@dataclass(frozen=True)
class KnotVector:
    """Clamped (open) knot vector of degree ``degree``.

    Parameters
    ----------
    degree : int
        Polynomial degree ``p >= 0``.
    knots : array_like
        Non-decreasing knots; first and last values repeated ``p + 1`` times.
    """

    degree: int
    knots: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = int(self.degree)
        U = np.asarray(self.knots, dtype=float).copy()
        U.setflags(write=False)
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", U)
        if p < 0:
            raise ValueError(f"degree must be non-negative, got {p}")
        if U.ndim != 1 or U.size < 2 * (p + 1):
            raise ValueError(f"need at least {2 * (p + 1)} knots for degree {p}, got {U.size}")
        if np.any(np.diff(U) < 0):
            raise ValueError("knots must be non-decreasing")
        if not (np.all(U[: p + 1] == U[0]) and np.all(U[-p - 1 :] == U[-1])):
            raise ValueError("knot vector must be clamped (end knots repeated p+1 times)")
        if U[-1] <= U[0]:
            raise ValueError("knot vector has zero length")
        interior = U[p + 1 : -p - 1]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if counts.max() > p:
                raise ValueError(f"interior knot multiplicity exceeds degree {p}")

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    @property
    def n_elements(self) -> int:
        return self.breakpoints.size - 1

    def multiplicity(self, u: float) -> int:
        return int(np.count_nonzero(np.abs(self.knots - u) <= _KNOT_TOL))

    def midpoints(self) -> np.ndarray:
        """Midpoints of all non-empty knot spans."""
        b = self.breakpoints
        return 0.5 * (b[:-1] + b[1:])

    def element_spans(self) -> np.ndarray:
        """Span index ``i`` (``U[i] < U[i+1]``) of every non-empty element."""
        U = self.knots
        idx = np.nonzero(U[1:] > U[:-1])[0]
        return idx


def find_span(kv: KnotVector, x) -> np.ndarray:
    """Span indices ``i`` with ``U[i] <= x < U[i+1]`` (last span closed)."""
    x = np.asarray(x, dtype=float)
    p, U = kv.degree, kv.knots
    span = np.searchsorted(U, x, side="right") - 1
    return np.clip(span, p, kv.n - 1)


def _check_range(kv: KnotVector, x: np.ndarray) -> None:
    lo, hi = kv.domain
    tol = 1e-12 * (hi - lo)
    if not np.all(np.isfinite(x)):
        raise ValueError("parameter is not finite")
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        bad = x[(x < lo - tol) | (x > hi + tol)]
        raise ValueError(f"parameter {bad[0]!r} outside knot range [{lo}, {hi}]")


def basis_funs_vec(kv: KnotVector, x, nders: int = 0):
    """Non-zero basis functions and derivatives at many parameters.

    Returns
    -------
    span : ndarray of int, shape (n,)
    ders : ndarray, shape (n, nders + 1, p + 1)
        ``ders[:, k, j]`` is the k-th derivative of ``N_{span-p+j}``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_range(kv, x)
    p, U = kv.degree, kv.knots
    if nders > p:
        raise ValueError(f"derivative order {nders} exceeds degree {p}")
    lo, hi = kv.domain
    x = np.clip(x, lo, hi)
    span = find_span(kv, x)
    m = x.size

    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - U[span + 1 - j]
        right[:, j] = U[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, nders + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    if nders == 0:
        return span, ders

    a = np.zeros((m, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[:, 0, 0] = 1.0
        for k in range(1, nders + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d += a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d += a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d += a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1

    fac = p
    for k in range(1, nders + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return span, ders


def eval_basis(kv: KnotVector, xi: float):
    """Span index and the ``p + 1`` non-zero B-spline values at ``xi``."""
    span, ders = basis_funs_vec(kv, [xi], 0)
    return int(span[0]), ders[0, 0].copy()


def eval_basis_derivs(kv: KnotVector, xi: float, k: int):
    """Span index and an array ``(k + 1, p + 1)`` of values and derivatives."""
    if k > kv.degree:
        raise ValueError(f"derivative order {k} exceeds degree {kv.degree}")
    span, ders = basis_funs_vec(kv, [xi], k)
    return int(span[0]), ders[0].copy()


@dataclass(frozen=True)
class RationalBasis:
    """Bivariate NURBS basis: two knot vectors and positive weights.

    ``weights`` has shape ``(kv_u.n, kv_v.n)``; control index ``(i, j)`` is
    flattened row-major as ``i * kv_v.n + j``.
    """

    kv_u: KnotVector
    kv_v: KnotVector
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        if w.shape != (self.kv_u.n, self.kv_v.n):
            raise ValueError(f"weights shape {w.shape} != {(self.kv_u.n, self.kv_v.n)}")
        if not np.all(w > 0):
            raise ValueError("NURBS weights must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.kv_u.n, self.kv_v.n

    @property
    def n_local(self) -> int:
        return (self.kv_u.degree + 1) * (self.kv_v.degree + 1)


def eval_rational_vec(basis: RationalBasis, xi, eta, derivs: bool = True):
    """Rational basis at arrays of parameters.

    Returns
    -------
    idx : (n, nloc) int
        Flat control indices of the non-zero functions.
    R : (n, nloc)
    dR : (n, nloc, 2) or None
        Parametric derivatives ``(d/dxi, d/deta)``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    pu, pv = basis.kv_u.degree, basis.kv_v.degree
    nd_u = 1 if (derivs and pu > 0) else 0
    nd_v = 1 if (derivs and pv > 0) else 0
    su, Nu = basis_funs_vec(basis.kv_u, xi, nd_u)
    sv, Nv = basis_funs_vec(basis.kv_v, eta, nd_v)
    m = xi.size
    iu = su[:, None] - pu + np.arange(pu + 1)[None, :]
    jv = sv[:, None] - pv + np.arange(pv + 1)[None, :]
    nv_tot = basis.kv_v.n
    idx = (iu[:, :, None] * nv_tot + jv[:, None, :]).reshape(m, -1)
    w = basis.weights.ravel()[idx]

    B = (Nu[:, 0, :, None] * Nv[:, 0, None, :]).reshape(m, -1) * w
    W = B.sum(axis=1)
    R = B / W[:, None]
    if not derivs:
        return idx, R, None
    dU = np.zeros((m, pu + 1)) if nd_u == 0 else Nu[:, 1, :]
    dV = np.zeros((m, pv + 1)) if nd_v == 0 else Nv[:, 1, :]
    Bu = (dU[:, :, None] * Nv[:, 0, None, :]).reshape(m, -1) * w
    Bv = (Nu[:, 0, :, None] * dV[:, None, :]).reshape(m, -1) * w
    Wu = Bu.sum(axis=1)
    Wv = Bv.sum(axis=1)
    dR = np.empty((m, idx.shape[1], 2))
    dR[:, :, 0] = (Bu - R * Wu[:, None]) / W[:, None]
    dR[:, :, 1] = (Bv - R * Wv[:, None]) / W[:, None]
    return idx, R, dR


def eval_rational(basis: RationalBasis, xi: float, eta: float):
    """Non-zero rational functions and first derivatives at one point.

    Returns ``(idx, R, dR_dxi, dR_deta)`` with flat control indices ``idx``.
    """
    idx, R, dR = eval_rational_vec(basis, [xi], [eta])
    return idx[0], R[0], dR[0, :, 0], dR[0, :, 1]


def curve_knot_insert(kv: KnotVector, Pw: np.ndarray, u: float):
    """Insert ``u`` once into a curve with homogeneous control points ``Pw``.

    ``Pw`` has shape ``(n, ...)``; trailing axes are carried along, which is
    how surface insertion reuses this routine.
    """
    p, U = kv.degree, kv.knots
    lo, hi = kv.domain
    if not (lo < u < hi):
        raise ValueError(f"new knot {u!r} not inside open interval ({lo}, {hi})")
    if kv.multiplicity(u) + 1 > p:
        raise ValueError(f"inserting {u!r} would exceed multiplicity {p}")
    k = int(find_span(kv, u))
    n = kv.n
    Q = np.empty((n + 1,) + Pw.shape[1:])
    Q[: k - p + 1] = Pw[: k - p + 1]
    Q[k + 1 :] = Pw[k:]
    for i in range(k - p + 1, k + 1):
        alpha = (u - U[i]) / (U[i + p] - U[i])
        Q[i] = alpha * Pw[i] + (1.0 - alpha) * Pw[i - 1]
    newU = np.insert(U, k + 1, u)
    return KnotVector(p, newU), Q


def knot_insert(basis: RationalBasis, ctrl: np.ndarray, direction: int, new_knots):
    """Insert knots in parametric direction 0 (u) or 1 (v).

    ``ctrl`` has shape ``(nu, nv, dim)``. Returns the refined basis and control
    net; the geometric map is unchanged.
    """
    if direction not in (0, 1):
        raise ValueError("direction must be 0 or 1")
    ctrl = np.asarray(ctrl, dtype=float)
    w = basis.weights
    Pw = np.concatenate([ctrl * w[..., None], w[..., None]], axis=-1)
    kv = basis.kv_u if direction == 0 else basis.kv_v
    if direction == 1:
        Pw = np.swapaxes(Pw, 0, 1)
    for u in np.atleast_1d(np.asarray(new_knots, dtype=float)):
        kv, Pw = curve_knot_insert(kv, Pw, float(u))
    if direction == 1:
        Pw = np.swapaxes(Pw, 0, 1)
    w_new = Pw[..., -1]
    ctrl_new = Pw[..., :-1] / w_new[..., None]
    if direction == 0:
        nb = RationalBasis(kv, basis.kv_v, w_new)
    else:
        nb = RationalBasis(basis.kv_u, kv, w_new)
    return nb, ctrl_new


@dataclass(frozen=True)
class NurbsCurve:
    """Planar NURBS curve (used for patch boundaries)."""

    kv: KnotVector
    ctrl: np.ndarray
    weights: np.ndarray

    def evaluate(self, t) -> np.ndarray:
        span, N = basis_funs_vec(self.kv, t, 0)
        p = self.kv.degree
        idx = span[:, None] - p + np.arange(p + 1)
        wN = N[:, 0, :] * self.weights[idx]
        W = wN.sum(axis=1)
        return np.einsum("ij,ijk->ik", wN, self.ctrl[idx]) / W[:, None]

    def insert(self, knots) -> "NurbsCurve":
        kv, Pw = self.kv, np.column_stack([self.ctrl * self.weights[:, None], self.weights])
        for u in np.atleast_1d(np.asarray(knots, dtype=float)):
            kv, Pw = curve_knot_insert(kv, Pw, float(u))
        return NurbsCurve(kv, Pw[:, :2] / Pw[:, 2:], Pw[:, 2].copy())

    def with_ctrl(self, ctrl) -> "NurbsCurve":
        return NurbsCurve(self.kv, np.asarray(ctrl, dtype=float), self.weights)


def nurbs_circle(radius: float, center=(0.0, 0.0), start_angle: float = 0.0) -> NurbsCurve:
    """Exact full circle: quadratic, 9 control points, C0 at quarter knots.

    Vertices on the circle carry weight 1, polygon corners weight sqrt(2)/2.
    ``start_angle`` rotates the construction (the first control point sits at
    that polar angle).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    kv = KnotVector(2, [0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1])
    ang = start_angle + np.arange(9) * np.pi / 4
    r = np.where(np.arange(9) % 2 == 0, radius, radius * np.sqrt(2.0))
    ctrl = np.column_stack([center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)])
    ctrl[-1] = ctrl[0]
    w = np.where(np.arange(9) % 2 == 0, 1.0, np.sqrt(2.0) / 2.0)
    return NurbsCurve(kv, ctrl, w)
