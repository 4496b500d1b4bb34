"""Relative-density field over the annular design patch and the symmetry map
between optimizer variables and density control coefficients.

The density basis is independent of the solution basis: it is the unrefined
design patch with knots inserted on a uniform grid of ``spans_circ`` spans
per quarter (circumferential) and ``spans_radial`` spans (radial). Both
bases share the same parametric square, so the density is sampled at
solution quadrature points by plain parametric evaluation.

Control points on the circumferential seam (``eta = 0`` and ``eta = 1``)
coincide and share one coefficient.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import Patch, _physical_grad
from .splines import KnotVector, knot_insert, nurbs_circle

__all__ = [
    "DensityField",
    "SymmetryMap",
    "make_design_field",
    "make_symmetry_map",
    "eval_density",
    "expand",
    "reduce_gradient",
    "write_density_csv",
    "read_density_csv",
]

SYMMETRY_MODES = ("none", "x", "xy")


@dataclass(frozen=True)
class DensityField:
    """NURBS density field on the design patch.

    ``patch`` carries the density basis together with the geometric control
    net, so the same object supplies basis values and Jacobians.
    ``ref_ctrl`` is the control net of the unperturbed annulus with the same
    knots; symmetry orbits are detected on it.
    """

    patch: Patch
    ref_ctrl: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.patch.basis.shape

    @property
    def m(self) -> int:
        """Number of independent control coefficients (seam merged)."""
        nu, nv = self.shape
        return nu * (nv - 1)

    @property
    def flat_to_coef(self) -> np.ndarray:
        nu, nv = self.shape
        j = np.arange(nv) % (nv - 1)
        return (np.arange(nu)[:, None] * (nv - 1) + j[None, :]).ravel()

    def coef_points(self) -> np.ndarray:
        """Physical location of each coefficient's control point (mm)."""
        nu, nv = self.shape
        return self.patch.ctrl[:, : nv - 1, :].reshape(-1, 2)

    def basis_matrix(self, xi, eta, derivs: bool = False):
        """Sparse map from coefficients to values (and physical gradients).

        Returns ``B`` of shape ``(n_points, m)`` and, when ``derivs`` is set,
        ``(Bx, By)`` of the same shape.
        """
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        _check_inside(xi, eta)
        idx, R, dR, _, J = self.patch.jacobian(xi, eta)
        cols = self.flat_to_coef[idx]
        n, nloc = idx.shape
        rows = np.repeat(np.arange(n), nloc)
        B = sp.csr_matrix((R.ravel(), (rows, cols.ravel())), shape=(n, self.m))
        if not derivs:
            return B
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        dRdx = _physical_grad(dR, inv)
        Bx = sp.csr_matrix((dRdx[:, :, 0].ravel(), (rows, cols.ravel())), shape=(n, self.m))
        By = sp.csr_matrix((dRdx[:, :, 1].ravel(), (rows, cols.ravel())), shape=(n, self.m))
        return B, (Bx, By)

    def evaluate(self, coeffs, xi, eta):
        """Density and its physical gradient at parametric points.

        Returns ``(v, dv_dx, dv_dy)``.
        """
        coeffs = self._check(coeffs)
        B, (Bx, By) = self.basis_matrix(xi, eta, derivs=True)
        return B @ coeffs, Bx @ coeffs, By @ coeffs

    def _check(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (self.m,):
            raise ValueError(f"expected {self.m} density coefficients, got shape {c.shape}")
        return c


def _check_inside(xi, eta):
    tol = 1e-12
    if np.any((xi < -tol) | (xi > 1 + tol) | (eta < -tol) | (eta > 1 + tol)) or not (
        np.all(np.isfinite(xi)) and np.all(np.isfinite(eta))
    ):
        raise ValueError("parametric point outside the design patch")


def _insert_grid(kv: KnotVector, grid: np.ndarray) -> list[float]:
    """Grid values not yet present as knots (each inserted once)."""
    return [float(g) for g in grid if kv.multiplicity(g) == 0]


def make_design_field(design_patch: Patch, spans_circ: int = 4, spans_radial: int = 4) -> DensityField:
    """Density basis on ``design_patch`` (the unrefined annulus).

    Parameters
    ----------
    spans_circ : int
        Circumferential knot spans per quarter turn.
    spans_radial : int
        Radial knot spans.
    """
    if spans_circ < 1 or spans_radial < 1:
        raise ValueError("span counts must be positive")
    basis, ctrl = design_patch.basis, design_patch.ctrl
    new_v = _insert_grid(basis.kv_v, np.arange(1, 4 * spans_circ) / (4 * spans_circ))
    new_u = _insert_grid(basis.kv_u, np.arange(1, spans_radial) / spans_radial)
    if new_v:
        basis, ctrl = knot_insert(basis, ctrl, 1, new_v)
    if new_u:
        basis, ctrl = knot_insert(basis, ctrl, 0, new_u)
    patch = Patch(design_patch.name + "_density", "design", basis, ctrl, design_patch.sides)

    # unperturbed reference annulus (radii 1 and 2) with identical knots
    circ = nurbs_circle(1.0, start_angle=-np.pi / 4)
    extra = []
    for k in np.unique(basis.kv_v.knots[3:-3]):
        extra += [float(k)] * (basis.kv_v.multiplicity(k) - circ.kv.multiplicity(k))
    circ = circ.insert(sorted(extra)) if extra else circ
    if circ.ctrl.shape[0] != basis.shape[1]:
        raise ValueError("design patch circumferential knots are not a refinement of the standard circle")
    U = basis.kv_u.knots
    grev = np.array([U[i + 1] for i in range(basis.kv_u.n)])  # degree-1 Greville points
    ref = (1.0 + grev)[:, None, None] * circ.ctrl[None, :, :]
    return DensityField(patch, ref)


@dataclass(frozen=True)
class SymmetryMap:
    """Assignment of each density coefficient to one optimizer variable."""

    mode: str
    assign: np.ndarray = field(repr=False)
    n_var: int = 0

    @property
    def m(self) -> int:
        return self.assign.size

    def expand(self, variables) -> np.ndarray:
        x = np.asarray(variables, dtype=float)
        if x.shape != (self.n_var,):
            raise ValueError(f"expected {self.n_var} design variables, got shape {x.shape}")
        return x[self.assign]

    def reduce_gradient(self, grad) -> np.ndarray:
        g = np.asarray(grad, dtype=float)
        if g.shape != (self.m,):
            raise ValueError(f"expected gradient of length {self.m}, got shape {g.shape}")
        return np.bincount(self.assign, weights=g, minlength=self.n_var)

    def restrict(self, coeffs) -> np.ndarray:
        """Design variables of symmetric coefficients (inverse of
        :meth:`expand`).

        Raises
        ------
        ValueError
            If coefficients in one orbit differ.
        """
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (self.m,):
            raise ValueError(f"expected {self.m} coefficients, got shape {c.shape}")
        x = np.zeros(self.n_var)
        x[self.assign] = c
        if np.any(np.abs(x[self.assign] - c) > 1e-12 * max(1.0, np.abs(c).max())):
            raise ValueError(f"coefficients do not have {self.mode!r} symmetry")
        return x

    def counts(self) -> np.ndarray:
        return np.bincount(self.assign, minlength=self.n_var)


def make_symmetry_map(field_: DensityField, mode: str = "xy") -> SymmetryMap:
    """Orbits of coefficients under mirror symmetry.

    ``x`` mirrors across the x-axis (``y -> -y``); ``xy`` also across the
    y-axis. Orbits are found on the unperturbed reference net, so star
    shaped variants reuse the circular layout.
    """
    if mode not in SYMMETRY_MODES:
        raise ValueError(f"unknown symmetry mode {mode!r}; expected one of {SYMMETRY_MODES}")
    nu, nv = field_.shape
    pts = field_.ref_ctrl[:, : nv - 1, :].reshape(-1, 2)
    m = pts.shape[0]
    if mode == "none":
        return SymmetryMap(mode, np.arange(m), m)
    mirrors = [np.array([1.0, -1.0])]
    if mode == "xy":
        mirrors.append(np.array([-1.0, 1.0]))
    scale = np.abs(pts).max()
    keys = {tuple(np.round(p / scale, 9)): i for i, p in enumerate(pts)}

    parent = np.arange(m)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for mir in mirrors:
        for i, p in enumerate(pts):
            key = tuple(np.round(p * mir / scale, 9) + 0.0)
            j = keys.get(key)
            if j is None:
                raise ValueError("design net has no mirror partner for a control point")
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(m)])
    _, first, inv = np.unique(roots, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    assign = order[inv]
    return SymmetryMap(mode, assign, int(first.size))


def eval_density(field_: DensityField, coeffs, xi, eta):
    return field_.evaluate(coeffs, xi, eta)


def expand(smap: SymmetryMap, variables) -> np.ndarray:
    return smap.expand(variables)


def reduce_gradient(smap: SymmetryMap, grad) -> np.ndarray:
    return smap.reduce_gradient(grad)


def write_density_csv(field_: DensityField, coeffs, path_or_buf=None) -> str:
    """CSV with columns ``index,x,y,v`` (one row per coefficient).

    Floats use the shortest round-trip representation. Returns the text and
    writes it to ``path_or_buf`` if given.
    """
    coeffs = field_._check(coeffs)
    pts = field_.coef_points()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "x", "y", "v"])
    for i, (p, v) in enumerate(zip(pts, coeffs)):
        w.writerow([i, repr(float(p[0])), repr(float(p[1])), repr(float(v))])
    text = buf.getvalue()
    if path_or_buf is not None:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)
    return text


def read_density_csv(field_: DensityField, path) -> np.ndarray:
    """Coefficients from a CSV written by :func:`write_density_csv`.

    Raises
    ------
    ValueError
        If the file is empty or does not match the field's basis.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no density rows")
    if len(rows) != field_.m:
        raise ValueError(f"{path}: {len(rows)} rows but the design basis has {field_.m} coefficients")
    pts = field_.coef_points()
    v = np.empty(field_.m)
    for r in rows:
        i = int(r["index"])
        if not 0 <= i < field_.m:
            raise ValueError(f"{path}: index {i} out of range")
        xy = np.array([float(r["x"]), float(r["y"])])
        if np.abs(xy - pts[i]).max() > 1e-9 * max(1.0, np.abs(pts).max()):
            raise ValueError(f"{path}: control point {i} does not match the design basis")
        v[i] = float(r["v"])
    return v
