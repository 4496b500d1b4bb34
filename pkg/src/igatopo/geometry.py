"""Multi-patch NURBS domains: plate, disk/annulus/square-with-hole layouts,
star-shaped perturbations, refinement and quadrature.

Conventions
-----------
Every patch maps ``(xi, eta) in [0, 1]^2`` to the plane with a positive
Jacobian determinant. Patch sides are named ``xi0, xi1, eta0, eta1`` (the
parameter that is held fixed and its value). Control nets have shape
``(n_xi, n_eta, 2)`` and are flattened row-major, matching
:class:`igatopo.splines.RationalBasis`.

For the annulus layout the first parametric direction is radial (degree 1)
and the second circumferential (degree 2, counter-clockwise). Lengths are in
millimetres.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryError
from .splines import KnotVector, NurbsCurve, RationalBasis, eval_rational_vec, knot_insert, nurbs_circle

__all__ = [
    "SIDES",
    "Patch",
    "Interface",
    "Glue",
    "PointSource",
    "MultiPatchModel",
    "QuadratureData",
    "EdgeQuadrature",
    "build_annulus_model",
    "build_plate_model",
    "perturb_star",
    "square_curve",
    "extract_segment",
    "refine_model",
    "quadrature_points",
    "edge_quadrature",
    "interface_quadrature",
    "STAR_KNOTS",
]

SIDES = ("xi0", "xi1", "eta0", "eta1")
SQUARE_SIDES = ("right", "top", "left", "bottom")
# Knots inserted into the 9-point circle before a star perturbation.
STAR_KNOTS = tuple(k / 16 for k in (1, 2, 3, 5, 6, 7, 9, 10, 11, 13, 14, 15))


def _physical_grad(dR, inv):
    """``dR/dx_a = sum_b dR/dxi_b * dxi_b/dx_a`` for stacked points."""
    out = np.empty_like(dR)
    for a in range(2):
        out[:, :, a] = dR[:, :, 0] * inv[:, 0, a][:, None] + dR[:, :, 1] * inv[:, 1, a][:, None]
    return out


def _gauss(n):
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class Patch:
    """One rational tensor-product patch.

    ``sides`` maps each side name to a tag: an external boundary name
    (``left``, ``right``, ``top``, ``bottom``), ``"interface"``, ``"glued"``,
    ``"collapsed"`` or ``"none"``.
    """

    name: str
    region: str
    basis: RationalBasis
    ctrl: np.ndarray = field(repr=False)
    sides: dict = field(default_factory=dict)

    def __post_init__(self):
        ctrl = np.asarray(self.ctrl, dtype=float)
        if ctrl.shape != self.basis.shape + (2,):
            raise GeometryError(f"control net shape {ctrl.shape} does not match basis {self.basis.shape}")
        object.__setattr__(self, "ctrl", ctrl)
        sides = {s: "none" for s in SIDES}
        sides.update(self.sides)
        object.__setattr__(self, "sides", sides)

    @property
    def n_ctrl(self) -> int:
        return self.basis.shape[0] * self.basis.shape[1]

    @property
    def degrees(self) -> tuple[int, int]:
        return self.basis.kv_u.degree, self.basis.kv_v.degree

    def evaluate(self, xi, eta) -> np.ndarray:
        """Physical points for arrays of parameters."""
        idx, R, _ = eval_rational_vec(self.basis, xi, eta, derivs=False)
        P = self.ctrl.reshape(-1, 2)
        return np.einsum("ij,ijk->ik", R, P[idx])

    def jacobian(self, xi, eta):
        """Basis data and the geometric map at arrays of parameters.

        Returns
        -------
        idx, R : local-to-flat indices and rational basis values
        dR : (n, nloc, 2) parametric derivatives
        x : (n, 2) physical points
        J : (n, 2, 2) with ``J[:, a, b] = d x_a / d xi_b``
        """
        idx, R, dR = eval_rational_vec(self.basis, xi, eta)
        P = self.ctrl.reshape(-1, 2)[idx]
        x = np.einsum("ij,ijk->ik", R, P)
        J = np.empty((R.shape[0], 2, 2))
        for a in range(2):
            for b in range(2):
                J[:, a, b] = np.sum(P[:, :, a] * dR[:, :, b], axis=1)
        return idx, R, dR, x, J

    def side_params(self, side: str, t) -> tuple[np.ndarray, np.ndarray]:
        """Parametric coordinates of edge parameter ``t`` on ``side``."""
        t = np.asarray(t, dtype=float)
        c = np.zeros_like(t) if side.endswith("0") else np.ones_like(t)
        if side.startswith("xi"):
            return c, t
        if side.startswith("eta"):
            return t, c
        raise ValueError(f"unknown side {side!r}")

    def side_knots(self, side: str) -> KnotVector:
        """Knot vector running along ``side``."""
        return self.basis.kv_v if side.startswith("xi") else self.basis.kv_u

    def side_ctrl_indices(self, side: str) -> np.ndarray:
        """Flat control indices on ``side`` in increasing edge parameter."""
        nu, nv = self.basis.shape
        grid = np.arange(nu * nv).reshape(nu, nv)
        return {"xi0": grid[0, :], "xi1": grid[-1, :], "eta0": grid[:, 0], "eta1": grid[:, -1]}[side].copy()

    def edge_frame(self, side: str, t):
        """Points, outward unit normals and line-element factors on ``side``.

        The line element is ``|dx/dt|`` so that ``dGamma = factor * dt``.
        """
        xi, eta = self.side_params(side, t)
        _, _, _, x, J = self.jacobian(xi, eta)
        if side.startswith("xi"):
            tan = J[:, :, 1]
            n = np.column_stack([tan[:, 1], -tan[:, 0]])
            if side == "xi0":
                n = -n
        else:
            tan = J[:, :, 0]
            n = np.column_stack([-tan[:, 1], tan[:, 0]])
            if side == "eta0":
                n = -n
        ds = np.linalg.norm(tan, axis=1)
        return x, n / ds[:, None], ds

    def refined(self, levels: int = 1) -> "Patch":
        """Midpoint knot insertion ``levels`` times in both directions."""
        basis, ctrl = self.basis, self.ctrl
        for _ in range(levels):
            basis, ctrl = knot_insert(basis, ctrl, 0, basis.kv_u.midpoints())
            basis, ctrl = knot_insert(basis, ctrl, 1, basis.kv_v.midpoints())
        return replace(self, basis=basis, ctrl=ctrl)


@dataclass(frozen=True)
class Interface:
    """Nitsche-coupled pair of edges.

    Edge parameter ``s in [0, 1]`` maps linearly to ``range1`` on side 1 and
    ``range2`` on side 2; both ranges are traversed in the same physical
    direction. The normal used in the coupling terms is the outward normal
    of side 1.
    """

    p1: int
    side1: str
    range1: tuple
    p2: int
    side2: str
    range2: tuple


@dataclass(frozen=True)
class Glue:
    """Conforming edge pair whose control points are merged one-to-one."""

    p1: int
    side1: str
    p2: int
    side2: str


@dataclass(frozen=True)
class PointSource:
    """Concentrated heat source ``q`` (W) at ``location`` (mm) smeared over
    radius ``delta`` (m)."""

    location: tuple
    q: float
    delta: float


@dataclass(frozen=True)
class MultiPatchModel:
    patches: tuple
    interfaces: tuple = ()
    glues: tuple = ()
    collapsed: tuple = ()
    sources: tuple = ()
    box: tuple = (0.0, 1.0, 0.0, 1.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        object.__setattr__(self, "interfaces", tuple(self.interfaces))
        object.__setattr__(self, "glues", tuple(self.glues))
        object.__setattr__(self, "collapsed", tuple(self.collapsed))
        object.__setattr__(self, "sources", tuple(self.sources))
        gidx, n = self._build_dofs()
        object.__setattr__(self, "_dofs", gidx)
        object.__setattr__(self, "_n_dof", n)

    def _build_dofs(self):
        offsets = np.cumsum([0] + [p.n_ctrl for p in self.patches])
        parent = np.arange(offsets[-1])

        def find(a):
            root = a
            while parent[root] != root:
                root = parent[root]
            while parent[a] != root:
                parent[a], a = root, parent[a]
            return root

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

        tol = 1e-9 * max(1.0, self.size)
        for g in self.glues:
            pa, pb = self.patches[g.p1], self.patches[g.p2]
            ia, ib = pa.side_ctrl_indices(g.side1), pb.side_ctrl_indices(g.side2)
            if ia.size != ib.size:
                raise GeometryError(f"glued edges {pa.name}:{g.side1} and {pb.name}:{g.side2} differ in size")
            xa, xb = pa.ctrl.reshape(-1, 2)[ia], pb.ctrl.reshape(-1, 2)[ib]
            if np.abs(xa - xb).max() > tol:
                raise GeometryError(f"glued edges {pa.name}:{g.side1} and {pb.name}:{g.side2} do not coincide")
            for a, b in zip(ia + offsets[g.p1], ib + offsets[g.p2]):
                union(a, b)
        for pidx, side in self.collapsed:
            ids = self.patches[pidx].side_ctrl_indices(side) + offsets[pidx]
            pts = self.patches[pidx].ctrl.reshape(-1, 2)[ids - offsets[pidx]]
            if np.abs(pts - pts[0]).max() > tol:
                raise GeometryError(f"side {side} of {self.patches[pidx].name} is not collapsed")
            for a in ids[1:]:
                union(ids[0], a)
        roots = np.array([find(a) for a in range(offsets[-1])], dtype=np.int64)
        _, first, inv = np.unique(roots, return_index=True, return_inverse=True)
        # number classes in order of first appearance for a stable layout
        order = np.argsort(np.argsort(first))
        glob = order[inv]
        return [glob[offsets[i] : offsets[i + 1]] for i in range(len(self.patches))], int(first.size)

    @property
    def size(self) -> float:
        x0, x1, y0, y1 = self.box
        return max(x1 - x0, y1 - y0)

    @property
    def n_dof(self) -> int:
        return self._n_dof

    def dofs(self, pidx: int) -> np.ndarray:
        """Global DOF index of every flat control index of patch ``pidx``."""
        return self._dofs[pidx]

    def patch_index(self, name: str) -> int:
        for i, p in enumerate(self.patches):
            if p.name == name:
                return i
        raise KeyError(name)

    def region_patches(self, region: str) -> list[int]:
        return [i for i, p in enumerate(self.patches) if p.region == region]

    @property
    def design_patch(self) -> int | None:
        ids = self.region_patches("design")
        return ids[0] if ids else None

    def boundary_edges(self, name: str) -> list[tuple[int, str]]:
        return [(i, s) for i, p in enumerate(self.patches) for s in SIDES if p.sides[s] == name]

    def boundary_names(self) -> set[str]:
        skip = {"interface", "glued", "collapsed", "none"}
        return {t for p in self.patches for t in p.sides.values() if t not in skip}

    def dof_coordinates(self) -> np.ndarray:
        """Control point location of each global DOF (first occurrence)."""
        X = np.zeros((self.n_dof, 2))
        for i, p in enumerate(self.patches):
            X[self.dofs(i)] = p.ctrl.reshape(-1, 2)
        return X

    def with_sources(self, sources) -> "MultiPatchModel":
        return replace(self, sources=tuple(sources))


@dataclass(frozen=True)
class QuadratureData:
    """Bulk quadrature of one patch. ``w`` already includes ``|det J|``.

    Points are grouped by element: consecutive blocks of ``per_element``
    points share one knot span (and hence one set of basis indices).
    """

    xi: np.ndarray
    eta: np.ndarray
    x: np.ndarray
    w: np.ndarray
    idx: np.ndarray
    R: np.ndarray
    dRdx: np.ndarray
    detJ: np.ndarray
    per_element: int = 1


def quadrature_points(patch: Patch, n_gauss: tuple | int | None = None, check: bool = True) -> QuadratureData:
    """Tensor Gauss rule with ``p + 1`` points per direction per element.

    Raises
    ------
    GeometryError
        If the Jacobian determinant is not positive at a quadrature point.
    """
    pu, pv = patch.degrees
    if n_gauss is None:
        n_gauss = (pu + 1, pv + 1)
    elif np.isscalar(n_gauss):
        n_gauss = (int(n_gauss), int(n_gauss))
    gu, wu = _gauss(n_gauss[0])
    gv, wv = _gauss(n_gauss[1])
    bu, bv = patch.basis.kv_u.breakpoints, patch.basis.kv_v.breakpoints

    def rule(b, g, w):
        a, c = b[:-1, None], b[1:, None]
        return 0.5 * (a + c) + 0.5 * (c - a) * g[None, :], 0.5 * (c - a) * w[None, :]

    # points ordered element by element, Gauss points contiguous per element
    qu, wqu = rule(bu, gu, wu)
    qv, wqv = rule(bv, gv, wv)
    shape = (qu.shape[0], qv.shape[0], qu.shape[1], qv.shape[1])
    xi = np.broadcast_to(qu[:, None, :, None], shape).ravel()
    eta = np.broadcast_to(qv[None, :, None, :], shape).ravel()
    W = (wqu[:, None, :, None] * wqv[None, :, None, :]).ravel()
    idx, R, dR, x, J = patch.jacobian(xi, eta)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if check and np.any(det <= 0):
        k = int(np.argmin(det))
        raise GeometryError(
            f"non-positive Jacobian {det[k]:.3e} in patch {patch.name} at (xi, eta)=({xi[k]:.4f}, {eta[k]:.4f})"
        )
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    # dR/dx_a = sum_b dR/dxi_b * dxi_b/dx_a
    dRdx = _physical_grad(dR, inv)
    return QuadratureData(xi, eta, x, W * np.abs(det), idx, R, dRdx, det, shape[2] * shape[3])


@dataclass(frozen=True)
class EdgeQuadrature:
    """Quadrature on one patch edge. ``w`` includes the line element."""

    xi: np.ndarray
    eta: np.ndarray
    x: np.ndarray
    normal: np.ndarray
    w: np.ndarray
    idx: np.ndarray
    R: np.ndarray
    dRdx: np.ndarray


def _edge_data(patch: Patch, side: str, t: np.ndarray, wt: np.ndarray, normal=None, dt_ds: float = 1.0):
    xi, eta = patch.side_params(side, t)
    idx, R, dR, x, J = patch.jacobian(xi, eta)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0):
        raise GeometryError(f"non-positive Jacobian on edge {side} of patch {patch.name}")
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    dRdx = _physical_grad(dR, inv)
    _, n, ds = patch.edge_frame(side, t)
    if normal is None:
        normal = n
    return EdgeQuadrature(xi, eta, x, normal, wt * ds * dt_ds, idx, R, dRdx)


def _segment_rule(breaks, n):
    g, w = _gauss(n)
    a, c = breaks[:-1, None], breaks[1:, None]
    return (0.5 * (a + c) + 0.5 * (c - a) * g).ravel(), (0.5 * (c - a) * w).ravel()


def edge_quadrature(patch: Patch, side: str, n_gauss: int | None = None) -> EdgeQuadrature:
    """Gauss rule over a whole patch edge (boundary terms)."""
    kv = patch.side_knots(side)
    n = n_gauss or max(patch.degrees) + 1
    t, w = _segment_rule(kv.breakpoints, n)
    return _edge_data(patch, side, t, w)


def interface_quadrature(model: MultiPatchModel, iface: Interface, n_gauss: int | None = None):
    """Matched quadrature on both sides of an interface.

    The rule uses the union of both edges' breakpoints so each Gauss point
    lies inside a single element on either side. Weights and normals refer
    to side 1.
    """
    pa, pb = model.patches[iface.p1], model.patches[iface.p2]
    a0, a1 = iface.range1
    b0, b1 = iface.range2
    ka, kb = pa.side_knots(iface.side1).breakpoints, pb.side_knots(iface.side2).breakpoints
    sa = (ka[(ka >= a0 - 1e-14) & (ka <= a1 + 1e-14)] - a0) / (a1 - a0)
    sb = (kb[(kb >= b0 - 1e-14) & (kb <= b1 + 1e-14)] - b0) / (b1 - b0)
    s = np.unique(np.clip(np.concatenate([sa, sb, [0.0, 1.0]]), 0, 1))
    s = s[np.concatenate([[True], np.diff(s) > 1e-13])]
    n = n_gauss or max(max(pa.degrees), max(pb.degrees)) + 1
    sq, wq = _segment_rule(s, n)
    q1 = _edge_data(pa, iface.side1, a0 + (a1 - a0) * sq, wq, dt_ds=(a1 - a0))
    q2 = _edge_data(pb, iface.side2, b0 + (b1 - b0) * sq, wq, normal=-q1.normal, dt_ds=(b1 - b0))
    q2 = replace(q2, w=q1.w)
    return q1, q2


# ----------------------------------------------------------------- builders


def square_curve(half: float, start_angle: float = -np.pi / 4) -> NurbsCurve:
    """Boundary of the square ``[-half, half]^2`` with the knots and weights of
    :func:`nurbs_circle` rotated by ``start_angle = -pi/4``.

    Each quarter of the parameter range traces one straight side, starting
    with the right side.
    """
    circ = nurbs_circle(1.0, start_angle=start_angle)
    ang = start_angle + np.arange(9) * np.pi / 4
    r = np.where(np.arange(9) % 2 == 0, half * np.sqrt(2.0), half)
    ctrl = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    ctrl[-1] = ctrl[0]
    return NurbsCurve(circ.kv, ctrl, circ.weights)


def extract_segment(curve: NurbsCurve, a: float, b: float) -> NurbsCurve:
    """Sub-curve over ``[a, b]`` where both ends are C0 breakpoints (or ends),
    reparameterized to ``[0, 1]``."""
    p, U = curve.kv.degree, curve.kv.knots
    for t in (a, b):
        if U[0] < t < U[-1] and curve.kv.multiplicity(t) < p:
            raise GeometryError(f"cannot extract at {t}: knot multiplicity below degree")
    i0 = int(np.searchsorted(U, a, side="right")) - 1 - p
    inner = U[(U > a + 1e-14) & (U < b - 1e-14)]
    local = np.concatenate([[a] * (p + 1), inner, [b] * (p + 1)])
    n = local.size - p - 1
    local = (local - a) / (b - a)
    return NurbsCurve(KnotVector(p, local), curve.ctrl[i0 : i0 + n].copy(), curve.weights[i0 : i0 + n].copy())


def perturb_star(ctrl, C: float, k: int, theta0: float) -> np.ndarray:
    """Perturb control points radially: ``r -> r + C r sin(k (theta + theta0))``.

    Polar angles are kept. Expects a circle already refined by knot
    insertion so the star has enough control points.
    """
    if abs(C) >= 1:
        raise ValueError("star amplitude must satisfy |C| < 1")
    P = np.asarray(ctrl, dtype=float)
    r = np.hypot(P[:, 0], P[:, 1])
    th = np.arctan2(P[:, 1], P[:, 0])
    rb = r + C * r * np.sin(k * (th + theta0))
    return np.column_stack([rb * np.cos(th), rb * np.sin(th)])


def _ruled(name, region, c0: NurbsCurve, c1: NurbsCurve, sides) -> Patch:
    """Degree-1 blend between two compatible curves in homogeneous space."""
    if not np.array_equal(c0.kv.knots, c1.kv.knots):
        raise GeometryError("ruled patch requires identical knot vectors")
    w = np.vstack([c0.weights, c1.weights])
    ctrl = np.stack([c0.ctrl, c1.ctrl])
    basis = RationalBasis(KnotVector(1, [0, 0, 1, 1]), c0.kv, w)
    return Patch(name, region, basis, ctrl, sides)


def build_annulus_model(
    L: float = 140.0,
    R_in: float = 10.0,
    R_out: float = 50.0,
    star_in: tuple | None = None,
    star_out: tuple | None = None,
) -> MultiPatchModel:
    """Square plate of side ``L`` with a disk, an annular design ring and four
    outer patches.

    Parameters
    ----------
    star_in, star_out : (C, k, theta0), optional
        Star perturbation of the inner / outer design boundary. When either
        is given both circles first receive the knots :data:`STAR_KNOTS`.

    Patches are ``in`` (disk, centre collapsed), ``design`` (annulus) and
    ``outer0..3`` (one per square side: right, top, left, bottom).
    """
    if not (0 < R_in < R_out < L / 2):
        raise ValueError(f"need 0 < R_in < R_out < L/2, got R_in={R_in}, R_out={R_out}, L={L}")
    start = -np.pi / 4
    inner = nurbs_circle(R_in, start_angle=start)
    outer = nurbs_circle(R_out, start_angle=start)
    square = square_curve(L / 2, start)
    if star_in is not None or star_out is not None:
        inner, outer, square = (c.insert(STAR_KNOTS) for c in (inner, outer, square))
        if star_in is not None:
            inner = inner.with_ctrl(perturb_star(inner.ctrl, *star_in))
        if star_out is not None:
            outer = outer.with_ctrl(perturb_star(outer.ctrl, *star_out))
        rmax = np.hypot(*outer.evaluate(np.linspace(0, 1, 721)).T).max()
        rmin = np.hypot(*outer.evaluate(np.linspace(0, 1, 721)).T).min()
        rin_max = np.hypot(*inner.evaluate(np.linspace(0, 1, 721)).T).max()
        if not (rin_max < rmin and rmax < L / 2):
            raise ValueError("star-shaped boundaries overlap or leave the plate")
    centre = NurbsCurve(inner.kv, np.zeros_like(inner.ctrl), inner.weights)
    patches = [
        _ruled("in", "in", centre, inner, {"xi0": "collapsed", "xi1": "interface", "eta0": "glued", "eta1": "glued"}),
        _ruled("design", "design", inner, outer, {"xi0": "interface", "xi1": "interface", "eta0": "glued", "eta1": "glued"}),
    ]
    for k in range(4):
        a, b = k / 4, (k + 1) / 4
        patches.append(
            _ruled(
                f"outer{k}",
                "out",
                extract_segment(outer, a, b),
                extract_segment(square, a, b),
                {"xi0": "interface", "xi1": SQUARE_SIDES[k], "eta0": "glued", "eta1": "glued"},
            )
        )
    interfaces = [Interface(1, "xi0", (0.0, 1.0), 0, "xi1", (0.0, 1.0))]
    interfaces += [Interface(1, "xi1", (k / 4, (k + 1) / 4), 2 + k, "xi0", (0.0, 1.0)) for k in range(4)]
    glues = [Glue(0, "eta0", 0, "eta1"), Glue(1, "eta0", 1, "eta1")]
    glues += [Glue(2 + k, "eta1", 2 + (k + 1) % 4, "eta0") for k in range(4)]
    h = L / 2
    meta = {"kind": "annulus", "L": L, "R_in": R_in, "R_out": R_out, "star_in": star_in, "star_out": star_out}
    return MultiPatchModel(patches, interfaces, glues, [(0, "xi0")], (), (-h, h, -h, h), meta)


def _plate_patch(name, x0, x1, y0, y1, degrees, n_el, sides) -> Patch:
    kvs = []
    for p, n in zip(degrees, n_el):
        inner = np.linspace(0, 1, n + 1)[1:-1]
        kvs.append(KnotVector(p, np.concatenate([[0] * (p + 1), inner, [1] * (p + 1)])))
    # Greville abscissae give a linear (affine) parameterization
    gu = np.array([kvs[0].knots[i + 1 : i + 1 + degrees[0]].mean() if degrees[0] else 0.5 for i in range(kvs[0].n)])
    gv = np.array([kvs[1].knots[i + 1 : i + 1 + degrees[1]].mean() if degrees[1] else 0.5 for i in range(kvs[1].n)])
    X, Y = np.meshgrid(x0 + (x1 - x0) * gu, y0 + (y1 - y0) * gv, indexing="ij")
    basis = RationalBasis(kvs[0], kvs[1], np.ones((kvs[0].n, kvs[1].n)))
    return Patch(name, "out", basis, np.stack([X, Y], axis=-1), sides)


def build_plate_model(
    L: float = 140.0,
    degrees: tuple = (2, 2),
    n_el: tuple = (8, 8),
    split: float | None = None,
    n_el_right: tuple | None = None,
) -> MultiPatchModel:
    """Homogeneous plate ``[0, L]^2`` as one patch, or two patches joined by a
    Nitsche interface at ``x = split``."""
    if L <= 0:
        raise ValueError("plate size must be positive")
    if split is None:
        sides = {"xi0": "left", "xi1": "right", "eta0": "bottom", "eta1": "top"}
        patches = [_plate_patch("plate", 0, L, 0, L, degrees, n_el, sides)]
        interfaces = []
    else:
        if not 0 < split < L:
            raise ValueError("split must lie strictly inside the plate")
        left = {"xi0": "left", "xi1": "interface", "eta0": "bottom", "eta1": "top"}
        right = {"xi0": "interface", "xi1": "right", "eta0": "bottom", "eta1": "top"}
        patches = [
            _plate_patch("plate_left", 0, split, 0, L, degrees, n_el, left),
            _plate_patch("plate_right", split, L, 0, L, degrees, n_el_right or n_el, right),
        ]
        interfaces = [Interface(0, "xi1", (0.0, 1.0), 1, "xi0", (0.0, 1.0))]
    return MultiPatchModel(patches, interfaces, (), (), (), (0.0, L, 0.0, L), {"kind": "plate", "L": L})


def refine_model(model: MultiPatchModel, levels: int) -> MultiPatchModel:
    """Midpoint knot insertion ``levels`` times in every direction of every
    patch; topology, interfaces and tags are carried over."""
    if levels < 0:
        raise ValueError("levels must be non-negative")
    if levels == 0:
        return model
    patches = [p.refined(levels) for p in model.patches]
    meta = dict(model.meta)
    meta["levels"] = meta.get("levels", 0) + levels
    return replace(model, patches=tuple(patches), meta=meta)
