"""Global conduction system with Nitsche interface coupling and the density
derivative of the stiffness matrix.

Lengths in the model are millimetres; the assembler converts to SI with
``scale`` (1e-3): area elements carry ``scale**2``, gradients ``1/scale`` and
line elements ``scale``. Conductivities are in W/mK, temperatures in K.

The stiffness matrix is affine in the conductivity samples::

    K.data = A_design @ kappa_design + sum_r kappa_r * a_r + K0.data

``kappa_design`` holds the conductivity at every design-region sample (bulk
quadrature points of the design patch and the design side of each
interface), the sums run over constant-material regions and ``K0`` collects
the penalty and Robin terms. The sparsity pattern is fixed, so each design
update only costs one sparse mat-vec.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .design_field import DensityField
from .errors import GeometryError
from .geometry import MultiPatchModel, edge_quadrature, interface_quadrature, quadrature_points
from .materials import MaterialLaw

__all__ = [
    "Dirichlet",
    "Neumann",
    "Robin",
    "LinearSystem",
    "Assembler",
    "RegionQuadrature",
    "EdgeEval",
    "assemble",
    "add_point_sources",
    "apply_dK_dv",
    "delta_kernel",
    "PairCoupling",
    "BETA_DEFAULT",
    "GAMMA_DEFAULT",
]

log = logging.getLogger(__name__)

BETA_DEFAULT = 1e12
GAMMA_DEFAULT = 0.5
MM = 1e-3
_VARIABLE = "<density>"  # tag of density-dependent stiffness entries


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed temperature (K)."""

    value: float


@dataclass(frozen=True)
class Neumann:
    """Prescribed heat-flux vector ``Q`` (W/m^2); the edge receives the
    normal flux ``Q . n``, negative values heat the body."""

    flux: tuple


@dataclass(frozen=True)
class Robin:
    """Convective edge: outward flux ``h (T - T_inf)``."""

    h: float
    T_inf: float


@dataclass
class LinearSystem:
    """Assembled system ``K T = F`` with a Dirichlet set.

    ``K`` is the full (unconstrained) matrix in CSR form.
    """

    K: sp.csr_matrix
    F: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    reducer: "DirichletReducer" = field(repr=False, default=None)
    has_robin: bool = False
    K_soft: sp.csr_matrix | None = field(repr=False, default=None)
    coupling: "PairCoupling | None" = field(repr=False, default=None)

    @property
    def n_dof(self) -> int:
        return self.F.size

    @property
    def free_dofs(self) -> np.ndarray:
        return self.reducer.free


@dataclass(frozen=True)
class RegionQuadrature:
    """Stacked bulk quadrature over a set of patches.

    ``E`` maps DOF values to point values, ``Gx`` / ``Gy`` to physical
    gradients (1/m); ``w`` are SI area weights (m^2); ``x`` in mm.
    """

    E: sp.csr_matrix
    Gx: sp.csr_matrix
    Gy: sp.csr_matrix
    w: np.ndarray
    x: np.ndarray
    patch_of_point: np.ndarray


@dataclass(frozen=True)
class EdgeEval:
    """Evaluation operators on edge quadrature points (SI line weights)."""

    E: sp.csr_matrix
    Gx: sp.csr_matrix
    Gy: sp.csr_matrix
    w: np.ndarray
    normal: np.ndarray
    x: np.ndarray


def delta_kernel(phi, delta):
    """Smoothed point-source kernel ``3/(4 Delta) (1 - phi^2/Delta^2)`` on
    ``phi <= Delta`` and zero outside (units of 1/length)."""
    phi = np.asarray(phi, dtype=float)
    if not delta > 0:
        raise ValueError("source bandwidth must be positive")
    return np.where(phi <= delta, 3.0 / (4.0 * delta) * (1.0 - (phi / delta) ** 2), 0.0)


def _sparse_eval(rows_pts, dofs, vals, n_pts, n_dof):
    nloc = dofs.shape[1]
    r = np.repeat(rows_pts, nloc)
    return sp.csr_matrix((vals.ravel(), (r, dofs.ravel())), shape=(n_pts, n_dof))


def _match_traces(d1, N1, d2, N2, coords, n, tol=1e-12):
    """Pairs ``(dof1, dof2)`` when both interface traces use coincident
    control points with identical basis values at every quadrature point,
    else ``None``."""
    # the quadrature also lists neighbours that vanish on the edge
    u1, u2 = np.unique(d1[np.abs(N1) > tol]), np.unique(d2[np.abs(N2) > tol])
    if u1.size != u2.size or np.intersect1d(u1, u2).size:
        return None
    size = max(1.0, np.abs(coords[np.concatenate([u1, u2])]).max())
    key2 = {tuple(np.round(coords[b] / size, 9)): b for b in u2}
    lookup = np.full(n, -1, dtype=np.int64)
    for a in u1:
        b = key2.get(tuple(np.round(coords[a] / size, 9)))
        if b is None:
            return None
        lookup[a] = b
    if np.unique(lookup[u1]).size != u1.size:
        return None
    npt = N1.shape[0]
    on1 = np.abs(N1) > tol
    if np.any(lookup[d1[on1]] < 0):
        return None
    E1 = _sparse_eval(np.arange(npt), np.where(on1, lookup[d1], 0), np.where(on1, N1, 0.0), npt, n)
    E2 = _sparse_eval(np.arange(npt), d2, N2, npt, n)
    E2.data[np.abs(E2.data) <= tol] = 0.0
    diff = E1 - E2
    diff.eliminate_zeros()
    if diff.nnz and np.abs(diff.data).max() > tol:
        return None
    return np.column_stack([u1, lookup[u1]])


@dataclass(frozen=True)
class PairCoupling:
    """Penalty on interfaces whose traces match DOF by DOF.

    The penalty only sees the differences ``d_k = T[i1_k] - T[i2_k]``. The
    reduced solve uses ``m_k`` and ``d_k`` as unknowns (``T[i1] = m + d/2``,
    ``T[i2] = m - d/2``), which keeps the large penalty out of the rows of
    the mean temperature and avoids cancellation in double precision.

    ``S`` maps reduced unknowns to free temperatures, ``K_pen`` is the
    penalty block in reduced unknowns and ``K_full`` the same penalty in
    temperature DOFs over the whole model.
    """

    i1: np.ndarray
    i2: np.ndarray
    S: sp.csr_matrix
    K_pen: sp.csr_matrix
    K_full: sp.csr_matrix

    @staticmethod
    def build(partner: dict, matched: list, beta: float, n: int, fixed: np.ndarray) -> "PairCoupling":
        i1 = np.array(sorted(partner), dtype=np.int64)
        i2 = np.array([partner[a] for a in i1], dtype=np.int64)
        pid = np.full(n, -1, dtype=np.int64)
        pid[i1] = np.arange(i1.size)
        rows, cols, vals = [], [], []
        for d1, N1, w in matched:
            p = pid[d1]
            N = np.where(p >= 0, N1, 0.0)
            p = np.maximum(p, 0)
            v = beta * w[:, None, None] * N[:, :, None] * N[:, None, :]
            rows.append(np.broadcast_to(p[:, :, None], v.shape).ravel())
            cols.append(np.broadcast_to(p[:, None, :], v.shape).ravel())
            vals.append(v.ravel())
        npair = i1.size
        M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(npair, npair))
        M.sum_duplicates()
        D = sp.csr_matrix(
            (np.r_[np.ones(npair), -np.ones(npair)], (np.r_[np.arange(npair), np.arange(npair)], np.r_[i1, i2])),
            shape=(npair, n),
        )
        K_full = (D.T @ M @ D).tocsr()
        mask = np.ones(n, dtype=bool)
        mask[fixed] = False
        free = np.nonzero(mask)[0]
        loc = np.full(n, -1, dtype=np.int64)
        loc[free] = np.arange(free.size)
        f1, f2 = loc[i1], loc[i2]
        if np.any(f1 < 0) or np.any(f2 < 0):
            raise ValueError("paired interface DOFs must be free")
        nf = free.size
        # columns f1 carry the mean, columns f2 the difference
        keep = np.ones(nf, dtype=bool)
        keep[f1] = keep[f2] = False
        ids = np.nonzero(keep)[0]
        S = sp.csr_matrix(
            (np.r_[np.ones(ids.size), np.ones(npair), np.ones(npair), 0.5 * np.ones(npair), -0.5 * np.ones(npair)],
             (np.r_[ids, f1, f2, f1, f2], np.r_[ids, f1, f1, f2, f2])),
            shape=(nf, nf),
        )
        Mc = M.tocoo()
        K_pen = sp.csr_matrix((Mc.data, (f2[Mc.row], f2[Mc.col])), shape=(nf, nf))
        return PairCoupling(i1, i2, S, K_pen, K_full)


class DirichletReducer:
    """Index maps that pull the free/free and free/fixed blocks out of ``K.data``
    without re-slicing the matrix."""

    def __init__(self, pattern: sp.csr_matrix, fixed: np.ndarray):
        n = pattern.shape[0]
        self.n = n
        self.fixed = np.asarray(fixed, dtype=np.int64)
        mask = np.ones(n, dtype=bool)
        mask[self.fixed] = False
        self.free = np.nonzero(mask)[0]
        probe = pattern.copy().astype(float)
        probe.data = np.arange(1, probe.nnz + 1, dtype=float)
        Kff = probe[self.free][:, self.free].tocsc()
        Kff.sort_indices()
        Kfd = probe[self.free][:, self.fixed].tocsr()
        Kfd.sort_indices()
        self._ff = Kff
        self._ff_map = (Kff.data - 1).astype(np.int64)
        self._fd = Kfd
        self._fd_map = (Kfd.data - 1).astype(np.int64)

    def blocks(self, K: sp.csr_matrix):
        ff = self._ff.copy()
        ff.data = K.data[self._ff_map]
        fd = self._fd.copy()
        fd.data = K.data[self._fd_map]
        return ff, fd


class Assembler:
    """Precomputed assembly for one model, density basis and boundary set.

    Parameters
    ----------
    model : MultiPatchModel
    field : DensityField or None
        Density basis on the ``design`` region; ``None`` treats every region
        as a constant material.
    bcs : dict
        Boundary name -> :class:`Dirichlet` / :class:`Neumann` /
        :class:`Robin`. Unlisted boundaries are adiabatic.
    beta, gamma : float
        Nitsche penalty (W/m^2K) and averaging weight.
    """

    def __init__(
        self,
        model: MultiPatchModel,
        field: DensityField | None,
        bcs: dict,
        beta: float = BETA_DEFAULT,
        gamma: float = GAMMA_DEFAULT,
        scale: float = MM,
    ):
        if not beta > 0:
            raise ValueError("Nitsche penalty must be positive")
        if not 0 < gamma < 1:
            raise ValueError("Nitsche averaging weight must lie in (0, 1)")
        unknown = set(bcs) - model.boundary_names()
        if unknown:
            raise ValueError(f"boundary conditions on unknown boundaries: {sorted(unknown)}")
        self.model, self.field, self.bcs = model, field, dict(bcs)
        self.beta, self.gamma, self.scale = float(beta), float(gamma), float(scale)
        self.n_dof = model.n_dof
        self.variable = field is not None and model.design_patch is not None
        self._build()

    # ----------------------------------------------------------- construction
    def _build(self):
        model, s = self.model, self.scale
        n = self.n_dof
        rows, cols, vals, tags = [], [], [], []  # tag: region name, "K0" or _VARIABLE
        self.bulk = []
        ds_xi, ds_eta = [], []
        n_ds = 0

        def add(r, c, v, tag, sample=None):
            rows.append(np.ascontiguousarray(r).ravel())
            cols.append(np.ascontiguousarray(c).ravel())
            vals.append(np.ascontiguousarray(v).ravel())
            tags.append((tag, r.size, sample))

        for pidx, patch in enumerate(model.patches):
            q = quadrature_points(patch)
            dofs = model.dofs(pidx)[q.idx]
            w = q.w * s * s
            grad = q.dRdx / s
            self.bulk.append((pidx, patch.region, dofs, q.R, grad, w, q.x, q.xi, q.eta))
            gx, gy = grad[:, :, 0], grad[:, :, 1]
            kab = w[:, None, None] * (gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :])
            nloc = dofs.shape[1]
            variable = self.variable and patch.region == "design"
            if not variable:
                # constant material: sum the Gauss points of each element
                npe = q.per_element
                kab = kab.reshape(-1, npe, nloc, nloc).sum(axis=1)
                edofs = dofs[::npe]
            else:
                edofs = dofs
            r = np.broadcast_to(edofs[:, :, None], (edofs.shape[0], nloc, nloc))
            c = np.broadcast_to(edofs[:, None, :], (edofs.shape[0], nloc, nloc))
            if variable:
                sample = np.broadcast_to((n_ds + np.arange(dofs.shape[0]))[:, None, None], r.shape)
                add(r, c, kab, _VARIABLE, sample.ravel())
                ds_xi.append(q.xi)
                ds_eta.append(q.eta)
                n_ds += dofs.shape[0]
            else:
                add(r, c, kab, patch.region)

        # Nitsche interface terms
        self.interfaces = []
        penalty_terms = []
        coords = model.dof_coordinates()
        g = self.gamma
        for it in model.interfaces:
            q1, q2 = interface_quadrature(model, it)
            p1, p2 = model.patches[it.p1], model.patches[it.p2]
            d1 = model.dofs(it.p1)[q1.idx]
            d2 = model.dofs(it.p2)[q2.idx]
            n1 = q1.normal
            w = q1.w * s
            N1, N2 = q1.R, q2.R
            dn1 = np.einsum("qad,qd->qa", q1.dRdx / s, n1)
            dn2 = np.einsum("qad,qd->qa", q2.dRdx / s, n1)
            self.interfaces.append((it, q1, q2, d1, d2, w))
            side_samples = []
            for region, xi_, eta_ in ((p1.region, q1.xi, q1.eta), (p2.region, q2.xi, q2.eta)):
                if self.variable and region == "design":
                    side_samples.append(n_ds + np.arange(xi_.size))
                    ds_xi.append(xi_)
                    ds_eta.append(eta_)
                    n_ds += xi_.size
                else:
                    side_samples.append(None)
            # kappa_1 terms: rows from side 1 and 2, cols side 1
            blocks = [
                (d1, d1, -g * np.einsum("qa,qb->qab", N1, dn1), 0),
                (d2, d1, g * np.einsum("qa,qb->qab", N2, dn1), 0),
                (d1, d2, -(1 - g) * np.einsum("qa,qb->qab", N1, dn2), 1),
                (d2, d2, (1 - g) * np.einsum("qa,qb->qab", N2, dn2), 1),
            ]
            for dr, dc, v, side in blocks:
                v = v * w[:, None, None]
                r = np.broadcast_to(dr[:, :, None], v.shape)
                c = np.broadcast_to(dc[:, None, :], v.shape)
                region = (p1.region, p2.region)[side]
                smp = side_samples[side]
                for rr, cc in ((r, c), (c, r)):  # the symmetric counterpart
                    if smp is not None:
                        add(rr, cc, v, _VARIABLE, np.broadcast_to(smp[:, None, None], v.shape).ravel())
                    else:
                        add(rr, cc, v, region)
            penalty_terms.append((d1, d2, N1, N2, w, _match_traces(d1, N1, d2, N2, coords, n)))

        # boundary terms
        F = np.zeros(n)
        fixed = {}
        self.has_robin = False
        for name, bc in self.bcs.items():
            for pidx, side in model.boundary_edges(name):
                patch = model.patches[pidx]
                if isinstance(bc, Dirichlet):
                    for d in model.dofs(pidx)[patch.side_ctrl_indices(side)]:
                        if d in fixed and fixed[d] != bc.value:
                            log.debug("corner DOF %d prescribed twice; keeping %s", d, fixed[d])
                        fixed.setdefault(int(d), float(bc.value))
                    continue
                eq = edge_quadrature(patch, side)
                dofs = model.dofs(pidx)[eq.idx]
                w = eq.w * s
                if isinstance(bc, Neumann):
                    qn = eq.normal @ np.asarray(bc.flux, dtype=float)
                    np.add.at(F, dofs, -(w * qn)[:, None] * eq.R)
                elif isinstance(bc, Robin):
                    self.has_robin = True
                    v = bc.h * np.einsum("q,qa,qb->qab", w, eq.R, eq.R)
                    add(np.broadcast_to(dofs[:, :, None], v.shape), np.broadcast_to(dofs[:, None, :], v.shape), v, "K0")
                    np.add.at(F, dofs, (bc.h * bc.T_inf * w)[:, None] * eq.R)
                else:
                    raise TypeError(f"unsupported boundary condition {bc!r} on {name}")

        # penalty: matched traces go to the pair-difference block, the rest to K0
        partner, back = {}, {}
        matched = []
        for d1, d2, N1, N2, w, pairs in penalty_terms:
            ok = pairs is not None and not any(int(a) in fixed or int(b) in fixed for a, b in pairs)
            if ok:
                # a DOF may belong to one pair only
                ok = all(
                    partner.get(int(a), int(b)) == int(b) and back.get(int(b), int(a)) == int(a)
                    and int(a) not in back and int(b) not in partner
                    for a, b in pairs
                )
            if ok:
                partner.update((int(a), int(b)) for a, b in pairs)
                back.update((int(b), int(a)) for a, b in pairs)
                matched.append((d1, N1, w))
                continue
            for dr, dc, Na, Nb, sign in ((d1, d1, N1, N1, 1), (d1, d2, N1, N2, -1), (d2, d1, N2, N1, -1), (d2, d2, N2, N2, 1)):
                v = sign * self.beta * np.einsum("q,qa,qb->qab", w, Na, Nb)
                add(np.broadcast_to(dr[:, :, None], v.shape), np.broadcast_to(dc[:, None, :], v.shape), v, "K0")
        self.coupling = None
        if partner:
            self.coupling = PairCoupling.build(partner, matched, self.beta, n, np.array(sorted(fixed), dtype=np.int64))

        # fixed sparsity pattern: deduplicate each constant group first, then
        # merge the (much smaller) key sets
        groups = {}
        design_chunks = []
        for (tag, size, sample), r, c, v in zip(tags, rows, cols, vals):
            if tag == _VARIABLE:
                design_chunks.append((r, c, v, sample))
            else:
                groups.setdefault(tag, []).append((r, c, v))
        reduced = {}
        for tag, chunks in groups.items():
            M = sp.coo_matrix(
                (np.concatenate([c[2] for c in chunks]),
                 (np.concatenate([c[0] for c in chunks]), np.concatenate([c[1] for c in chunks]))),
                shape=(n, n),
            ).tocsr()
            M.sum_duplicates()
            Mc = M.tocoo()
            reduced[tag] = (Mc.row.astype(np.int64) * n + Mc.col, Mc.data)
        key_sets = [k for k, _ in reduced.values()]
        if design_chunks:
            dr = np.concatenate([c[0] for c in design_chunks]).astype(np.int64)
            dc = np.concatenate([c[1] for c in design_chunks]).astype(np.int64)
            dkeys = dr * n + dc
            key_sets.append(np.unique(dkeys))
        keys = np.unique(np.concatenate(key_sets))
        nnz = keys.size
        indptr = np.searchsorted(keys // n, np.arange(n + 1))
        self.pattern = sp.csr_matrix((np.zeros(nnz), keys % n, indptr), shape=(n, n))
        self.nnz = nnz
        self.pattern_rows = keys // n
        self.pattern_cols = keys % n

        self.region_unit = {}
        self.K0 = np.zeros(nnz)
        for tag, (k, v) in reduced.items():
            vec = np.zeros(nnz)
            vec[np.searchsorted(keys, k)] = v
            if tag == "K0":
                self.K0 = vec
            else:
                self.region_unit[tag] = vec
        self.n_design_samples = n_ds
        if self.variable:
            pos = np.searchsorted(keys, dkeys)
            smp = np.concatenate([c[3] for c in design_chunks])
            val = np.concatenate([c[2] for c in design_chunks])
            self.A = sp.csr_matrix((val, (pos, smp)), shape=(nnz, n_ds))
            self.A.sum_duplicates()
            self.AT = self.A.T.tocsr()
            self.sample_xi = np.concatenate(ds_xi)
            self.sample_eta = np.concatenate(ds_eta)
            self.B = self.field.basis_matrix(self.sample_xi, self.sample_eta)
            self.BT = self.B.T.tocsr()
        else:
            self.A = None

        self.dirichlet_dofs = np.array(sorted(fixed), dtype=np.int64)
        self.dirichlet_values = np.array([fixed[d] for d in self.dirichlet_dofs], dtype=float)
        self.F_bc = F
        self.F_src = np.zeros(n)
        if model.sources:
            self.F_src = add_point_sources(np.zeros(n), self, model.sources)
        self.reducer = DirichletReducer(self.pattern, self.dirichlet_dofs)
        self._region_cache = {}

    # ------------------------------------------------------------ evaluation
    def design_density(self, coeffs) -> np.ndarray:
        """Density at every design sample."""
        return self.B @ np.asarray(coeffs, dtype=float)

    def _kappa_region(self, laws: dict, region: str) -> float:
        law = laws[region]
        if not law.is_constant:
            raise ValueError(f"region {region!r} needs a constant material, got {law.kind}")
        return float(law.kappa(0.0))

    def stiffness_data(self, laws: dict, coeffs=None) -> np.ndarray:
        data = self.K0.copy()
        for region, unit in self.region_unit.items():
            data += self._kappa_region(laws, region) * unit
        if self.variable:
            law: MaterialLaw = laws["design"]
            if law.is_constant:
                kap = np.full(self.n_design_samples, float(law.kappa(0.0)))
            else:
                if coeffs is None:
                    raise ValueError("density coefficients required for a graded design region")
                kap = law.kappa(self.design_density(coeffs))
            data += self.A @ kap
        return data

    def assemble(self, laws: dict, coeffs=None) -> LinearSystem:
        K = self.pattern.copy()
        K.data = self.stiffness_data(laws, coeffs)
        full = K if self.coupling is None else (K + self.coupling.K_full).tocsr()
        return LinearSystem(
            full, self.F_bc + self.F_src, self.dirichlet_dofs, self.dirichlet_values, self.reducer, self.has_robin,
            K_soft=K, coupling=self.coupling,
        )

    def dK_contract(self, laws: dict, coeffs, P, T) -> np.ndarray:
        """``P^T (dK/dv_i) T`` for every density coefficient ``v_i``."""
        P = np.asarray(P, dtype=float)
        T = np.asarray(T, dtype=float)
        if P.shape != (self.n_dof,) or T.shape != (self.n_dof,):
            raise ValueError(f"P and T must have length {self.n_dof}")
        if not self.variable:
            return np.zeros(0)
        m = self.field.m
        law = laws["design"]
        if law.is_constant:
            return np.zeros(m)
        prod = P[self.pattern_rows] * T[self.pattern_cols]
        c = self.AT @ prod
        dk = law.dkappa(self.design_density(coeffs))
        return self.BT @ (c * dk)

    # ------------------------------------------------- operators for objectives
    def region_quadrature(self, regions) -> RegionQuadrature:
        """Stacked bulk quadrature over all patches in ``regions``."""
        if isinstance(regions, str):
            regions = (regions,)
        key = tuple(sorted(regions))
        if key in self._region_cache:
            return self._region_cache[key]
        parts = [b for b in self.bulk if b[1] in key]
        if not parts:
            raise ValueError(f"no patches in regions {key}")
        E, Gx, Gy, W, X, P = [], [], [], [], [], []
        for pidx, _, dofs, R, grad, w, x, _, _ in parts:
            npt = w.size
            rows = np.arange(npt)
            E.append(_sparse_eval(rows, dofs, R, npt, self.n_dof))
            Gx.append(_sparse_eval(rows, dofs, grad[:, :, 0], npt, self.n_dof))
            Gy.append(_sparse_eval(rows, dofs, grad[:, :, 1], npt, self.n_dof))
            W.append(w)
            X.append(x)
            P.append(np.full(npt, pidx))
        rq = RegionQuadrature(
            sp.vstack(E).tocsr(), sp.vstack(Gx).tocsr(), sp.vstack(Gy).tocsr(),
            np.concatenate(W), np.vstack(X), np.concatenate(P),
        )
        self._region_cache[key] = rq
        return rq

    def interface_eval(self, region_a: str, region_b: str, side_region: str) -> EdgeEval:
        """Operators on the interfaces between two regions, evaluated on the
        ``side_region`` side, with normals pointing out of ``side_region``."""
        E, Gx, Gy, W, N, X = [], [], [], [], [], []
        for it, q1, q2, d1, d2, w in self.interfaces:
            r1 = self.model.patches[it.p1].region
            r2 = self.model.patches[it.p2].region
            if {r1, r2} != {region_a, region_b}:
                continue
            if r1 == side_region:
                q, d, nrm = q1, d1, q1.normal
            else:
                q, d, nrm = q2, d2, -q1.normal
            npt = w.size
            rows = np.arange(npt)
            grad = q.dRdx / self.scale
            E.append(_sparse_eval(rows, d, q.R, npt, self.n_dof))
            Gx.append(_sparse_eval(rows, d, grad[:, :, 0], npt, self.n_dof))
            Gy.append(_sparse_eval(rows, d, grad[:, :, 1], npt, self.n_dof))
            W.append(w)
            N.append(nrm)
            X.append(q.x)
        if not E:
            raise ValueError(f"no interface between {region_a!r} and {region_b!r}")
        return EdgeEval(
            sp.vstack(E).tocsr(), sp.vstack(Gx).tocsr(), sp.vstack(Gy).tocsr(),
            np.concatenate(W), np.vstack(N), np.vstack(X),
        )


def add_point_sources(F, assembler: Assembler, sources) -> np.ndarray:
    """Add smoothed point sources ``sum_i q_i delta(|x - A_i|)`` to ``F``.

    Source locations are in mm, bandwidths in m.
    """
    F = np.array(F, dtype=float, copy=True)
    x0, x1, y0, y1 = assembler.model.box
    for src in sources:
        ax, ay = map(float, src.location)
        if not (x0 < ax < x1 and y0 < ay < y1):
            raise ValueError(f"point source at {src.location} lies outside the domain")
        if not src.delta > 0:
            raise ValueError("source bandwidth must be positive")
        for _, _, dofs, R, _, w, x, _, _ in assembler.bulk:
            phi = np.hypot(x[:, 0] - ax, x[:, 1] - ay) * assembler.scale
            qb = src.q * delta_kernel(phi, src.delta)
            hit = qb > 0
            if np.any(hit):
                np.add.at(F, dofs[hit], (qb[hit] * w[hit])[:, None] * R[hit])
    return F


def assemble(model: MultiPatchModel, field: DensityField | None, laws: dict, bcs: dict, coeffs=None,
             beta: float = BETA_DEFAULT, gamma: float = GAMMA_DEFAULT) -> LinearSystem:
    """One-shot assembly (builds an :class:`Assembler` and evaluates it)."""
    return Assembler(model, field, bcs, beta, gamma).assemble(laws, coeffs)


def apply_dK_dv(assembler: Assembler, laws: dict, coeffs, P, T) -> np.ndarray:
    return assembler.dK_contract(laws, coeffs, P, T)


def check_geometry(model: MultiPatchModel) -> None:
    """Raise :class:`GeometryError` if any patch folds at a quadrature point."""
    for p in model.patches:
        quadrature_points(p)
    if not model.patches:
        raise GeometryError("model has no patches")
