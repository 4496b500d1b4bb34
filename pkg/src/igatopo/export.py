"""Field exports on a fixed per-element subdivision.

Each knot-span element of every patch is sampled on an ``(s + 1) x (s + 1)``
grid. Samples are written as a legacy ASCII VTK unstructured grid of quads
and as CSV. CSV floats use the shortest round-trip representation, so
identical runs give identical files.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import MultiPatchModel, _physical_grad

__all__ = ["FieldSamples", "sample_fields", "write_vtk", "write_fields_csv"]

# shift off a collapsed edge where the Jacobian is singular
_COLLAPSE_OFFSET = 1e-6


@dataclass
class FieldSamples:
    """Point samples plus quad connectivity.

    ``q`` is the heat flux ``-kappa grad T`` (W/m^2); ``v`` is the density
    (NaN outside the design region); ``dT = T - T_bar`` when a reference is
    given.
    """

    patch: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    x: np.ndarray
    T: np.ndarray
    q: np.ndarray
    kappa: np.ndarray
    v: np.ndarray
    dT: np.ndarray
    quads: np.ndarray


def _grid(kv, s):
    b = kv.breakpoints
    pts = [b[0]]
    for a, c in zip(b[:-1], b[1:]):
        pts.extend(a + (c - a) * np.arange(1, s + 1) / s)
    return np.array(pts)


def sample_fields(model: MultiPatchModel, T, laws: dict, field=None, coeffs=None, T_ref=None,
                  subdivisions: int = 4, scale: float = 1e-3) -> FieldSamples:
    """Evaluate temperature, flux, conductivity and density on every patch."""
    T = np.asarray(T, dtype=float)
    collapsed = set(model.collapsed)
    out = {k: [] for k in ("patch", "xi", "eta", "x", "T", "q", "kappa", "v", "dT", "quads")}
    offset = 0
    for pidx, patch in enumerate(model.patches):
        u = _grid(patch.basis.kv_u, subdivisions)
        w = _grid(patch.basis.kv_v, subdivisions)
        if (pidx, "xi0") in collapsed:
            u = u.copy()
            u[0] = _COLLAPSE_OFFSET
        if (pidx, "eta0") in collapsed:
            w = w.copy()
            w[0] = _COLLAPSE_OFFSET
        U, W = np.meshgrid(u, w, indexing="ij")
        xi, eta = U.ravel(), W.ravel()
        idx, R, dR, x, J = patch.jacobian(xi, eta)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        grad = _physical_grad(dR, inv) / scale
        dofs = model.dofs(pidx)[idx]
        Tp = np.einsum("ij,ij->i", R, T[dofs])
        gT = np.einsum("ija,ij->ia", grad, T[dofs])
        n = xi.size
        if patch.region == "design" and field is not None and not laws["design"].is_constant:
            v, _, _ = field.evaluate(coeffs, xi, eta)
            kap = laws["design"].kappa(v)
        else:
            v = np.full(n, np.nan)
            kap = np.full(n, float(laws[patch.region].kappa(0.0)))
        out["patch"].append(np.full(n, pidx))
        out["xi"].append(xi)
        out["eta"].append(eta)
        out["x"].append(x)
        out["T"].append(Tp)
        out["q"].append(-kap[:, None] * gT)
        out["kappa"].append(kap)
        out["v"].append(v)
        out["dT"].append(Tp - np.einsum("ij,ij->i", R, np.asarray(T_ref)[dofs]) if T_ref is not None else np.full(n, np.nan))
        nu, nv = u.size, w.size
        i, j = np.meshgrid(np.arange(nu - 1), np.arange(nv - 1), indexing="ij")
        a = (i * nv + j).ravel()
        quads = np.column_stack([a, a + nv, a + nv + 1, a + 1]) + offset
        out["quads"].append(quads)
        offset += n
    cat = {k: np.concatenate(v) if k not in ("x", "q", "quads") else np.vstack(v) for k, v in out.items()}
    return FieldSamples(**cat)


def _fmt(a) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(a))


def write_vtk(samples: FieldSamples, path, title: str = "igatopo fields") -> None:
    """Legacy ASCII VTK unstructured grid (quads, point data).

    Coordinates in mm; NaN density outside the design region is written as
    ``-1``.
    """
    s = samples
    n, m = s.x.shape[0], s.quads.shape[0]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{float(px)!r} {float(py)!r} 0.0" for px, py in s.x]
    lines.append(f"CELLS {m} {5 * m}")
    lines += ["4 " + " ".join(map(str, q)) for q in s.quads]
    lines.append(f"CELL_TYPES {m}")
    lines += ["9"] * m
    lines.append(f"POINT_DATA {n}")
    for name, data in (("T", s.T), ("kappa", s.kappa), ("v", np.nan_to_num(s.v, nan=-1.0)),
                       ("dT", np.nan_to_num(s.dT, nan=0.0)), ("q_magnitude", np.hypot(s.q[:, 0], s.q[:, 1]))):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(data)]
    lines.append("VECTORS q double")
    lines += [f"{float(a)!r} {float(b)!r} 0.0" for a, b in s.q]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_fields_csv(samples: FieldSamples, path) -> None:
    """Columns ``patch,xi,eta,x,y,T,qx,qy,kappa,v,dT``."""
    s = samples
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patch", "xi", "eta", "x", "y", "T", "qx", "qy", "kappa", "v", "dT"])
        for i in range(s.T.size):
            w.writerow([int(s.patch[i])] + [repr(float(val)) for val in (
                s.xi[i], s.eta[i], s.x[i, 0], s.x[i, 1], s.T[i], s.q[i, 0], s.q[i, 1], s.kappa[i], s.v[i], s.dT[i])])
