"""Gyroid lattice reconstruction of an optimized density field.

The design region's bounding box is split into square voxels of side ``a``
(one unit cell each). Each voxel takes the density at its center, which
sets the gyroid wall parameter ``t``. The tessellated gyroid slice is then
trimmed against the design region and traced with marching squares.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path
from skimage import measure

from .design_field import DensityField
from .errors import ProjectionError

__all__ = [
    "invert_map",
    "sample_density",
    "gyroid_t",
    "gyroid_value",
    "gyroid_field",
    "gyroid_fraction",
    "VoxelGrid",
    "Reconstruction",
    "make_voxel_grid",
    "design_mask",
    "reconstruct_and_trim",
    "write_pgm",
    "write_contours_csv",
]

NEWTON_TOL = 1e-10
NEWTON_MAX = 50
WALL_CONSTANT = 0.65


def invert_map(patch, points, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX):
    """Parametric coordinates of physical ``points`` on ``patch``.

    Newton iteration on ``x(xi, eta) = p`` with the parameters clamped to
    the unit square. Points outside the patch image converge to the
    nearest boundary parameter, which extends the field by its boundary
    values.

    Returns
    -------
    xi, eta : ndarray
    inside : ndarray of bool
        ``True`` where the physical residual is below ``tol`` (relative to
        the patch size).

    Raises
    ------
    ProjectionError
        If some point has not converged after ``max_iter`` iterations.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    size = float(np.abs(patch.ctrl).max())
    # start from the nearest point of a parametric grid
    gu, gv = np.meshgrid(np.linspace(0, 1, 17), np.linspace(0, 1, 129), indexing="ij")
    gu, gv = gu.ravel(), gv.ravel()
    gx = patch.evaluate(gu, gv)
    xi = np.empty(p.shape[0])
    eta = np.empty(p.shape[0])
    for s in range(0, p.shape[0], 4096):
        blk = p[s:s + 4096]
        d2 = ((blk[:, None, :] - gx[None, :, :]) ** 2).sum(-1)
        k = np.argmin(d2, axis=1)
        xi[s:s + 4096], eta[s:s + 4096] = gu[k], gv[k]
    xi, eta = _newton(patch, p, xi, eta, size, tol, max_iter)
    x = patch.evaluate(xi, eta)
    res = np.hypot(*(x - p).T) / size
    # on a closed ring eta = 0 and eta = 1 coincide; a start on the wrong
    # copy of the seam stalls against the clamp, so retry from the other one
    stuck = (res >= tol) & ((eta == 0.0) | (eta == 1.0))
    if np.any(stuck):
        k = np.nonzero(stuck)[0]
        rxi, reta = _newton(patch, p[k], xi[k], 1.0 - eta[k], size, tol, max_iter)
        rres = np.hypot(*(patch.evaluate(rxi, reta) - p[k]).T) / size
        better = rres < res[k]
        xi[k[better]], eta[k[better]], res[k[better]] = rxi[better], reta[better], rres[better]
    return xi, eta, res < tol


def _newton(patch, p, xi, eta, size, tol, max_iter):
    xi, eta = xi.copy(), eta.copy()
    done = np.zeros(p.shape[0], dtype=bool)
    res = np.full(p.shape[0], np.inf)
    for _ in range(max_iter):
        act = np.nonzero(~done)[0]
        if act.size == 0:
            break
        _, _, _, x, J = patch.jacobian(xi[act], eta[act])
        r = x - p[act]
        res[act] = np.hypot(r[:, 0], r[:, 1]) / size
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        dxi = -(J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
        deta = -(-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / det
        nxi = np.clip(xi[act] + dxi, 0.0, 1.0)
        neta = np.clip(eta[act] + deta, 0.0, 1.0)
        step = np.maximum(np.abs(nxi - xi[act]), np.abs(neta - eta[act]))
        xi[act], eta[act] = nxi, neta
        done[act] = (res[act] < tol) | (step < tol)
    if not np.all(done):
        raise ProjectionError(f"point inversion did not converge for {np.count_nonzero(~done)} points")
    return xi, eta


def sample_density(field_: DensityField, coeffs, points) -> np.ndarray:
    """Density at physical points (mm); outside points take the value at
    the nearest parametric boundary point."""
    xi, eta, _ = invert_map(field_.patch, points)
    v, _, _ = field_.evaluate(coeffs, xi, eta)
    return v


def gyroid_t(v) -> np.ndarray:
    """Wall parameter ``t = 0.65 / (1 - v)`` from the porosity ``v``.

    Raises
    ------
    ValueError
        For ``v`` outside ``[0, 1)``.
    """
    v = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v >= 1):
        raise ValueError("porosity must lie in [0, 1)")
    return WALL_CONSTANT / (1.0 - v)


def gyroid_value(x, y, z, a: float):
    """Gyroid level-set function with period ``a``."""
    k = 2 * np.pi / a
    return np.cos(k * x) * np.sin(k * y) + np.cos(k * y) * np.sin(k * z) + np.cos(k * z) * np.sin(k * x)


def gyroid_field(x, y, z, a: float, t):
    """Material indicator and the two bounding implicit values.

    Material lies between the surfaces ``g + t = 0`` and ``g - t = 0``,
    i.e. where ``|g| <= t``.
    """
    if not a > 0:
        raise ValueError("cell size must be positive")
    g = gyroid_value(x, y, z, a)
    upper, lower = g + t, g - t
    return (upper >= 0) & (lower <= 0), upper, lower


def gyroid_fraction(t, n_samples: int = 1_000_000, seed: int = 0) -> np.ndarray:
    """Monte-Carlo material fraction of one unit cell for each ``t``.

    The same samples are reused for every ``t``.
    """
    rng = np.random.default_rng(seed)
    pts = rng.random((n_samples, 3))
    g = np.abs(gyroid_value(pts[:, 0], pts[:, 1], pts[:, 2], 1.0))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.array([np.count_nonzero(g <= ti) / n_samples for ti in t])


@dataclass(frozen=True)
class VoxelGrid:
    """Square voxels over ``box = (x0, x1, y0, y1)`` (mm)."""

    box: tuple
    a: float
    nx: int
    ny: int
    v: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    occupied: np.ndarray = field(repr=False)

    def centers(self) -> np.ndarray:
        return _voxel_centers(self.box, self.a, self.nx, self.ny)


def _voxel_centers(box, a, nx, ny):
    x = box[0] + a * (np.arange(nx) + 0.5)
    y = box[2] + a * (np.arange(ny) + 0.5)
    X, Y = np.meshgrid(x, y, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def _boundary_paths(field_: DensityField, n: int = 720):
    t = np.linspace(0, 1, n)
    outer = field_.patch.evaluate(np.ones(n), t)
    inner = field_.patch.evaluate(np.zeros(n), t)
    return Path(outer), Path(inner)


def design_mask(field_: DensityField, points) -> np.ndarray:
    """Points (mm) inside the design region."""
    outer, inner = _boundary_paths(field_)
    pts = np.atleast_2d(points)
    return outer.contains_points(pts) & ~inner.contains_points(pts)


def make_voxel_grid(field_: DensityField, coeffs, a: float, samples: int = 8) -> VoxelGrid:
    """Voxelize the design region's bounding box with cell size ``a``.

    A voxel is occupied when any of ``samples x samples`` probe points
    inside it falls in the design region.

    Raises
    ------
    ValueError
        If ``a`` is not positive or exceeds the box.
    """
    outer, _ = _boundary_paths(field_)
    lo, hi = outer.vertices.min(axis=0), outer.vertices.max(axis=0)
    width = hi - lo
    if not np.isfinite(a) or not a > 0 or a > width.min():
        raise ValueError(f"voxel size {a} is degenerate for a region of width {width.min():.6g}")
    nx, ny = (int(np.ceil(w / a - 0.5)) or 1 for w in width)
    nx, ny = max(nx, 1), max(ny, 1)
    # center the grid on the region; at most half a voxel of slack per side
    cx, cy = (lo + hi) / 2
    box = (cx - nx * a / 2, cx + nx * a / 2, cy - ny * a / 2, cy + ny * a / 2)
    s = (np.arange(samples) + 0.5) / samples * a
    occ = np.zeros(nx * ny, dtype=bool)
    cen = _voxel_centers(box, a, nx, ny)
    for ox in s - a / 2:
        for oy in s - a / 2:
            occ |= design_mask(field_, cen + [ox, oy])
    v = np.zeros(nx * ny)
    if np.any(occ):
        v[occ] = sample_density(field_, coeffs, cen[occ])
    t = np.zeros(nx * ny)
    t[occ] = gyroid_t(np.clip(v[occ], 0.0, None))
    return VoxelGrid(box, float(a), nx, ny, v.reshape(ny, nx), t.reshape(ny, nx), occ.reshape(ny, nx))


@dataclass
class Reconstruction:
    """Raster stages of the workflow (row 0 is the bottom of the box)."""

    grid: VoxelGrid
    domain: np.ndarray
    tessellation: np.ndarray
    trimmed: np.ndarray
    contours: list
    pixel: float


def reconstruct_and_trim(field_: DensityField, coeffs, a: float, resolution: int = 16, samples: int = 8) -> Reconstruction:
    """Gyroid tessellation of the occupied voxels trimmed to the design
    region.

    The 2D section is the ``z = a/4`` slice of each cell. ``resolution`` is
    the number of pixels per voxel side.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2 pixels per voxel")
    grid = make_voxel_grid(field_, coeffs, a, samples)
    h = a / resolution
    nxp, nyp = grid.nx * resolution, grid.ny * resolution
    x = grid.box[0] + h * (np.arange(nxp) + 0.5)
    y = grid.box[2] + h * (np.arange(nyp) + 0.5)
    X, Y = np.meshgrid(x, y, indexing="xy")
    domain = design_mask(field_, np.column_stack([X.ravel(), Y.ravel()])).reshape(nyp, nxp)
    t_pix = np.kron(grid.t, np.ones((resolution, resolution)))
    occ_pix = np.kron(grid.occupied, np.ones((resolution, resolution), dtype=bool))
    inside, _, _ = gyroid_field(X - grid.box[0], Y - grid.box[2], a / 4, a, t_pix)
    tess = inside & occ_pix
    trimmed = tess & domain
    padded = np.pad(trimmed.astype(float), 1)
    contours = []
    for c in measure.find_contours(padded, 0.5):
        # (row, col) in padded pixel units -> mm
        cx = grid.box[0] + h * (c[:, 1] - 1 + 0.5)
        cy = grid.box[2] + h * (c[:, 0] - 1 + 0.5)
        contours.append(np.column_stack([cx, cy]))
    return Reconstruction(grid, domain, tess, trimmed, contours, h)


def write_pgm(mask: np.ndarray, path) -> None:
    """ASCII portable graymap: material black (0), void white (255); the
    first image row is the top of the box."""
    img = np.where(np.flipud(mask), 0, 255).astype(int)
    lines = ["P2", f"{img.shape[1]} {img.shape[0]}", "255"]
    lines += [" ".join(map(str, row)) for row in img]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_contours_csv(contours, path) -> None:
    """Closed polylines as ``contour,point,x,y`` rows (mm)."""
    with open(path, "w") as fh:
        fh.write("contour,point,x,y\n")
        for i, c in enumerate(contours):
            for j, (px, py) in enumerate(c):
                fh.write(f"{i},{j},{float(px)!r},{float(py)!r}\n")
