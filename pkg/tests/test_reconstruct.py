import numpy as np
import pytest

from igatopo.design_field import make_design_field
from igatopo.geometry import build_annulus_model
from igatopo.reconstruct import (
    design_mask,
    gyroid_field,
    gyroid_fraction,
    gyroid_t,
    gyroid_value,
    invert_map,
    make_voxel_grid,
    reconstruct_and_trim,
    sample_density,
    write_contours_csv,
    write_pgm,
)

FIELD = make_design_field(build_annulus_model().patches[1], 4, 4)
A11 = 100.0 / 11


def test_gyroid_t_values():
    assert gyroid_t(0.0) == pytest.approx(0.65)
    assert gyroid_t(0.2) == pytest.approx(0.8125)
    for bad in (1.0, 1.5, -0.1, np.nan):
        with pytest.raises(ValueError):
            gyroid_t(bad)


def test_gyroid_origin_on_mid_surface():
    assert gyroid_value(0.0, 0.0, 0.0, 3.0) == 0.0
    inside, up, lo = gyroid_field(0.0, 0.0, 0.0, 3.0, 0.01)
    assert inside and up == pytest.approx(0.01) and lo == pytest.approx(-0.01)


def test_thick_walls_fill_the_cell():
    g = np.linspace(0, 1, 41)
    X, Y, Z = np.meshgrid(g, g, g)
    # |g| peaks at 1.5 on the cell; the grid hits the peak, where round-off
    # lands one ulp either side
    assert np.abs(gyroid_value(X, Y, Z, 1.0)).max() == pytest.approx(1.5, abs=1e-12)
    assert np.all(gyroid_field(X, Y, Z, 1.0, 1.5 + 1e-12)[0])
    assert np.mean(gyroid_field(X, Y, Z, 1.0, 1.5)[0]) > 0.999


def test_gyroid_periodicity():
    rng = np.random.default_rng(0)
    x, y, z = rng.random((3, 100)) * 7
    a = 2.5
    g = gyroid_value(x, y, z, a)
    for shift in ((a, 0, 0), (0, a, 0), (0, 0, a)):
        np.testing.assert_allclose(gyroid_value(x + shift[0], y + shift[1], z + shift[2], a), g, atol=1e-12)
    with pytest.raises(ValueError):
        gyroid_field(x, y, z, 0.0, 0.5)


def test_material_fraction_strictly_increasing():
    t = np.round(np.arange(0.2, 1.41, 0.1), 10)
    f = gyroid_fraction(t, 200_000)
    assert np.all(np.diff(f) > 0)
    assert 0 < f[0] and f[-1] < 1


def test_constant_field_sampled_anywhere():
    rng = np.random.default_rng(1)
    r, th = rng.uniform(11, 49, 50), rng.uniform(0, 2 * np.pi, 50)
    pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
    np.testing.assert_allclose(sample_density(FIELD, np.full(FIELD.m, 0.4), pts), 0.4, atol=1e-12)


def test_control_point_unit_coefficient():
    xi, eta = np.array([0.4]), np.array([0.3])
    pt = FIELD.patch.evaluate(xi, eta)
    c = np.zeros(FIELD.m)
    j = 41
    c[j] = 1.0
    assert sample_density(FIELD, c, pt)[0] == pytest.approx(FIELD.basis_matrix(xi, eta).toarray()[0, j], abs=1e-10)


def test_boundary_points_converge():
    eta = np.linspace(0, 1, 17)
    for xi0 in (0.0, 1.0):
        pts = FIELD.patch.evaluate(np.full(17, xi0), eta)
        xi, et, ok = invert_map(FIELD.patch, pts)
        assert np.all(ok)
        np.testing.assert_allclose(FIELD.patch.evaluate(xi, et), pts, atol=1e-8)


def test_outside_point_extrapolates_to_nearest_boundary():
    xi, _, ok = invert_map(FIELD.patch, np.array([[60.0, 0.0], [5.0, 0.0]]))
    np.testing.assert_allclose(xi, [1.0, 0.0])
    assert not ok.any()


def test_eleven_by_eleven_grid():
    g = make_voxel_grid(FIELD, np.full(FIELD.m, 0.5), A11)
    assert (g.nx, g.ny) == (11, 11)
    # the corner voxels do not touch the ring
    assert not g.occupied[0, 0] and not g.occupied[-1, -1]
    assert np.all(g.t[~g.occupied] == 0) and np.all(g.v[~g.occupied] == 0)
    np.testing.assert_allclose(g.t[g.occupied], 0.65 / 0.5)


@pytest.mark.parametrize("a", [0.0, -1.0, 500.0, np.inf])
def test_degenerate_voxel_size(a):
    with pytest.raises(ValueError):
        make_voxel_grid(FIELD, np.zeros(FIELD.m), a)


def test_trim_is_subset_and_outside_is_empty():
    c = np.random.default_rng(2).uniform(0, 0.9, FIELD.m)
    rec = reconstruct_and_trim(FIELD, c, A11)
    assert not np.any(rec.trimmed & ~rec.tessellation)
    assert not np.any(rec.trimmed & ~rec.domain)
    res = rec.trimmed.shape[0] // rec.grid.ny
    occ = np.kron(rec.grid.occupied, np.ones((res, res), dtype=bool))
    assert not np.any(rec.tessellation & ~occ)
    assert rec.trimmed.any() and rec.contours


def test_zero_density_gives_walls_throughout_the_ring():
    rec = reconstruct_and_trim(FIELD, np.zeros(FIELD.m), 5.0)
    frac = rec.trimmed.sum() / rec.domain.sum()
    assert 0.2 < frac < 0.8
    h = rec.pixel
    ny, nx = rec.trimmed.shape
    X, Y = np.meshgrid(rec.grid.box[0] + h * (np.arange(nx) + 0.5), rec.grid.box[2] + h * (np.arange(ny) + 0.5))
    r = np.hypot(X, Y)
    for r0 in (15, 25, 35, 45):
        band = (abs(r - r0) < 2.5)
        assert rec.trimmed[band].any()


def test_contours_are_closed():
    rec = reconstruct_and_trim(FIELD, np.full(FIELD.m, 0.3), A11)
    for c in rec.contours:
        np.testing.assert_array_equal(c[0], c[-1])


def test_deterministic_and_writers(tmp_path):
    c = np.random.default_rng(3).random(FIELD.m) * 0.9
    a = reconstruct_and_trim(FIELD, c, A11, resolution=8)
    b = reconstruct_and_trim(FIELD, c, A11, resolution=8)
    np.testing.assert_array_equal(a.trimmed, b.trimmed)
    write_pgm(a.trimmed, tmp_path / "a.pgm")
    write_pgm(b.trimmed, tmp_path / "b.pgm")
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
    lines = (tmp_path / "a.pgm").read_text().splitlines()
    assert lines[:3] == ["P2", f"{a.trimmed.shape[1]} {a.trimmed.shape[0]}", "255"]
    # first image row is the top of the box
    assert lines[3].split() == [str(0 if m else 255) for m in a.trimmed[-1]]
    write_contours_csv(a.contours, tmp_path / "c.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "contour,point,x,y"
    assert len(rows) - 1 == sum(len(k) for k in a.contours)


def test_design_mask():
    pts = np.array([[0.0, 0.0], [30.0, 0.0], [0.0, -30.0], [60.0, 0.0], [49.0, 0.0]])
    np.testing.assert_array_equal(design_mask(FIELD, pts), [False, True, True, False, True])
