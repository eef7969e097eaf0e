import math

import numpy as np
import pytest

from sutoda.mesh import (FOUR_PI, Gauge, MeshError, SPHERE_RADIUS,
                         SurfaceKind, build_surface_mesh, dump_mesh,
                         geodesic_distance, green_function, solve_poisson,
                         solve_weak)
from sutoda.mesh import ScalarField

NORTH = np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def sphere():
    return build_surface_mesh(SurfaceKind.ClosedSphere, 3, [NORTH])


@pytest.fixture(scope="module")
def disk():
    return build_surface_mesh(SurfaceKind.UnitDisk, 16,
                              [np.zeros(2)], grading=1.5)


def test_sphere_area_normalized(sphere):
    assert sphere.vertex_areas.sum() == pytest.approx(1.0, abs=1e-12)
    radii = np.linalg.norm(sphere.vertices, axis=1)
    # All vertices share one radius, near the smooth unit-area value; the
    # small excess compensates the faceting so the discrete area is 1.
    assert radii.std() < 1e-12 * radii.mean()
    assert radii.mean() == pytest.approx(SPHERE_RADIUS, rel=5e-3)
    assert radii.mean() > SPHERE_RADIUS


def test_disk_area(disk):
    assert disk.vertex_areas.sum() == pytest.approx(math.pi, rel=2e-3)
    radii = np.linalg.norm(disk.vertices, axis=1)
    assert radii.max() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.linalg.norm(disk.vertices[disk.boundary], axis=1)
                  > 1.0 - 1e-12)


def test_geodesic_distance_disk():
    d = geodesic_distance(SurfaceKind.UnitDisk,
                          np.array([0.3, 0.0]), np.zeros(2))
    assert d == pytest.approx(0.3, abs=1e-15)


def test_geodesic_distance_sphere_antipodal():
    # Half circumference of the area-1 sphere.
    d = geodesic_distance(SurfaceKind.ClosedSphere,
                          SPHERE_RADIUS * NORTH, -SPHERE_RADIUS * NORTH)
    assert d == pytest.approx(math.pi * SPHERE_RADIUS, rel=1e-12)


def test_geodesic_distance_quarter():
    p = SPHERE_RADIUS * np.array([1.0, 0.0, 0.0])
    d = geodesic_distance(SurfaceKind.ClosedSphere, p, SPHERE_RADIUS * NORTH)
    assert d == pytest.approx(0.5 * math.pi * SPHERE_RADIUS, rel=1e-12)


def test_stiffness_symmetric_psd(sphere):
    S = sphere.stiffness.toarray()
    assert np.allclose(S, S.T, atol=1e-13)
    rng = np.random.default_rng(7)
    for _ in range(5):
        v = rng.standard_normal(sphere.n_vertices)
        assert v @ (S @ v) >= -1e-10
    # Constants span the kernel on the closed surface.
    assert np.abs(S @ np.ones(sphere.n_vertices)).max() < 1e-12


def test_singular_vertex_registered(sphere):
    vid = sphere.singular_vertices[0]
    v = sphere.vertices[vid]
    assert np.allclose(v / np.linalg.norm(v), NORTH, atol=1e-12)


def test_solve_weak_zero_mean(sphere):
    rng = np.random.default_rng(3)
    load = rng.standard_normal(sphere.n_vertices)
    load -= sphere.vertex_areas * (load.sum() / sphere.vertex_areas.sum())
    u = solve_weak(sphere, load, Gauge.ZeroMean)
    assert abs(sphere.vertex_areas @ u) < 1e-12
    resid = sphere.stiffness @ u - load
    resid -= sphere.vertex_areas * (resid @ np.ones(len(resid)))
    assert np.abs(sphere.stiffness @ u - load).max() < 1e-9


def test_solve_weak_dirichlet(disk):
    load = disk.vertex_areas.copy()
    u = solve_weak(disk, load, Gauge.Dirichlet)
    assert np.abs(u[disk.boundary]).max() == 0.0
    interior = np.setdiff1d(np.arange(disk.n_vertices), disk.boundary)
    resid = (disk.stiffness @ u - load)[interior]
    assert np.abs(resid).max() < 1e-10


def test_poisson_radial_disk(disk):
    # -Lap u = 4 with u = 0 on the boundary has u = 1 - |x|^2.
    rhs = ScalarField(np.full(disk.n_vertices, 4.0))
    u = solve_poisson(disk, rhs, Gauge.Dirichlet)
    r2 = np.sum(disk.vertices ** 2, axis=1)
    assert np.abs(u.values - (1.0 - r2)).max() < 5e-3


def test_green_function_sphere(sphere):
    G = green_function(sphere, 0).values
    # Weak identity: S G = e_p - areas (unit Dirac minus uniform measure).
    e = np.zeros(sphere.n_vertices)
    e[sphere.singular_vertices[0]] = 1.0
    resid = sphere.stiffness @ G - (e - sphere.vertex_areas)
    assert np.abs(resid).max() < 1e-9
    assert abs(sphere.vertex_areas @ G) < 1e-12


def test_green_function_log_singularity(sphere):
    G = green_function(sphere, 0).values
    d = sphere.distances_to(sphere.vertices[sphere.singular_vertices[0]])
    sel = (d > 0.01) & (d < 0.1)
    slope = np.polyfit(np.log(d[sel]), G[sel], 1)[0]
    assert slope == pytest.approx(-1.0 / (2.0 * math.pi), rel=0.08)


def test_mesh_dump(tmp_path, sphere):
    dump_mesh(sphere, tmp_path)
    header = (tmp_path / "vertices.csv").read_text().splitlines()[0]
    assert header == "id,x,y,z,area,is_boundary,singular_id"
    tri = (tmp_path / "triangles.csv").read_text().splitlines()
    assert tri[0] == "v0,v1,v2"
    assert len(tri) - 1 == len(sphere.triangles)


def test_invalid_resolution():
    with pytest.raises(MeshError):
        build_surface_mesh(SurfaceKind.ClosedSphere, 0)


def test_disk_rejects_offcenter_singular():
    with pytest.raises(MeshError):
        build_surface_mesh(SurfaceKind.UnitDisk, 8, [np.array([0.5, 0.0])])
