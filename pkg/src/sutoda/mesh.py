"""Triangulated surfaces (unit-area sphere, unit disk) with FEM operators.

The sphere mesh is a subdivided icosahedron rescaled so its total lumped
area equals 1 exactly; the disk mesh is a polar grid with radially graded
rings so that integrable power singularities at the origin are resolved.
Both carry a cotangent-weight stiffness matrix, lumped vertex areas, and
cached constrained factorizations for Poisson solves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu


FOUR_PI = 4.0 * math.pi
# Radius of the sphere after rescaling to unit total area.
SPHERE_RADIUS = 1.0 / math.sqrt(FOUR_PI)


class SurfaceKind(Enum):
    ClosedSphere = "sphere"
    UnitDisk = "disk"


class Gauge(Enum):
    ZeroMean = "zero_mean"
    Dirichlet = "dirichlet"


class MeshError(ValueError):
    pass


@dataclass
class ScalarField:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@dataclass
class SurfaceMesh:
    kind: SurfaceKind
    vertices: np.ndarray          # (n, 3) sphere / (n, 2) disk
    triangles: np.ndarray         # (m, 3) int
    stiffness: sparse.csr_matrix
    vertex_areas: np.ndarray
    boundary: np.ndarray          # ordered boundary vertex indices (empty on sphere)
    singular_vertices: dict       # singular-point id -> vertex index
    # Disk meshes keep their polar structure for boundary derivative stencils.
    disk_rings: int = 0
    disk_angular: int = 0
    disk_radii: np.ndarray | None = None
    _zero_mean_lu: object = field(default=None, repr=False)
    _dirichlet_lu: object = field(default=None, repr=False)
    _interior: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def integrate(self, values: np.ndarray) -> float:
        return float(self.vertex_areas @ values)

    def mean_project(self, values: np.ndarray) -> np.ndarray:
        total = self.vertex_areas.sum()
        return values - (self.vertex_areas @ values) / total

    def distances_to(self, point: np.ndarray) -> np.ndarray:
        """Analytic geodesic distance from every vertex to a surface point."""
        if self.kind is SurfaceKind.ClosedSphere:
            return _sphere_distances(self.vertices, np.asarray(point, dtype=float))
        diff = self.vertices - np.asarray(point, dtype=float)[None, :]
        return np.hypot(diff[:, 0], diff[:, 1])


def _sphere_distances(points: np.ndarray, p: np.ndarray) -> np.ndarray:
    a = points / np.linalg.norm(points, axis=-1, keepdims=True)
    b = p / np.linalg.norm(p)
    dots = np.clip(a @ b, -1.0, 1.0)
    cross = np.linalg.norm(np.cross(a, b[None, :]), axis=-1)
    return np.arctan2(cross, dots) * SPHERE_RADIUS


def geodesic_distance(kind: SurfaceKind, x, p) -> float:
    """Distance between two surface points, analytic (not along mesh edges).

    Sphere distances are great-circle arcs scaled by the unit-area radius
    1/sqrt(4*pi); disk distances are Euclidean.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if kind is SurfaceKind.ClosedSphere:
        return float(_sphere_distances(x[None, :], p)[0])
    return float(np.linalg.norm(x - p))


def _icosahedron():
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=int)
    return verts, faces


def _subdivide(verts, faces, levels):
    verts = list(map(tuple, verts))
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key in cache:
            return cache[key]
        v = np.array(verts[i]) + np.array(verts[j])
        v /= np.linalg.norm(v)
        verts.append(tuple(v))
        cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(levels):
        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        faces = np.array(new_faces, dtype=int)
        cache.clear()
    return np.array(verts, dtype=float), faces


def _rotation_onto(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation matrix sending unit vector a to unit vector b."""
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(a @ b)
    if np.linalg.norm(v) < 1e-14:
        if c > 0:
            return np.eye(3)
        # Antipodal: rotate by pi around any axis orthogonal to a.
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-8:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        K = np.array([[0, -axis[2], axis[1]],
                      [axis[2], 0, -axis[0]],
                      [-axis[1], axis[0], 0]])
        return np.eye(3) + 2.0 * (K @ K)
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + K + K @ K * (1.0 / (1.0 + c))


def _triangle_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    if vertices.shape[1] == 2:
        cross = ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                 - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))
        return 0.5 * cross
    cross = np.cross(p1 - p0, p2 - p0)
    return 0.5 * np.linalg.norm(cross, axis=1)


def _assemble_operators(vertices, triangles):
    """Cotangent stiffness matrix and lumped vertex areas."""
    nv = len(vertices)
    areas = np.abs(_triangle_areas(vertices, triangles))
    vertex_areas = np.zeros(nv)
    np.add.at(vertex_areas, triangles.ravel(),
              np.repeat(areas / 3.0, 3))

    rows, cols, vals = [], [], []
    for corner in range(3):
        i = triangles[:, (corner + 1) % 3]
        j = triangles[:, (corner + 2) % 3]
        k = triangles[:, corner]
        e1 = vertices[i] - vertices[k]
        e2 = vertices[j] - vertices[k]
        cos = np.einsum("ij,ij->i", e1, e2)
        if vertices.shape[1] == 2:
            sin = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        else:
            sin = np.linalg.norm(np.cross(e1, e2), axis=1)
        w = 0.5 * cos / np.maximum(sin, 1e-300)
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    S = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nv, nv))
    S.sum_duplicates()
    return S, vertex_areas


def build_surface_mesh(kind: SurfaceKind, resolution: int,
                       singular_positions=(), grading: float = 1.0) -> SurfaceMesh:
    """Build a discretized surface with registered singular vertices.

    resolution is the icosphere subdivision level on the sphere and the
    number of radial rings on the disk.  grading >= 1 concentrates disk
    rings at the origin via r_k = (k/N)^grading.
    """
    if resolution < 1:
        raise MeshError("resolution must be >= 1")
    singular_positions = [np.asarray(p, dtype=float) for p in singular_positions]
    for a in range(len(singular_positions)):
        for b in range(a + 1, len(singular_positions)):
            if np.allclose(singular_positions[a], singular_positions[b], atol=1e-12):
                raise MeshError("singular positions must be pairwise distinct")

    if kind is SurfaceKind.ClosedSphere:
        return _build_sphere(resolution, singular_positions)
    return _build_disk(resolution, singular_positions, grading)


def _build_sphere(level, singular_positions):
    verts, faces = _icosahedron()
    if singular_positions:
        R = _rotation_onto(verts[0], singular_positions[0])
        verts = verts @ R.T
    verts, faces = _subdivide(verts, faces, level)

    singular_vertices = {}
    if singular_positions:
        edge = np.linalg.norm(verts[faces[0][0]] - verts[faces[0][1]])
        for sid, pos in enumerate(singular_positions):
            pos = pos / np.linalg.norm(pos)
            idx = int(np.argmax(verts @ pos))
            snap = np.linalg.norm(verts[idx] - pos)
            if snap > edge:
                raise MeshError(
                    f"singular position {sid} is {snap:.3g} away from the nearest "
                    f"vertex, beyond one edge length {edge:.3g}; refine the mesh")
            if idx in singular_vertices.values():
                raise MeshError(
                    f"singular positions collide after snapping at vertex {idx}")
            singular_vertices[sid] = idx

    # Rescale to total area 1 using the discrete (flat-triangle) area.
    _, areas = _assemble_operators(verts, faces)
    verts = verts / math.sqrt(areas.sum())
    S, vertex_areas = _assemble_operators(verts, faces)
    return SurfaceMesh(SurfaceKind.ClosedSphere, verts, faces, S, vertex_areas,
                       np.array([], dtype=int), singular_vertices)


def _build_disk(n_rings, singular_positions, grading):
    if grading < 1.0:
        raise MeshError("grading must be >= 1")
    for pos in singular_positions:
        if np.linalg.norm(pos) > 1e-12:
            raise MeshError("disk singular position must be the origin")
    if len(singular_positions) > 1:
        raise MeshError("disk supports at most one singular point")

    n_ang = max(16, 4 * n_rings)
    radii = (np.arange(n_rings + 1) / n_rings) ** grading
    angles = 2.0 * np.pi * np.arange(n_ang) / n_ang

    verts = [np.zeros(2)]
    for k in range(1, n_rings + 1):
        verts.append(np.column_stack([radii[k] * np.cos(angles),
                                      radii[k] * np.sin(angles)]))
    verts = np.vstack([verts[0][None, :], *verts[1:]])

    def vid(k, j):
        return 1 + (k - 1) * n_ang + (j % n_ang)

    faces = []
    for j in range(n_ang):
        faces.append([0, vid(1, j), vid(1, j + 1)])
    for k in range(1, n_rings):
        for j in range(n_ang):
            faces.append([vid(k, j), vid(k + 1, j), vid(k + 1, j + 1)])
            faces.append([vid(k, j), vid(k + 1, j + 1), vid(k, j + 1)])
    faces = np.array(faces, dtype=int)

    S, vertex_areas = _assemble_operators(verts, faces)
    boundary = np.array([vid(n_rings, j) for j in range(n_ang)], dtype=int)
    singular_vertices = {0: 0} if singular_positions else {}
    return SurfaceMesh(SurfaceKind.UnitDisk, verts, faces, S, vertex_areas,
                       boundary, singular_vertices,
                       disk_rings=n_rings, disk_angular=n_ang, disk_radii=radii)


def _zero_mean_lu(mesh: SurfaceMesh):
    if mesh._zero_mean_lu is None:
        n = mesh.n_vertices
        a = sparse.csr_matrix(mesh.vertex_areas[None, :])
        K = sparse.bmat([[mesh.stiffness, a.T], [a, None]], format="csc")
        mesh._zero_mean_lu = splu(K)
    return mesh._zero_mean_lu


def _dirichlet_lu(mesh: SurfaceMesh):
    if mesh._dirichlet_lu is None:
        interior = np.setdiff1d(np.arange(mesh.n_vertices), mesh.boundary)
        K = mesh.stiffness[interior][:, interior].tocsc()
        mesh._dirichlet_lu = splu(K)
        mesh._interior = interior
    return mesh._dirichlet_lu


def solve_weak(mesh: SurfaceMesh, load: np.ndarray, gauge: Gauge) -> np.ndarray:
    """Solve S u = load with the gauge constraint; load is a weak-form vector."""
    if gauge is Gauge.ZeroMean:
        if mesh.kind is not SurfaceKind.ClosedSphere:
            raise MeshError("ZeroMean gauge requires a closed surface")
        if abs(load.sum()) > 1e-8 * (np.abs(load).sum() + 1.0):
            raise MeshError("rhs must have zero total integral on a closed surface")
        lu = _zero_mean_lu(mesh)
        rhs = np.concatenate([load, [0.0]])
        sol = lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise MeshError("constrained linear solve failed (singular system)")
        return sol[:-1]
    lu = _dirichlet_lu(mesh)
    u = np.zeros(mesh.n_vertices)
    u[mesh._interior] = lu.solve(load[mesh._interior])
    if not np.all(np.isfinite(u)):
        raise MeshError("Dirichlet linear solve failed")
    return u


def solve_poisson(mesh: SurfaceMesh, rhs: ScalarField, gauge: Gauge) -> ScalarField:
    """Weak solve of -Laplace(u) = rhs under the requested gauge."""
    load = mesh.vertex_areas * rhs.values
    return ScalarField(solve_weak(mesh, load, gauge))


def green_function(mesh: SurfaceMesh, p: int) -> ScalarField:
    """Discrete Green function: -Laplace(G_p) = delta_p - 1, zero mean."""
    if mesh.kind is not SurfaceKind.ClosedSphere:
        raise MeshError("Green functions are defined on the closed sphere only")
    if p not in mesh.singular_vertices:
        raise MeshError(f"point id {p} is not a registered singular vertex")
    v = mesh.singular_vertices[p]
    load = -mesh.vertex_areas.copy()
    load[v] += 1.0
    return ScalarField(solve_weak(mesh, load, Gauge.ZeroMean))


def dump_mesh(mesh: SurfaceMesh, directory) -> None:
    """Write vertices.csv / triangles.csv with 17 significant digits."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    boundary = set(int(b) for b in mesh.boundary)
    singular = {v: k for k, v in mesh.singular_vertices.items()}
    dim = mesh.vertices.shape[1]
    with open(directory / "vertices.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"] + (["z"] if dim == 3 else [])
                   + ["area", "is_boundary", "singular_id"])
        for i, v in enumerate(mesh.vertices):
            w.writerow([i] + [f"{c:.17g}" for c in v]
                       + [f"{mesh.vertex_areas[i]:.17g}",
                          int(i in boundary), singular.get(i, "")])
    with open(directory / "triangles.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v0", "v1", "v2"])
        for t in mesh.triangles:
            w.writerow([int(t[0]), int(t[1]), int(t[2])])
