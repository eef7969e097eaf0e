"""Problem data and energy/density evaluation for the Toda functional.

Effective weights are built either from discrete Green functions
(GreenExact, sphere only) or as products of distance powers (ModelProduct).
Every integral of the form  int htilde_i e^g dV  is evaluated through a
fixed per-vertex quadrature coefficient vector: lumped cells away from
singular vertices, and an exact-in-r radial rule (trapezoid in angle) on
the triangle ring around each singular vertex.  The integral is therefore
exactly linear in the vertex samples of e^g, which makes the discrete
gradient of the energy exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .mesh import (FOUR_PI, Gauge, ScalarField, SurfaceKind, SurfaceMesh,
                   green_function)


class FieldError(ValueError):
    pass


class WeightMode(Enum):
    GreenExact = "green_exact"
    ModelProduct = "model_product"


@dataclass
class SingularPoint:
    id: int
    position: np.ndarray
    alpha: tuple          # (alpha_1m, alpha_2m), each > -1

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if min(self.alpha) <= -1.0:
            raise FieldError("singular weights must satisfy alpha > -1")


@dataclass
class ProblemParams:
    rho: tuple                      # (rho_1, rho_2), positive
    singulars: list                 # list of SingularPoint
    h: tuple = (None, None)         # pair of callables/arrays; None means 1

    def __post_init__(self):
        if min(self.rho) <= 0:
            raise FieldError("rho must be positive")
        ids = [s.id for s in self.singulars]
        if len(ids) != len(set(ids)):
            raise FieldError("duplicate singular point ids")

    def alpha_rows(self):
        """Per-component weight lists: ([alpha_1m], [alpha_2m])."""
        return ([s.alpha[0] for s in self.singulars],
                [s.alpha[1] for s in self.singulars])


@dataclass
class PairField:
    u1: np.ndarray
    u2: np.ndarray
    gauge: Gauge

    def __post_init__(self):
        self.u1 = np.asarray(self.u1, dtype=float)
        self.u2 = np.asarray(self.u2, dtype=float)

    def component(self, i):
        return self.u1 if i == 0 else self.u2


def make_pair_field(mesh: SurfaceMesh, u1, u2) -> PairField:
    """Wrap raw vertex values in the gauge natural to the surface."""
    if mesh.kind is SurfaceKind.ClosedSphere:
        return PairField(mesh.mean_project(np.asarray(u1, float)),
                         mesh.mean_project(np.asarray(u2, float)),
                         Gauge.ZeroMean)
    u1 = np.asarray(u1, float).copy()
    u2 = np.asarray(u2, float).copy()
    u1[mesh.boundary] = 0.0
    u2[mesh.boundary] = 0.0
    return PairField(u1, u2, Gauge.Dirichlet)


@dataclass
class EffectiveWeights:
    htilde: np.ndarray              # (2, n) normalized samples; inf/0 at singular vertices
    quad_coeff: np.ndarray          # (2, n) quadrature coefficients, each row sums to 1
    local_exponent: dict            # vertex index -> (2 alpha_1m, 2 alpha_2m)
    normalization: tuple            # raw integrals of h_i * (weight factor) before scaling
    mode: WeightMode


def _background_values(mesh, h_i):
    if h_i is None:
        return np.ones(mesh.n_vertices)
    if callable(h_i):
        vals = np.array([h_i(v) for v in mesh.vertices], dtype=float)
    else:
        vals = np.asarray(h_i, dtype=float)
    if vals.shape != (mesh.n_vertices,):
        raise FieldError("background h sample length mismatch")
    if np.min(vals) <= 0:
        raise FieldError("background h must be positive")
    return vals


_ETA = np.linspace(0.0, 1.0, 33)


def _singular_triangle_weights(p, a, b, two_alpha):
    """Quadrature weights (w_p, w_a, w_b) for int_T s(x) r^{2a} e^g dx.

    T has a corner at the singular point p; r is the distance to p and the
    smooth part s*e^g is interpolated linearly along rays from p.  The rule
    is exact in r and trapezoidal in the angular parameter.  The returned
    weights multiply the smooth-part values at the three corners (the value
    at p itself is extrapolated as the average of the two edge values by
    the caller, which folds w_p into w_a and w_b).
    """
    ea = a - p
    eb = b - p
    if len(p) == 2:
        area2 = abs(ea[0] * eb[1] - ea[1] * eb[0])
    else:
        area2 = np.linalg.norm(np.cross(ea, eb))
    chord = (1.0 - _ETA)[:, None] * ea[None, :] + _ETA[:, None] * eb[None, :]
    ell = np.linalg.norm(chord, axis=1) ** two_alpha
    t0 = np.trapezoid(ell, _ETA)
    t1a = np.trapezoid((1.0 - _ETA) * ell, _ETA)
    t1b = np.trapezoid(_ETA * ell, _ETA)
    inv2 = 1.0 / (2.0 + two_alpha)
    inv3 = 1.0 / (3.0 + two_alpha)
    w_p = area2 * (inv2 - inv3) * t0
    w_a = area2 * inv3 * t1a
    w_b = area2 * inv3 * t1b
    return w_p, w_a, w_b


def effective_weights(mesh: SurfaceMesh, params: ProblemParams,
                      mode: WeightMode) -> EffectiveWeights:
    """Build the normalized effective weights htilde_i and their quadrature."""
    if mode is WeightMode.GreenExact and mesh.kind is not SurfaceKind.ClosedSphere:
        raise FieldError("GreenExact weights require the closed sphere")
    for s in params.singulars:
        if s.id not in mesh.singular_vertices:
            raise FieldError(f"singular point {s.id} not registered on the mesh")

    n = mesh.n_vertices
    raw = np.stack([_background_values(mesh, params.h[0]),
                    _background_values(mesh, params.h[1])])
    local_exponent = {}
    sing_dist = {}
    for s in params.singulars:
        vid = mesh.singular_vertices[s.id]
        local_exponent[vid] = (2.0 * s.alpha[0], 2.0 * s.alpha[1])
        pos = mesh.vertices[vid]
        sing_dist[vid] = mesh.distances_to(pos)

    if mode is WeightMode.GreenExact:
        for s in params.singulars:
            vid = mesh.singular_vertices[s.id]
            G = green_function(mesh, s.id).values
            for i in range(2):
                raw[i] *= np.exp(-FOUR_PI * s.alpha[i] * G)
    else:
        for s in params.singulars:
            vid = mesh.singular_vertices[s.id]
            d = sing_dist[vid]
            for i in range(2):
                if s.alpha[i] != 0.0:
                    with np.errstate(divide="ignore"):
                        raw[i] *= np.where(d > 0, d, 1.0) ** (2.0 * s.alpha[i])

    # Flag values at singular vertices; quadrature never reads them.
    for vid, (e1, e2) in local_exponent.items():
        for i, e in enumerate((e1, e2)):
            if e < 0:
                raw[i, vid] = np.inf
            elif e > 0:
                raw[i, vid] = 0.0

    tri = mesh.triangles
    tri_area = np.zeros(len(tri))
    p0, p1, p2 = (mesh.vertices[tri[:, k]] for k in range(3))
    if mesh.vertices.shape[1] == 2:
        tri_area = 0.5 * np.abs((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                                - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))
    else:
        tri_area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)

    coeff = np.zeros((2, n))
    for i in range(2):
        sing_vids = {v for v, e in local_exponent.items() if e[i] != 0.0}
        corner_sing = np.isin(tri, list(sing_vids)) if sing_vids else \
            np.zeros_like(tri, dtype=bool)
        n_sing = corner_sing.sum(axis=1)
        if np.any(n_sing > 1):
            raise FieldError("two singular vertices share a triangle; refine the mesh")

        regular = n_sing == 0
        for c in range(3):
            vidx = tri[regular, c]
            np.add.at(coeff[i], vidx, tri_area[regular] / 3.0 * raw[i, vidx])

        for ti in np.nonzero(~regular)[0]:
            corner = int(np.argmax(corner_sing[ti]))
            vp = tri[ti, corner]
            va, vb = tri[ti, (corner + 1) % 3], tri[ti, (corner + 2) % 3]
            two_alpha = local_exponent[vp][i]
            p, a, b = mesh.vertices[vp], mesh.vertices[va], mesh.vertices[vb]
            w_p, w_a, w_b = _singular_triangle_weights(p, a, b, two_alpha)
            sa = raw[i, va] / np.linalg.norm(a - p) ** two_alpha
            sb = raw[i, vb] / np.linalg.norm(b - p) ** two_alpha
            # Smooth part at p extrapolated as the average of the edge values.
            coeff[i, vp] += w_p * 0.5 * (sa + sb)
            coeff[i, va] += w_a * sa
            coeff[i, vb] += w_b * sb

    totals = coeff.sum(axis=1)
    if np.any(~np.isfinite(totals)) or np.any(totals <= 0):
        raise FieldError("weight quadrature produced a non-positive integral")
    coeff /= totals[:, None]
    with np.errstate(invalid="ignore"):
        htilde = raw / totals[:, None]
    return EffectiveWeights(htilde, coeff, local_exponent,
                            (float(totals[0]), float(totals[1])), mode)


def log_singular_integral(mesh: SurfaceMesh, weights: EffectiveWeights,
                          g: np.ndarray, i: int) -> float:
    """log of int htilde_i e^g dV in overflow-safe shifted form."""
    c = weights.quad_coeff[i]
    m = float(np.max(g))
    if not np.isfinite(m):
        raise FieldError("field has non-finite entries")
    # Exact summation of the positive terms: see q_energy.
    return m + math.log(math.fsum((c * np.exp(g - m)).tolist()))


def singular_integral(mesh: SurfaceMesh, weights: EffectiveWeights,
                      g: ScalarField, i: int) -> float:
    """int htilde_i e^g dV; rejects fields that would overflow directly."""
    vals = np.asarray(g.values if isinstance(g, ScalarField) else g, float)
    if float(np.max(vals)) > 700.0:
        raise FieldError(
            "field maximum exceeds 700; use log_singular_integral instead")
    return math.exp(log_singular_integral(mesh, weights, vals, i))


@dataclass
class Density:
    values: np.ndarray      # density per unit area at vertices
    masses: np.ndarray      # per-vertex cell masses, summing to 1
    log_total: float        # log of int htilde_i e^{u_i} dV


def density(mesh: SurfaceMesh, weights: EffectiveWeights,
            u: PairField, i: int) -> Density:
    """Normalized density f_{i,u} = htilde_i e^{u_i} / int htilde_i e^{u_i}."""
    g = u.component(i)
    c = weights.quad_coeff[i]
    m = float(np.max(g))
    w = c * np.exp(g - m)
    total = w.sum()
    masses = w / total
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(mesh.vertex_areas > 0, masses / mesh.vertex_areas, 0.0)
    return Density(values, masses, m + math.log(total))


def q_energy(mesh: SurfaceMesh, u: PairField) -> float:
    """int Q(u) dV = (1/3)(u1.S.u1 + u1.S.u2 + u2.S.u2).

    Accumulated with exact summation: the line search certifies strict
    energy decrease, so evaluation noise must stay near one ulp.
    """
    if len(u.u1) != mesh.n_vertices:
        raise FieldError("field/mesh size mismatch")
    S = mesh.stiffness
    s1 = S @ u.u1
    s2 = S @ u.u2
    return math.fsum((u.u1 * s1 + u.u1 * s2 + u.u2 * s2).tolist()) / 3.0


def j_energy(mesh: SurfaceMesh, weights: EffectiveWeights,
             params: ProblemParams, u: PairField) -> float:
    """J_rho(u); the average terms are dropped in the Dirichlet gauge."""
    val = [q_energy(mesh, u)]
    closed = mesh.kind is SurfaceKind.ClosedSphere
    for i in range(2):
        g = u.component(i)
        ent = log_singular_integral(mesh, weights, g, i)
        if closed:
            ent -= math.fsum((mesh.vertex_areas * g).tolist())
        val.append(-params.rho[i] * ent)
    total = math.fsum(val)
    if not np.isfinite(total):
        raise FieldError("non-finite energy value")
    return total


def j_energy_difference(mesh: SurfaceMesh, weights: EffectiveWeights,
                        params: ProblemParams, u: PairField,
                        d1: np.ndarray, d2: np.ndarray, step: float) -> float:
    """J(u + step d) - J(u), evaluated without cancellation.

    The quadratic part expands exactly in step; the entropy differences
    are log-mean-exponentials of the step increment against the current
    densities, via expm1/log1p.  Accurate to a few ulps of the difference
    itself, which lets the line search certify decreases far below the
    rounding noise of two independent J evaluations.
    """
    S = mesh.stiffness
    su1, su2 = S @ u.u1, S @ u.u2
    sd1, sd2 = S @ d1, S @ d2
    lin = step * math.fsum(
        (d1 * (2.0 * su1 + su2) + d2 * (2.0 * su2 + su1)).tolist()) / 3.0
    quad = step * step * math.fsum(
        (d1 * sd1 + d1 * sd2 + d2 * sd2).tolist()) / 3.0
    out = [lin + quad]

    closed = mesh.kind is SurfaceKind.ClosedSphere
    for i, d in ((0, d1), (1, d2)):
        g = u.component(i)
        c = weights.quad_coeff[i]
        m = float(np.max(g))
        w = c * np.exp(g - m)
        masses = w / math.fsum(w.tolist())
        delta = step * d
        top = float(np.max(delta))
        if not np.isfinite(top):
            return math.inf
        if top > 50.0:
            dent = top + math.log(math.fsum(
                (masses * np.exp(delta - top)).tolist()))
        else:
            dent = math.log1p(math.fsum(
                (masses * np.expm1(delta)).tolist()))
        if closed:
            dent -= step * math.fsum((mesh.vertex_areas * d).tolist())
        out.append(-params.rho[i] * dent)
    return math.fsum(out)


def i_energy_scalar(mesh: SurfaceMesh, weights: EffectiveWeights,
                    rho: float, u: ScalarField, i: int = 0) -> float:
    """Scalar functional I_rho(u) = 1/2 int |grad u|^2 - 2 rho (log int - avg)."""
    vals = np.asarray(u.values if isinstance(u, ScalarField) else u, float)
    ent = log_singular_integral(mesh, weights, vals, i)
    if mesh.kind is SurfaceKind.ClosedSphere:
        ent -= mesh.integrate(vals)
    return float(0.5 * vals @ (mesh.stiffness @ vals) - 2.0 * rho * ent)


def weak_gradient(mesh: SurfaceMesh, weights: EffectiveWeights,
                  params: ProblemParams, u: PairField):
    """Weak-form gradient vectors (b1, b2): dJ[v] = sum_i b_i . v_i."""
    S = mesh.stiffness
    su = [S @ u.u1, S @ u.u2]
    closed = mesh.kind is SurfaceKind.ClosedSphere
    out = []
    for i in range(2):
        b = (2.0 * su[i] + su[1 - i]) / 3.0
        masses = density(mesh, weights, u, i).masses
        b -= params.rho[i] * (masses - (mesh.vertex_areas if closed else 0.0))
        out.append(b)
    return out


def j_gradient(mesh: SurfaceMesh, weights: EffectiveWeights,
               params: ProblemParams, u: PairField) -> PairField:
    """Gradient in the lumped mass inner product, projected onto the gauge."""
    b1, b2 = weak_gradient(mesh, weights, params, u)
    areas = mesh.vertex_areas
    if u.gauge is Gauge.ZeroMean:
        g1 = mesh.mean_project(b1 / areas)
        g2 = mesh.mean_project(b2 / areas)
    else:
        g1 = b1 / areas
        g2 = b2 / areas
        g1[mesh.boundary] = 0.0
        g2[mesh.boundary] = 0.0
    return PairField(g1, g2, u.gauge)


def mass_norm(mesh: SurfaceMesh, g: PairField) -> float:
    return math.sqrt(float(mesh.vertex_areas @ (g.u1 ** 2 + g.u2 ** 2)))
