"""Verification instruments: concentration maps, mass splitting,
Pohozaev-type identities, mass quantization, and boundedness probes.

The concentration map sends a normalized density to a center/scale pair
(beta, sigma) over a finite set of candidate points; the disk and sphere
identities are integral balances that every true solution must satisfy
and that discrete solutions satisfy up to mesh error; the boundedness
probes drive bubble families through the energy and report whether the
infimum empirically stabilizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import FOUR_PI, SurfaceKind, SurfaceMesh
from .fields import (Density, EffectiveWeights, PairField, ProblemParams,
                     density, log_singular_integral)
from .bubbles import AxialQuadrature, AxialTerm, _prime, _std


class DiagnosticsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Concentration center/scale map.

@dataclass
class ConcentrationConfig:
    delta: float
    tau: float = 0.75
    delta_prime: float = None     # defaults to delta / 8
    K: float = 2.0

    def __post_init__(self):
        if not 0.5 < self.tau < 1.0:
            raise DiagnosticsError("tau must lie in (1/2, 1)")
        if self.delta <= 0:
            raise DiagnosticsError("delta must be positive")
        if self.delta_prime is None:
            self.delta_prime = self.delta / 8.0
        if not 0 < self.delta_prime < self.delta:
            raise DiagnosticsError("delta_prime must lie in (0, delta)")


@dataclass
class ConcentrationState:
    beta: object          # candidate point id, or None
    sigma: float
    branch: str           # ambient | spread | interpolated | concentrated
    ball_masses: dict     # candidate id -> mass in B_delta; "outside" key


def _mass_radius(mesh: SurfaceMesh, masses, point, tau):
    """Radius whose ball around `point` holds cumulative mass tau."""
    d = mesh.distances_to(point)
    order = np.argsort(d)
    cum = np.cumsum(masses[order])
    idx = int(np.searchsorted(cum, tau))
    if idx >= len(cum):
        return float(d[order[-1]])
    if idx == 0:
        return float(d[order[0]])
    d0, d1 = d[order[idx - 1]], d[order[idx]]
    c0, c1 = cum[idx - 1], cum[idx]
    if c1 == c0:
        return float(d1)
    return float(d0 + (tau - c0) / (c1 - c0) * (d1 - d0))


def concentration(mesh: SurfaceMesh, f, points,
                  cfg: ConcentrationConfig) -> ConcentrationState:
    """Center and scale of concentration of a normalized density.

    points is a list of (id, position) candidates, pairwise separated by
    at least 2 * cfg.delta.  The branch mirrors the case analysis of the
    underlying argument: mass away from the candidates or spread among
    them gives sigma = delta with no center; a dominant candidate gives
    its tau-mass radius, blended toward delta in the transition zone so
    the map stays continuous.
    """
    masses = f.masses if isinstance(f, Density) else np.asarray(f, float)
    if abs(masses.sum() - 1.0) > 1e-8 or masses.min() < -1e-14:
        raise DiagnosticsError("density must be normalized and nonnegative")
    pts = list(points)
    for a in range(len(pts)):
        d_a = mesh.distances_to(pts[a][1])
        for b in range(a + 1, len(pts)):
            gap = float(d_a[np.argmin(mesh.distances_to(pts[b][1]))])
            if gap < 2.0 * cfg.delta * 0.99:
                raise DiagnosticsError(
                    "delta exceeds half the minimum candidate separation")

    ball = {}
    for pid, pos in pts:
        d = mesh.distances_to(pos)
        ball[pid] = float(masses[d < cfg.delta].sum())
    ball["outside"] = max(0.0, 1.0 - sum(ball.values()))

    ranked = sorted(ball.items(),
                    key=lambda kv: (-kv[1], kv[0] != "outside", str(kv[0])))
    top_id, top = ranked[0]
    second = ranked[1][1] if len(ranked) > 1 else 0.0
    ratio_bound = cfg.K * cfg.tau / (1.0 - cfg.tau)

    if top_id == "outside":
        return ConcentrationState(None, cfg.delta, "ambient", ball)
    if top <= ratio_bound * second:
        return ConcentrationState(None, cfg.delta, "spread", ball)
    pos = dict(pts)[top_id]
    s = min(_mass_radius(mesh, masses, pos, cfg.tau), cfg.delta)
    if second > 0.0 and top <= 2.0 * ratio_bound * second:
        frac = top / (ratio_bound * second)       # in (1, 2]
        sigma = s + (2.0 - frac) * (cfg.delta - s)
        return ConcentrationState(top_id, sigma, "interpolated", ball)
    return ConcentrationState(top_id, s, "concentrated", ball)


def lipschitz_distance_lower_bound(mesh: SurfaceMesh, masses_a, masses_b,
                                   probe_points) -> float:
    """Lower bound on the Lipschitz-dual distance between two densities.

    Tests the dual pairing against the 1-Lipschitz dictionary of distance
    functions centered at the probe points.
    """
    diff = np.asarray(masses_a, float) - np.asarray(masses_b, float)
    best = 0.0
    for pos in probe_points:
        best = max(best, abs(float(mesh.distances_to(pos) @ diff)))
    return best


def barycenter_points(mesh: SurfaceMesh, params: ProblemParams, i: int):
    """Singular points whose weighted threshold lies below rho_i."""
    out = []
    for s in params.singulars:
        if FOUR_PI * (1.0 + s.alpha[i]) < params.rho[i]:
            out.append((s.id, mesh.vertices[mesh.singular_vertices[s.id]]))
    return out


def join_projection(mesh: SurfaceMesh, weights: EffectiveWeights,
                    params: ProblemParams, u: PairField,
                    cfg: ConcentrationConfig):
    """Project a field onto the join coordinates (beta_1, beta_2, t').

    Returns (state_1, state_2, t_prime, flagged); t' interpolates between
    0 (all concentration in component 1) and 1 (component 2).
    """
    states = []
    for i in range(2):
        f = density(mesh, weights, u, i)
        states.append(concentration(mesh, f, barycenter_points(mesh, params, i),
                                    cfg))
    t_prime, flagged = join_parameter(states[0].sigma, states[1].sigma,
                                      cfg.delta_prime)
    return states[0], states[1], t_prime, flagged


def join_parameter(sigma1: float, sigma2: float, delta_prime: float):
    """Join coordinate t' from the two concentration scales.

    t' = 0 when component 2 is unconcentrated, 1 when component 1 is, and
    interpolates linearly in between; when both are unconcentrated the
    0-branch takes precedence and the result is flagged.
    """
    if sigma2 >= delta_prime:
        return 0.0, sigma1 >= delta_prime
    if sigma1 >= delta_prime:
        return 1.0, False
    return float((delta_prime - sigma2)
                 / (2.0 * delta_prime - sigma1 - sigma2)), False


# ---------------------------------------------------------------------------
# Simultaneous mass split on the disk.

def _half_mass_offset(proj, masses):
    """Offset a with mass{x . theta < a} = 1/2, by interpolation."""
    order = np.argsort(proj)
    cum = np.cumsum(masses[order])
    idx = int(np.searchsorted(cum, 0.5))
    if idx >= len(cum):
        return float(proj[order[-1]])
    if idx == 0:
        return float(proj[order[0]])
    p0, p1 = proj[order[idx - 1]], proj[order[idx]]
    c0, c1 = cum[idx - 1], cum[idx]
    if c1 == c0:
        return float(p1)
    return float(p0 + (0.5 - c0) / (c1 - c0) * (p1 - p0))


def mass_split_disk(mesh: SurfaceMesh, f1, f2, tol: float = 1e-6):
    """Direction theta and offset a splitting both densities in half.

    Finds theta with a_1(theta) = a_2(theta), where a_i is the half-mass
    offset of density i along theta; a sign change of a_1 - a_2 between
    theta and theta + pi is guaranteed by the odd symmetry a_i(-theta) =
    -a_i(theta).
    """
    if mesh.kind is not SurfaceKind.UnitDisk:
        raise DiagnosticsError("mass splitting is defined on the disk")
    m1 = f1.masses if isinstance(f1, Density) else np.asarray(f1, float)
    m2 = f2.masses if isinstance(f2, Density) else np.asarray(f2, float)

    def gap(theta):
        d = np.array([math.cos(theta), math.sin(theta)])
        proj = mesh.vertices @ d
        return _half_mass_offset(proj, m1) - _half_mass_offset(proj, m2), d

    n = 64
    while n <= 2 ** 12:
        thetas = np.linspace(0.0, math.pi, n, endpoint=False)
        gaps = [gap(t)[0] for t in thetas]
        hit = next((k for k, g in enumerate(gaps) if abs(g) <= tol), None)
        if hit is not None:
            theta = float(thetas[hit])
            break
        bracket = None
        for k in range(n):
            a, b = gaps[k], gaps[(k + 1) % n]
            if a * b < 0 or (k + 1 == n and a * (-gaps[0]) < 0):
                lo = thetas[k]
                hi = thetas[k] + math.pi / n
                bracket = (lo, hi, a)
                break
        if bracket is None:
            n *= 4
            continue
        lo, hi, glo = bracket
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            gm = gap(mid)[0]
            if glo * gm <= 0:
                hi = mid
            else:
                lo, glo = mid, gm
        theta = float(0.5 * (lo + hi))
        break
    else:
        raise DiagnosticsError("no balanced direction found (degenerate split)")

    g, d = gap(theta)
    proj = mesh.vertices @ d
    a = _half_mass_offset(proj, m1)
    return theta, float(a)


# ---------------------------------------------------------------------------
# Pohozaev identities.

@dataclass
class PohozaevReport:
    lhs: float
    rhs: float
    relative_gap: float
    components: dict


def _boundary_normal_derivative(mesh: SurfaceMesh, values):
    """One-sided radial derivative at each boundary vertex of a polar mesh."""
    if mesh.disk_rings < 3:
        raise DiagnosticsError("normal derivatives need at least 3 rings")
    N, n_ang = mesh.disk_rings, mesh.disk_angular
    r = mesh.disk_radii

    def vid(k, j):
        return 1 + (k - 1) * n_ang + (j % n_ang)

    r0, r1, r2 = r[N - 2], r[N - 1], r[N]
    c0 = (r2 - r1) / ((r0 - r1) * (r0 - r2))
    c1 = (r2 - r0) / ((r1 - r0) * (r1 - r2))
    c2 = (2.0 * r2 - r0 - r1) / ((r2 - r0) * (r2 - r1))
    out = np.empty(n_ang)
    for j in range(n_ang):
        out[j] = (c0 * values[vid(N - 2, j)] + c1 * values[vid(N - 1, j)]
                  + c2 * values[vid(N, j)])
    return out


def pohozaev_disk(mesh: SurfaceMesh, weights: EffectiveWeights,
                  params: ProblemParams, u: PairField) -> PohozaevReport:
    """Integral balance for Dirichlet solutions on the unit disk.

    lhs is the boundary flux integral of (dnu u_1)^2 + dnu u_1 dnu u_2 +
    (dnu u_2)^2; rhs collects the dilation terms 6 (1 + a_i) rho_i minus
    the boundary/bulk weight ratio terms.  Also reports the lower bound
    3 (rho_1^2 - rho_1 rho_2 + rho_2^2) / (2 pi) <= lhs.
    """
    if mesh.kind is not SurfaceKind.UnitDisk:
        raise DiagnosticsError("this identity lives on the unit disk")
    if len(params.singulars) != 1:
        raise DiagnosticsError("expected a single origin singularity")
    alpha = params.singulars[0].alpha
    rho = params.rho
    n_ang = mesh.disk_angular
    darc = 2.0 * math.pi / n_ang

    d1 = _boundary_normal_derivative(mesh, u.u1)
    d2 = _boundary_normal_derivative(mesh, u.u2)
    lhs = float(np.sum(d1 * d1 + d1 * d2 + d2 * d2) * darc)

    rhs = 0.0
    ratios = []
    for i in range(2):
        # u_i = 0 on the boundary and |x| = 1 there, so the boundary
        # weight integral is exactly 2 pi.
        bulk = math.exp(log_singular_integral(mesh, weights,
                                              u.component(i), i)) \
            * weights.normalization[i]
        ratio = 2.0 * math.pi / bulk
        ratios.append(ratio)
        rhs += 6.0 * (1.0 + alpha[i]) * rho[i] - 3.0 * rho[i] * ratio
    gap = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)
    bound = 3.0 * (rho[0] ** 2 - rho[0] * rho[1] + rho[1] ** 2) \
        / (2.0 * math.pi)
    return PohozaevReport(lhs, rhs, gap, {
        "boundary_weight_ratio_1": ratios[0],
        "boundary_weight_ratio_2": ratios[1],
        "holder_lower_bound": bound,
        "holder_bound_holds": bound <= lhs * (1.0 + 1e-6) + 1e-12,
    })


def _antipodal_alpha(params: ProblemParams):
    """Weight pairs at the projection pole and its antipode.

    Returns (axis, [(a_11, a_12), (a_21, a_22)]): alpha_i1 at the pole
    p_1 mapped to the origin, alpha_i2 at the antipode.
    """
    if not params.singulars:
        raise DiagnosticsError("need at least one singular point")
    axis = params.singulars[0].position
    axis = axis / np.linalg.norm(axis)
    a_pole = params.singulars[0].alpha
    a_anti = (0.0, 0.0)
    for s in params.singulars[1:]:
        p = s.position / np.linalg.norm(s.position)
        if p @ axis < -1.0 + 1e-9:
            a_anti = s.alpha
        else:
            raise DiagnosticsError(
                "stereographic identity needs at most two antipodal points")
    return axis, [(a_pole[0], a_anti[0]), (a_pole[1], a_anti[1])]


def stereographic_pohozaev(mesh: SurfaceMesh, weights: EffectiveWeights,
                           params: ProblemParams, u: PairField,
                           truncation: float = 1e3) -> PohozaevReport:
    """Planar integral balance for sphere solutions, via stereographic
    pullback from the antipode of the first singular point.

    The pulled-back fields satisfy H_i e^{U_i} = rho_i (4 / (1+|x|^2)^2)
    e^{u_i} / int e^{u_i} dV, so the planar weight-mass integrals reduce
    to density moments on the sphere: the recovered masses are checked by
    explicit planar quadrature of the interpolated density (with the far
    field beyond the truncation radius estimated from the density mass in
    the corresponding polar cap), and tau'_i = rho_i int sin^2(theta/2)
    f_i dV with theta the colatitude from the projection center.
    """
    if mesh.kind is not SurfaceKind.ClosedSphere:
        raise DiagnosticsError("the pullback starts from the sphere")
    if params.h != (None, None):
        raise DiagnosticsError("constant background required")
    axis, alpha = _antipodal_alpha(params)
    rho = params.rho

    unit = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1,
                                          keepdims=True)
    cos_theta = np.clip(unit @ axis, -1.0, 1.0)
    sin2_half = 0.5 * (1.0 - cos_theta)

    recovered = []
    tau_prime = []
    tails = []
    # Planar radial grid; x = tan(theta/2) e^{i phi}, so the integrand is
    # rho_i * 4 (1+r^2)^{-2} times the probability density of f_i per unit
    # standard-sphere area.
    r_grid = np.geomspace(1e-6, truncation, 1200)
    cap_cos = (1.0 - truncation ** 2) / (1.0 + truncation ** 2)
    for i in range(2):
        f = density(mesh, weights, u, i)
        tp = float(rho[i] * (f.masses @ sin2_half))
        tau_prime.append(tp)
        theta_g = 2.0 * np.arctan(r_grid)
        cos_g = np.cos(theta_g)
        # Nearest mesh vertex along the axis-symmetric average: interpolate
        # the azimuthal mean of the density against colatitude.
        order = np.argsort(cos_theta)
        csum = np.cumsum((f.masses)[order])
        # Mean density on the band at colatitude theta via local mass slope.
        band = np.interp(cos_g, cos_theta[order], csum)
        slope = np.gradient(band, cos_g, edge_order=1)
        dens_band = slope / (2.0 * math.pi)     # per unit g0-area, times 4pi
        integrand = rho[i] * 4.0 / (1.0 + r_grid ** 2) ** 2 \
            * dens_band * 2.0 * math.pi * r_grid
        inner = float(np.trapezoid(integrand, r_grid))
        tail_mass = float(f.masses[cos_theta < cap_cos].sum())
        tails.append(tail_mass)
        recovered.append(inner + rho[i] * tail_mass)
        if tail_mass > 0.01:
            raise DiagnosticsError(
                f"far-field mass fraction {tail_mass:.3g} beyond truncation "
                f"radius {truncation:.3g} exceeds 1%")

    q = [2.0 + alpha[i][0] + alpha[i][1] - rho[i] / (2.0 * math.pi)
         + rho[1 - i] / FOUR_PI for i in range(2)]
    tau = [2.0 * alpha[i][0] * rho[i] - 2.0 * q[i] * tau_prime[i]
           for i in range(2)]
    lhs = rho[0] ** 2 - rho[0] * rho[1] + rho[1] ** 2
    rhs = FOUR_PI * rho[0] + FOUR_PI * rho[1] \
        + 2.0 * math.pi * (tau[0] + tau[1])
    gap = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)
    # Equivalent weighted form of the same balance.
    weighted = lhs - FOUR_PI * (1.0 + alpha[0][0]) * rho[0] \
        - FOUR_PI * (1.0 + alpha[1][0]) * rho[1] \
        + FOUR_PI * q[0] * tau_prime[0] + FOUR_PI * q[1] * tau_prime[1]
    return PohozaevReport(lhs, rhs, gap, {
        "recovered_mass_1": recovered[0],
        "recovered_mass_2": recovered[1],
        "tau_1": tau[0], "tau_2": tau[1],
        "tau_prime_1": tau_prime[0], "tau_prime_2": tau_prime[1],
        "tau_prime_bounds_hold":
            all(0.0 < tau_prime[i] < rho[i] for i in range(2)),
        "weighted_form_residual": weighted,
        "tail_fractions": tuple(tails),
    })


# ---------------------------------------------------------------------------
# Mass quantization checker.

_REGULAR_TABLE = ((FOUR_PI, 0.0), (0.0, FOUR_PI), (FOUR_PI, 2 * FOUR_PI),
                  (2 * FOUR_PI, FOUR_PI), (2 * FOUR_PI, 2 * FOUR_PI))


def quantization_table(location=None):
    """Admissible concentrated-mass pairs at a blow-up point."""
    if location is None:
        return _REGULAR_TABLE
    a1, a2 = location
    s = 2.0 + a1 + a2
    return ((FOUR_PI * (1 + a1), 0.0), (0.0, FOUR_PI * (1 + a2)),
            (FOUR_PI * (1 + a1), FOUR_PI * s),
            (FOUR_PI * s, FOUR_PI * (1 + a2)),
            (FOUR_PI * s, FOUR_PI * s))


def quantization_check(sigma, location=None, tol: float = 1e-9):
    """Check a mass pair against the admissible blow-up table.

    location is None at a regular point or the weight pair (a_1, a_2) at
    a singular one (both negative for the singular table to apply).
    """
    if location is not None and not (location[0] < 0 and location[1] < 0):
        raise DiagnosticsError(
            "the singular quantization table requires negative weights")
    table = quantization_table(location)
    dists = [math.hypot(sigma[0] - s1, sigma[1] - s2) for s1, s2 in table]
    best = int(np.argmin(dists))
    residual = sigma[0] ** 2 - sigma[0] * sigma[1] + sigma[1] ** 2
    return {"admissible": dists[best] <= tol,
            "nearest": table[best],
            "distance": dists[best],
            "local_identity_residual": residual}


# ---------------------------------------------------------------------------
# Boundedness probes for the energy over bubble families.

def _boundedness_verdict(lambdas, values):
    """Classify an energy trace along increasing scales.

    The drop over the last decade of scales decides: a further decrease
    beyond 1 marks the family as driving the energy to -infinity, while
    a stabilized or increasing tail marks it bounded below.
    """
    last = [v for lam, v in zip(lambdas, values) if lam >= lambdas[-1] / 10.0]
    drop = last[0] - last[-1]
    if drop > 1.0 and values[0] > values[-1]:
        return "unbounded", drop
    if drop < 1.0:
        return "bounded_below", drop
    return "inconclusive", drop


def mt_deficit_probe(params: ProblemParams, families, lambdas,
                     n_theta: int = 2000):
    """Empirical boundedness of J over axial bubble families.

    families maps a name to a callable lam -> (terms1, terms2) of axial
    components.  Verdicts: bounded_below if the energy varies by < 1 over
    the last decade of scales, unbounded if it keeps decreasing beyond
    that, inconclusive otherwise.
    """
    lambdas = sorted(float(l) for l in lambdas)
    if len(lambdas) < 3:
        raise DiagnosticsError("probe needs at least 3 scales")
    quad = AxialQuadrature(params, n_theta)
    out = {}
    for name, builder in families.items():
        js = []
        for lam in lambdas:
            t1, t2 = builder(lam)
            js.append(quad.pair_report(t1, t2)["j"])
        verdict, drop = _boundedness_verdict(lambdas, js)
        out[name] = {"j": js, "verdict": verdict, "last_decade_drop": drop}
    return {"lambdas": lambdas, "families": out}


def single_bubble_family(quad: AxialQuadrature, sid: int, component: int,
                         alpha: float):
    """Family (phi, 0) or (0, phi) of standard bubbles at one point."""
    sign = quad.signs[sid]

    def build(lam):
        term = [AxialTerm(sign, 1.0, _std(alpha, lam))]
        return (term, []) if component == 0 else ([], term)
    return build


def equal_scale_family(quad: AxialQuadrature, sid: int, alpha_pair):
    """Family (phi'/2, phi'/2): equal centers and equal scales."""
    sign = quad.signs[sid]
    s = 2.0 + alpha_pair[0] + alpha_pair[1]

    def build(lam):
        term = [AxialTerm(sign, 0.5, _prime(s, lam))]
        return term, term
    return build


def scalar_deficit_probe(params: ProblemParams, builders, rho: float,
                         lambdas, i: int = 0, n_theta: int = 2000):
    """Scalar-energy analog of mt_deficit_probe for component i."""
    lambdas = sorted(float(l) for l in lambdas)
    if len(lambdas) < 3:
        raise DiagnosticsError("probe needs at least 3 scales")
    quad = AxialQuadrature(params, n_theta)
    out = {}
    for name, builder in builders.items():
        vals = [quad.scalar_report(builder(lam), rho, i)["i"]
                for lam in lambdas]
        verdict, drop = _boundedness_verdict(lambdas, vals)
        out[name] = {"i": vals, "verdict": verdict, "last_decade_drop": drop}
    return {"lambdas": lambdas, "families": out}
