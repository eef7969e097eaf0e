import math

import numpy as np
import pytest

from sutoda.mesh import FOUR_PI, SurfaceKind, build_surface_mesh
from sutoda.fields import (ProblemParams, SingularPoint, WeightMode,
                           effective_weights)
from sutoda.bubbles import AxialQuadrature, make_bubble_spec, phi_map
from sutoda.solver import minimize
from sutoda.diagnostics import (ConcentrationConfig, DiagnosticsError,
                                barycenter_points, concentration,
                                equal_scale_family, join_parameter,
                                join_projection, mass_split_disk,
                                mt_deficit_probe, pohozaev_disk,
                                quantization_check, quantization_table,
                                scalar_deficit_probe, single_bubble_family,
                                stereographic_pohozaev)

NORTH = np.array([0.0, 0.0, 1.0])
SOUTH = -NORTH


@pytest.fixture(scope="module")
def sphere():
    return build_surface_mesh(SurfaceKind.ClosedSphere, 4, [NORTH, SOUTH])


@pytest.fixture(scope="module")
def disk():
    return build_surface_mesh(SurfaceKind.UnitDisk, 32,
                              [np.zeros(2)], grading=1.5)


def _poles(mesh):
    return [(0, mesh.vertices[mesh.singular_vertices[0]]),
            (1, mesh.vertices[mesh.singular_vertices[1]])]


def _point_mass(mesh, vid):
    m = np.zeros(mesh.n_vertices)
    m[vid] = 1.0
    return m


def test_concentration_config_validation():
    with pytest.raises(DiagnosticsError):
        ConcentrationConfig(delta=0.1, tau=0.4)
    with pytest.raises(DiagnosticsError):
        ConcentrationConfig(delta=-1.0)
    with pytest.raises(DiagnosticsError):
        ConcentrationConfig(delta=0.1, delta_prime=0.2)
    cfg = ConcentrationConfig(delta=0.16)
    assert cfg.delta_prime == pytest.approx(0.02)


def test_concentration_concentrated_branch(sphere):
    cfg = ConcentrationConfig(delta=0.1)
    m = _point_mass(sphere, sphere.singular_vertices[0])
    state = concentration(sphere, m, _poles(sphere), cfg)
    assert state.branch == "concentrated"
    assert state.beta == 0
    assert state.sigma < 1e-6
    assert state.ball_masses[0] == pytest.approx(1.0)


def test_concentration_ambient_branch(sphere):
    cfg = ConcentrationConfig(delta=0.1)
    equator = np.argmin(np.abs(sphere.vertices[:, 2]))
    state = concentration(sphere, _point_mass(sphere, equator),
                          _poles(sphere), cfg)
    assert state.branch == "ambient"
    assert state.beta is None
    assert state.sigma == cfg.delta
    assert state.ball_masses["outside"] == pytest.approx(1.0)


def test_concentration_spread_and_interpolated(sphere):
    cfg = ConcentrationConfig(delta=0.1)       # ratio bound K tau/(1-tau) = 6
    v0, v1 = sphere.singular_vertices[0], sphere.singular_vertices[1]
    m = np.zeros(sphere.n_vertices)
    m[v0], m[v1] = 0.8, 0.2                    # ratio 4 <= 6: spread
    state = concentration(sphere, m, _poles(sphere), cfg)
    assert state.branch == "spread"
    assert state.sigma == cfg.delta
    m[v0], m[v1] = 0.875, 0.125                # ratio 7 in (6, 12]
    state = concentration(sphere, m, _poles(sphere), cfg)
    assert state.branch == "interpolated"
    assert state.beta == 0
    assert 0.0 < state.sigma <= cfg.delta
    m[v0], m[v1] = 0.99, 0.01                  # ratio 99 > 12: concentrated
    state = concentration(sphere, m, _poles(sphere), cfg)
    assert state.branch == "concentrated"


def test_concentration_rejects_bad_input(sphere):
    cfg = ConcentrationConfig(delta=0.1)
    with pytest.raises(DiagnosticsError):
        concentration(sphere, np.full(sphere.n_vertices, 1.0),
                      _poles(sphere), cfg)
    # Candidate separation pi R ~ 0.886 < 2 delta for delta = 0.5.
    big = ConcentrationConfig(delta=0.5)
    m = _point_mass(sphere, sphere.singular_vertices[0])
    with pytest.raises(DiagnosticsError):
        concentration(sphere, m, _poles(sphere), big)


def test_join_parameter_cases():
    dp = 0.02
    big, small = 0.05, 0.001
    assert join_parameter(big, big, dp) == (0.0, True)
    assert join_parameter(small, big, dp) == (0.0, False)
    assert join_parameter(big, small, dp) == (1.0, False)
    t, flagged = join_parameter(small, small, dp)
    assert not flagged
    assert t == pytest.approx((dp - small) / (2 * dp - 2 * small))
    t, _ = join_parameter(0.001, 0.001, dp)
    assert t == pytest.approx(0.5)


def test_barycenter_points_threshold(sphere):
    sp = [SingularPoint(0, NORTH, (-0.5, -0.5)),
          SingularPoint(1, SOUTH, (-0.5, -0.5))]
    # 4 pi (1 + alpha) = 2 pi: below rho = 3 pi, above rho = pi.
    assert len(barycenter_points(
        sphere, ProblemParams((3 * math.pi, math.pi), sp), 0)) == 2
    assert barycenter_points(
        sphere, ProblemParams((3 * math.pi, math.pi), sp), 1) == []


def test_join_projection_two_point_bubble(sphere):
    sp = [SingularPoint(0, NORTH, (-0.5, -0.5)),
          SingularPoint(1, SOUTH, (-0.5, -0.5))]
    params = ProblemParams((3 * math.pi, 3 * math.pi), sp)
    weights = effective_weights(sphere, params, WeightMode.GreenExact)
    spec = make_bubble_spec(params, 0, 1, 0.4, 4096.0)
    u = phi_map(sphere, spec, params)
    cfg = ConcentrationConfig(delta=0.1)
    s1, s2, t_prime, flagged = join_projection(sphere, weights, params,
                                               u, cfg)
    assert s1.branch == "concentrated" and s1.beta == 0
    assert s2.branch == "concentrated" and s2.beta == 1
    assert 0.0 < t_prime < 1.0
    assert not flagged


def test_mass_split_disk(disk):
    # Two blobs at mirrored positions share the vertical split x = 0.
    c1 = np.array([0.35, 0.1])
    c2 = np.array([-0.35, 0.1])
    w1 = np.exp(-20.0 * np.sum((disk.vertices - c1) ** 2, axis=1))
    w2 = np.exp(-20.0 * np.sum((disk.vertices - c2) ** 2, axis=1))
    m1 = disk.vertex_areas * w1
    m2 = disk.vertex_areas * w2
    m1 /= m1.sum()
    m2 /= m2.sum()
    theta, a = mass_split_disk(disk, m1, m2)
    d = np.array([math.cos(theta), math.sin(theta)])
    proj = disk.vertices @ d
    for m in (m1, m2):
        below = float(m[proj < a].sum())
        assert abs(below - 0.5) < 0.02


def test_mass_split_requires_disk(sphere):
    m = np.full(sphere.n_vertices, 1.0 / sphere.n_vertices)
    with pytest.raises(DiagnosticsError):
        mass_split_disk(sphere, m, m)


def _solved_disk(n):
    mesh = build_surface_mesh(SurfaceKind.UnitDisk, n,
                              [np.zeros(2)], grading=1.5)
    params = ProblemParams((math.pi, math.pi),
                           [SingularPoint(0, np.zeros(2), (-0.5, -0.5))])
    weights = effective_weights(mesh, params, WeightMode.ModelProduct)
    result = minimize(mesh, weights, params)
    assert result.converged
    return mesh, weights, params, result.u


def test_pohozaev_disk_identity():
    mesh, weights, params, u = _solved_disk(32)
    rep = pohozaev_disk(mesh, weights, params, u)
    assert rep.relative_gap < 0.05
    assert rep.components["holder_bound_holds"]
    assert rep.components["boundary_weight_ratio_1"] > 0.0
    # The gap is discretization error: it shrinks under refinement.
    mesh, weights, params, u = _solved_disk(64)
    rep64 = pohozaev_disk(mesh, weights, params, u)
    assert rep64.relative_gap < rep.relative_gap


@pytest.fixture(scope="module")
def solved_sphere(sphere):
    sp = [SingularPoint(0, NORTH, (-0.5, -0.5)),
          SingularPoint(1, SOUTH, (-0.3, -0.3))]
    params = ProblemParams((math.pi, math.pi), sp)
    weights = effective_weights(sphere, params, WeightMode.GreenExact)
    result = minimize(sphere, weights, params)
    assert result.converged
    return params, weights, result.u


def test_stereographic_identity(sphere, solved_sphere):
    params, weights, u = solved_sphere
    rep = stereographic_pohozaev(sphere, weights, params, u)
    assert rep.relative_gap < 0.05
    assert rep.components["tau_prime_bounds_hold"]
    # The planar quadrature must recover the total masses rho_i.
    assert rep.components["recovered_mass_1"] == pytest.approx(
        math.pi, rel=0.02)
    assert rep.components["recovered_mass_2"] == pytest.approx(
        math.pi, rel=0.02)
    assert max(rep.components["tail_fractions"]) < 0.01


def test_stereographic_truncation_guard(sphere, solved_sphere):
    params, weights, u = solved_sphere
    # A tiny truncation radius leaves too much far-field mass unresolved.
    with pytest.raises(DiagnosticsError):
        stereographic_pohozaev(sphere, weights, params, u, truncation=2.0)


def test_quantization_regular_table():
    for pair in quantization_table():
        out = quantization_check(pair)
        assert out["admissible"]
        assert out["nearest"] == pair
        # Every table entry satisfies s1^2 - s1 s2 + s2^2 = 4 pi (s1 + s2).
        s1, s2 = pair
        assert out["local_identity_residual"] == pytest.approx(
            FOUR_PI * (s1 + s2), rel=1e-12)
    out = quantization_check((FOUR_PI, FOUR_PI))
    assert not out["admissible"]
    assert out["distance"] > 1.0


def test_quantization_singular_degeneration():
    eps = 1e-12
    singular = quantization_table((-eps, -eps))
    regular = quantization_table()
    for s, r in zip(singular, regular):
        assert s[0] == pytest.approx(r[0], abs=1e-10)
        assert s[1] == pytest.approx(r[1], abs=1e-10)
    with pytest.raises(DiagnosticsError):
        quantization_check((1.0, 1.0), location=(0.5, -0.5))


def test_deficit_probe_verdicts():
    lambdas = [2.0 ** k for k in range(3, 14)]
    sp = [SingularPoint(0, NORTH, (0.0, 0.0))]
    # rho_1 = 6 pi > 4 pi: the single bubble drives J down; rho_2 = pi
    # keeps the second family bounded.
    params = ProblemParams((6.0 * math.pi, math.pi), sp)
    quad = AxialQuadrature(params, 800)
    families = {
        "single_1": single_bubble_family(quad, 0, 0, 0.0),
        "single_2": single_bubble_family(quad, 0, 1, 0.0),
        "equal": equal_scale_family(quad, 0, (0.0, 0.0)),
    }
    out = mt_deficit_probe(params, families, lambdas, n_theta=800)
    fams = out["families"]
    assert fams["single_1"]["verdict"] == "unbounded"
    assert fams["single_2"]["verdict"] == "bounded_below"
    assert fams["single_1"]["last_decade_drop"] > 1.0
    assert len(fams["equal"]["j"]) == len(lambdas)


def test_scalar_deficit_probe():
    lambdas = [2.0 ** k for k in range(3, 12)]
    sp = [SingularPoint(0, NORTH, (0.0, 0.0))]
    params = ProblemParams((math.pi, math.pi), sp)
    quad = AxialQuadrature(params, 800)
    builders = {"single": lambda lam: single_bubble_family(
        quad, 0, 0, 0.0)(lam)[0]}
    out = scalar_deficit_probe(params, builders, math.pi, lambdas,
                               n_theta=800)
    rep = out["families"]["single"]
    assert rep["verdict"] in ("bounded_below", "unbounded", "inconclusive")
    assert len(rep["i"]) == len(lambdas)
    with pytest.raises(DiagnosticsError):
        scalar_deficit_probe(params, builders, math.pi, [4.0, 8.0])
