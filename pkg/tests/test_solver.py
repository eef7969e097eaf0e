import math
import time

import numpy as np
import pytest

from sutoda.mesh import SurfaceKind, build_surface_mesh
from sutoda.fields import (ProblemParams, SingularPoint, WeightMode,
                           effective_weights)
from sutoda.solver import (SolveOptions, continuation_path, el_residual,
                           iterate_max_norm, minimize)

NORTH = np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def sphere3():
    return build_surface_mesh(SurfaceKind.ClosedSphere, 3)


def test_trivial_solution_converges_immediately(sphere3):
    params = ProblemParams((2 * math.pi, 2 * math.pi), [])
    weights = effective_weights(sphere3, params, WeightMode.GreenExact)
    start = time.time()
    result = minimize(sphere3, weights, params)
    assert time.time() - start < 1.0
    assert result.converged
    assert result.iterations == 0
    assert np.abs(result.u.u1).max() == 0.0
    assert result.residual < 1e-10


def test_trivial_residual_via_el(sphere3):
    params = ProblemParams((math.pi, 3.0), [])
    weights = effective_weights(sphere3, params, WeightMode.GreenExact)
    result = minimize(sphere3, weights, params)
    assert el_residual(sphere3, weights, params, result.u) < 1e-10


def test_nonconstant_background_minimization(sphere3):
    def h(p):
        return 1.0 + 0.5 * p[0] / np.linalg.norm(p)
    params = ProblemParams((2 * math.pi, 2 * math.pi), [], (h, None))
    weights = effective_weights(sphere3, params, WeightMode.GreenExact)
    result = minimize(sphere3, weights, params)
    assert result.converged
    assert result.residual < 1e-8
    assert result.j_value < 0.0
    assert iterate_max_norm(result) > 0.0


def test_singular_coercive_minimization():
    mesh = build_surface_mesh(SurfaceKind.ClosedSphere, 4, [NORTH])
    sp = [SingularPoint(0, NORTH, (-0.5, -0.5))]
    params = ProblemParams((math.pi, math.pi), sp)
    weights = effective_weights(mesh, params, WeightMode.GreenExact)
    result = minimize(mesh, weights, params)
    assert result.converged
    js = [row[1] for row in result.trace]
    assert all(js[k + 1] < js[k] for k in range(len(js) - 1))


def test_disk_minimization():
    mesh = build_surface_mesh(SurfaceKind.UnitDisk, 32,
                              [np.zeros(2)], grading=1.5)
    sp = [SingularPoint(0, np.zeros(2), (-0.5, -0.5))]
    params = ProblemParams((math.pi, math.pi), sp)
    weights = effective_weights(mesh, params, WeightMode.ModelProduct)
    result = minimize(mesh, weights, params)
    assert result.converged
    assert np.abs(result.u.u1[mesh.boundary]).max() == 0.0


def test_solver_options_validated():
    with pytest.raises(ValueError):
        SolveOptions(grad_tol=0.0)
    with pytest.raises(ValueError):
        SolveOptions(armijo_c=1.5)


def test_continuation_path_warm_start(sphere3):
    def h(p):
        return 1.0 + 0.3 * p[1] / np.linalg.norm(p)
    params = ProblemParams((1.0, 1.0), [], (h, None))
    weights = effective_weights(sphere3, params, WeightMode.GreenExact)
    path = [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]
    results = continuation_path(sphere3, weights, params, path)
    assert len(results) == 3
    assert all(r.converged for r in results)
    # The warm start pays off: solving the last point from scratch takes
    # at least as many iterations as continuing from the previous one.
    cold = minimize(sphere3, weights,
                    ProblemParams((3.0, 3.0), [], params.h))
    assert results[2].iterations <= cold.iterations
