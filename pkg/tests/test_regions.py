import math

import numpy as np
import pytest

from sutoda.mesh import FOUR_PI, SurfaceKind
from sutoda.regions import (ExistenceVerdict, LABEL_COERCIVE,
                            LABEL_NONEXISTENCE, NonExistenceVerdict,
                            RegionError, classify_configuration, count_M,
                            critical_set_membership, disk_nonexistence,
                            join_betti, rho_bar, scan_regions,
                            sphere_nonexistence, topology_verdict)


def test_rho_bar_values():
    # A single point has no weight pair, so only the bound 4 pi remains.
    assert rho_bar(([-0.5], [-0.5])) == pytest.approx((FOUR_PI, FOUR_PI))
    # 2 + a_m + a_m' = 1.2 exceeds 1, so 4 pi still wins.
    assert rho_bar(([-0.5, -0.3], [0.0, 0.0])) == \
        pytest.approx((FOUR_PI, FOUR_PI))
    # 2 - 0.5 - 0.8 = 0.7 < 1 lowers the first bound.
    assert rho_bar(([-0.5, -0.8], [0.0, 0.0])) == \
        pytest.approx((0.7 * FOUR_PI, FOUR_PI))


def test_count_M_frozen():
    rho = (5.0 * math.pi, 5.0 * math.pi)
    alpha_rows = ([0.0, 0.0], [0.0, 0.0])
    # 4 pi < 5 pi < 8 pi at both points and both components.
    M, boundary = count_M(rho, alpha_rows)
    assert M == (2, 2, 2)
    assert not boundary
    M, _ = count_M((3.0 * math.pi, 9.0 * math.pi), alpha_rows)
    assert M == (0, 2, 0)
    _, boundary = count_M((FOUR_PI, 5.0), alpha_rows)
    assert boundary


def test_count_M_row_mismatch():
    with pytest.raises(RegionError):
        count_M((1.0, 1.0), ([0.0], [0.0, 0.0]))


def test_topology_verdict():
    assert topology_verdict((2, 2, 2)) is ExistenceVerdict.ExistenceGuaranteed
    assert topology_verdict((1, 1, 1)) is ExistenceVerdict.ExistenceGuaranteed
    assert topology_verdict((2, 2, 1)) is ExistenceVerdict.NoInfo
    assert topology_verdict((1, 1, 0)) is ExistenceVerdict.NoInfo
    assert topology_verdict((0, 3, 0)) is ExistenceVerdict.NotApplicable
    with pytest.raises(RegionError):
        topology_verdict((1, 1, 2))


def test_join_betti_small_cases():
    # K_{1,1}: a single segment, contractible.
    assert join_betti(1, 1, 0) == ((0, 0), True)
    # Removing its midpoint leaves two components.
    assert join_betti(1, 1, 1) == ((1, 0), True)
    # K_{2,2} is a 4-cycle.
    assert join_betti(2, 2, 0) == ((0, 1), True)


def test_join_betti_exhaustive_formula():
    for m1 in range(1, 7):
        for m2 in range(1, 7):
            for m3 in range(0, min(m1, m2) + 1):
                (b0, b1), ok = join_betti(m1, m2, m3)
                assert ok
                assert b0 >= 0 and b1 >= 0
                # Trivial homology exactly when (M1-1)(M2-1) = M3.
                trivial = (b0 == 0 and b1 == 0)
                assert trivial == ((m1 - 1) * (m2 - 1) == m3)


def test_critical_set_membership():
    alpha_rows = ([-0.5], [-0.5])
    member, dist = critical_set_membership((FOUR_PI, 1.0), alpha_rows,
                                           4.0 * FOUR_PI)
    assert member
    assert dist == pytest.approx(0.0, abs=1e-12)
    # Nearest line at rho_1 = 2 pi (n = 0, point in M'); no floor applies.
    member, dist = critical_set_membership((5.0, 5.0), alpha_rows,
                                           4.0 * FOUR_PI)
    assert not member
    assert dist == pytest.approx(2.0 * math.pi - 5.0, rel=1e-12)
    with pytest.raises(RegionError):
        critical_set_membership((30.0, 1.0), alpha_rows, 20.0)


def test_disk_nonexistence_condition():
    assert disk_nonexistence((8.0 * math.pi, 8.0 * math.pi), (0.0, 0.0))
    assert not disk_nonexistence((2.0 * math.pi, 2.0 * math.pi), (0.0, 0.0))


def test_sphere_nonexistence_axis_segment():
    # alpha_1 = (-0.5, 0) at the first point, alpha_2 = (0, -0.5) at the
    # second: on the rho_2 axis non-existence holds on (2 pi, 4 pi).
    pairs = ((-0.5, 0.0), (0.0, -0.5))
    eps = 1e-6
    v, _ = sphere_nonexistence((eps, 3.0 * math.pi), pairs)
    assert v is NonExistenceVerdict.NonExistence
    v, _ = sphere_nonexistence((eps, math.pi), pairs)
    assert v is NonExistenceVerdict.NoConclusion
    v, _ = sphere_nonexistence((eps, 5.0 * math.pi), pairs)
    assert v is NonExistenceVerdict.NoConclusion


def test_sphere_nonexistence_equal_weights_not_applicable():
    v, forms = sphere_nonexistence((1.0, 1.0), ((-0.5, 0.0), (-0.5, 0.0)))
    assert v is NonExistenceVerdict.NotApplicable
    assert forms == (0.0, 0.0, 0.0, 0.0)


def test_classify_configuration_disk():
    rep = classify_configuration(SurfaceKind.UnitDisk,
                                 (2.0 * math.pi, 2.0 * math.pi),
                                 [(0.0, 0.0)])
    assert rep.disk_nonexistence is False
    assert rep.M == (0, 0, 0)
    assert rep.existence is ExistenceVerdict.NotApplicable
    rep = classify_configuration(SurfaceKind.UnitDisk,
                                 (9.0 * math.pi, 9.0 * math.pi),
                                 [(0.0, 0.0)])
    assert rep.disk_nonexistence is True


def test_classify_configuration_sphere_existence():
    # Two points with very negative-free weights keep rho below rho_bar
    # while both barycenter sets fill up without midpoints.
    rep = classify_configuration(SurfaceKind.ClosedSphere,
                                 (3.0 * math.pi, 3.0 * math.pi),
                                 [(-0.5, -0.5), (-0.6, -0.6)])
    assert rep.M[0] == 2 and rep.M[1] == 2
    assert rep.betti is not None


def test_scan_components_two_and_three():
    s = scan_regions(SurfaceKind.ClosedSphere,
                     [(-0.5, 0.0), (0.0, -0.5)],
                     (4.0 * FOUR_PI, 4.0 * FOUR_PI), (40, 40))
    assert s.nonexistence_components == 2
    s = scan_regions(SurfaceKind.ClosedSphere,
                     [(0.3, 0.3), (0.0, 0.0)],
                     (4.0 * FOUR_PI, 4.0 * FOUR_PI), (40, 40))
    assert s.nonexistence_components == 3


def test_scan_labels_disk():
    s = scan_regions(SurfaceKind.UnitDisk, [(0.0, 0.0)],
                     (3.0 * FOUR_PI, 3.0 * FOUR_PI), (24, 24))
    labels = set(s.labels.ravel().tolist())
    assert LABEL_NONEXISTENCE in labels
    assert LABEL_COERCIVE in labels
    # The corner cell is deep inside the coercive square rho_i < 4 pi.
    assert s.labels[0, 0] == LABEL_COERCIVE
    assert s.labels[-1, -1] == LABEL_NONEXISTENCE


def test_scan_thread_determinism():
    args = (SurfaceKind.ClosedSphere, [(-0.5, 0.0), (0.0, -0.5)],
            (4.0 * FOUR_PI, 4.0 * FOUR_PI), (24, 24))
    serial = scan_regions(*args, threads=1)
    parallel = scan_regions(*args, threads=4)
    assert np.array_equal(serial.labels, parallel.labels)
    assert np.array_equal(serial.m_counts, parallel.m_counts)
    assert np.array_equal(serial.critical_distance,
                          parallel.critical_distance)


def test_scan_rejects_tiny_grid():
    with pytest.raises(RegionError):
        scan_regions(SurfaceKind.UnitDisk, [(0.0, 0.0)],
                     (FOUR_PI, FOUR_PI), (1, 2))
