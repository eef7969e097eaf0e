"""Parameter-plane classification for the Toda system.

Classifies (rho_1, rho_2, alpha) configurations by: the coercivity bounds
rho_bar, the barycenter counts (M_1, M_2, M_3), the topological existence
criterion (non-contractibility of the punctured join of the two barycenter
sets), membership in the critical set of quantized rho values where
compactness of solution families may fail, and the algebraic non-existence
conditions on the disk and on the sphere with two antipodal singularities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations

import numpy as np

from .mesh import FOUR_PI, SurfaceKind


class RegionError(ValueError):
    pass


# Width of the band around strict thresholds inside which no open-condition
# verdict is issued.
BOUNDARY_BAND = 1e-9 * FOUR_PI


class ExistenceVerdict(Enum):
    ExistenceGuaranteed = "existence_guaranteed"
    NoInfo = "no_info"
    NotApplicable = "not_applicable"


class NonExistenceVerdict(Enum):
    NonExistence = "non_existence"
    NoConclusion = "no_conclusion"
    NotApplicable = "not_applicable"


def rho_bar(alpha_rows) -> tuple:
    """Coercivity-type upper bounds 4 pi min{1, min_{m != m'} 2+a_im+a_im'}."""
    out = []
    for row in alpha_rows:
        inner = min((2.0 + a + b for a, b in combinations(row, 2)),
                    default=math.inf)
        out.append(FOUR_PI * min(1.0, inner))
    return tuple(out)


def count_M(rho, alpha_rows):
    """Barycenter counts (M1, M2, M3) and a boundary flag.

    M_i counts points with 4 pi (1 + a_im) < rho_i; M3 counts points where
    additionally rho_i < 4 pi (2 + a_1m + a_2m) for both components.  The
    flag marks rho within the boundary band of any threshold, where the
    strict counting is unreliable.
    """
    rows = [list(alpha_rows[0]), list(alpha_rows[1])]
    if len(rows[0]) != len(rows[1]):
        raise RegionError("alpha rows must have equal length")
    boundary = False
    counts = [0, 0]
    m3 = 0
    for m in range(len(rows[0])):
        below = [False, False]
        within = [False, False]
        for i in range(2):
            lo = FOUR_PI * (1.0 + rows[i][m])
            hi = FOUR_PI * (2.0 + rows[0][m] + rows[1][m])
            if abs(rho[i] - lo) <= BOUNDARY_BAND or \
                    abs(rho[i] - hi) <= BOUNDARY_BAND:
                boundary = True
            below[i] = lo < rho[i]
            within[i] = below[i] and rho[i] < hi
            if below[i]:
                counts[i] += 1
        if within[0] and within[1]:
            m3 += 1
    return (counts[0], counts[1], m3), boundary


def topology_verdict(M) -> ExistenceVerdict:
    """Existence via non-contractibility of the punctured join.

    The join of the two barycenter sets with M3 midpoints removed has
    trivial homology exactly when (M1-1)(M2-1) = M3; only a non-trivial
    join forces critical points.  Callers must separately check that the
    barycenter sets are the full singular sets (rho_i < rho_bar_i) and
    that rho avoids the critical set.
    """
    m1, m2, m3 = M
    if m3 > min(m1, m2) or min(M) < 0:
        raise RegionError("invalid barycenter counts")
    if m1 == 0 or m2 == 0:
        return ExistenceVerdict.NotApplicable
    if (m1 - 1) * (m2 - 1) == m3:
        return ExistenceVerdict.NoInfo
    return ExistenceVerdict.ExistenceGuaranteed


def join_betti(m1: int, m2: int, m3: int):
    """Reduced b0 and b1 of the punctured join, with a formula cross-check.

    The punctured join deformation-retracts onto the complete bipartite
    graph K_{M1,M2} with M3 diagonal edges removed (each removed midpoint
    splits its segment into two half-open arcs retracting to the
    endpoints).  Returns ((b0_reduced, b1), formula_ok).
    """
    if m1 < 1 or m2 < 1 or not 0 <= m3 <= min(m1, m2):
        raise RegionError("invalid barycenter counts")
    n = m1 + m2
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = 0
    for a in range(m1):
        for b in range(m2):
            if a == b and a < m3:
                continue
            edges += 1
            ra, rb = find(a), find(m1 + b)
            if ra != rb:
                parent[ra] = rb
    comps = len({find(v) for v in range(n)})
    b0 = comps - 1
    b1 = edges - n + comps
    formula_ok = (b1 - b0) == (m1 - 1) * (m2 - 1) - m3
    return (b0, b1), formula_ok


def critical_set_membership(rho, alpha_rows, bound: float):
    """Distance from rho to the critical set of quantized parameter values.

    The set is a union of vertical and horizontal half-lines: component i
    sits at the quantized values 4 pi (n + sum_{m' in M'} (1 + a_im') +
    sum_{m in M} (2 + a_1m + a_2m)) over disjoint subsets M, M' of the
    singular points and integers n >= 0, with the other component at least
    sum_{m in M} 4 pi (1 + a_{3-i,m}).  Returns (member, distance).
    """
    if bound < max(rho):
        raise RegionError("enumeration bound must cover rho")
    rows = [list(alpha_rows[0]), list(alpha_rows[1])]
    npts = len(rows[0])
    n_max = int(math.ceil(bound / FOUR_PI)) + 1
    total = 0
    best = math.inf
    idx = range(npts)
    for i in range(2):
        other = 1 - i
        for bits in range(3 ** npts):
            # Ternary digit per point: 0 not used, 1 in M (coupled), 2 in M'.
            coupled, single = [], []
            rem = bits
            for m in idx:
                rem, d = divmod(rem, 3)
                if d == 1:
                    coupled.append(m)
                elif d == 2:
                    single.append(m)
            base = sum(2.0 + rows[0][m] + rows[1][m] for m in coupled) \
                + sum(1.0 + rows[i][m] for m in single)
            floor_other = FOUR_PI * sum(1.0 + rows[other][m] for m in coupled)
            for n in range(n_max + 1):
                value = FOUR_PI * (n + base)
                total += 1
                if total > 2 ** 16:
                    raise RegionError(
                        f"critical-set enumeration exceeds 2^16 values "
                        f"below bound {bound:.3g}")
                if value <= 0.0 or value > bound:
                    continue
                gap_i = abs(rho[i] - value)
                gap_other = max(0.0, floor_other - rho[other])
                best = min(best, math.hypot(gap_i, gap_other))
    return best <= 1e-12 * FOUR_PI, best


def disk_nonexistence(rho, alpha) -> bool:
    """Algebraic non-existence condition on the unit disk, origin weight."""
    r1, r2 = rho
    a1, a2 = alpha
    form = r1 * r1 - r1 * r2 + r2 * r2 \
        - FOUR_PI * (1.0 + a1) * r1 - FOUR_PI * (1.0 + a2) * r2
    return form >= 0.0


def sphere_nonexistence(rho, alpha_pairs):
    """Non-existence on the sphere with two antipodal singular points.

    alpha_pairs = ((a_11, a_21), (a_12, a_22)).  Evaluates the four
    quadratic forms; non-existence holds if all four satisfy their stated
    inequality with at least one strict, or all four opposite strict-side
    inequalities hold.  Returns (verdict, forms).
    """
    (a11, a21), (a12, a22) = alpha_pairs
    if (a11, a21) == (a12, a22):
        return NonExistenceVerdict.NotApplicable, (0.0, 0.0, 0.0, 0.0)
    r1, r2 = rho
    f1 = r1 * r1 + r2 * r2 - r1 * r2 \
        - FOUR_PI * (1.0 + a11) * r1 - FOUR_PI * (1.0 + a21) * r2
    f2 = r1 * r1 + r2 * r2 - r1 * r2 \
        - FOUR_PI * (1.0 + a12) * r1 - FOUR_PI * (1.0 + a22) * r2
    f3 = r1 * r1 - r2 * r2 \
        - FOUR_PI * (1.0 + a11) * r1 + FOUR_PI * (1.0 + a22) * r2
    f4 = r1 * r1 - r2 * r2 \
        - FOUR_PI * (1.0 + a12) * r1 + FOUR_PI * (1.0 + a21) * r2
    forms = (f1, f2, f3, f4)
    # Stated pattern: f1 <= 0, f2 >= 0, f3 <= 0, f4 >= 0.
    signs = (-1.0, 1.0, -1.0, 1.0)
    stated = all(s * f >= 0.0 for s, f in zip(signs, forms))
    stated_strict = stated and any(s * f > 0.0 for s, f in zip(signs, forms))
    opposite = all(s * f <= 0.0 for s, f in zip(signs, forms))
    opposite_strict = opposite and any(
        s * f < 0.0 for s, f in zip(signs, forms))
    if stated_strict or opposite_strict:
        return NonExistenceVerdict.NonExistence, forms
    return NonExistenceVerdict.NoConclusion, forms


@dataclass
class ClassificationReport:
    rho: tuple
    rho_bar: tuple
    M: tuple
    boundary: bool
    existence: ExistenceVerdict
    existence_reason: str
    critical_distance: float
    disk_nonexistence: object          # bool or None
    sphere_nonexistence: object        # NonExistenceVerdict or None
    sphere_forms: object
    betti: object                      # (b0_reduced, b1) or None


def classify_configuration(kind: SurfaceKind, rho,
                           alpha_pairs) -> ClassificationReport:
    """Full classification of one (rho, alpha) configuration.

    alpha_pairs is the per-point list of (a_1m, a_2m) weight pairs.
    """
    alpha_rows = ([p[0] for p in alpha_pairs], [p[1] for p in alpha_pairs])
    rbar = rho_bar(alpha_rows)
    M, boundary = count_M(rho, alpha_rows)
    bound = max(max(rho) + FOUR_PI, 2.0 * FOUR_PI)
    member, dist = critical_set_membership(rho, alpha_rows, bound)

    reason = ""
    if boundary:
        verdict = ExistenceVerdict.NotApplicable
        reason = "rho lies on a counting threshold"
    elif not (rho[0] < rbar[0] and rho[1] < rbar[1]):
        verdict = ExistenceVerdict.NotApplicable
        reason = "rho_i < rho_bar_i fails; barycenter sets may be larger"
    elif member or dist <= BOUNDARY_BAND:
        verdict = ExistenceVerdict.NotApplicable
        reason = "rho lies on the critical set of quantized values"
    else:
        verdict = topology_verdict(M)
        if verdict is ExistenceVerdict.NotApplicable:
            reason = "a barycenter set is empty"

    disk = None
    if kind is SurfaceKind.UnitDisk and len(alpha_pairs) == 1:
        disk = disk_nonexistence(rho, alpha_pairs[0])
    sphere_v, sphere_f = None, None
    if kind is SurfaceKind.ClosedSphere and len(alpha_pairs) == 2:
        sphere_v, sphere_f = sphere_nonexistence(rho, alpha_pairs)

    betti = None
    if M[0] >= 1 and M[1] >= 1:
        betti, ok = join_betti(*M)
        if not ok:
            raise RegionError("homology formula cross-check failed")
    return ClassificationReport(tuple(rho), rbar, M, boundary, verdict,
                                reason, dist, disk, sphere_v, sphere_f, betti)


# Scan labels in decreasing priority.
LABEL_NONEXISTENCE = "nonexistence"
LABEL_COERCIVE = "coercive"
LABEL_CRITICAL = "critical_boundary"
LABEL_EXISTENCE = "existence"
LABEL_UNKNOWN = "unknown"


@dataclass
class RegionScan:
    kind: SurfaceKind
    alpha_pairs: tuple
    rho1: np.ndarray
    rho2: np.ndarray
    labels: np.ndarray            # (n1, n2) of label strings
    m_counts: np.ndarray          # (n1, n2, 3) int
    critical_distance: np.ndarray
    nonexistence_components: int


def _component_count(mask: np.ndarray) -> int:
    """4-connected components of a boolean cell mask."""
    seen = np.zeros_like(mask, dtype=bool)
    n1, n2 = mask.shape
    comps = 0
    for i in range(n1):
        for j in range(n2):
            if not mask[i, j] or seen[i, j]:
                continue
            comps += 1
            stack = [(i, j)]
            seen[i, j] = True
            while stack:
                a, b = stack.pop()
                for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    x, y = a + da, b + db
                    if 0 <= x < n1 and 0 <= y < n2 and mask[x, y] \
                            and not seen[x, y]:
                        seen[x, y] = True
                        stack.append((x, y))
    return comps


def scan_regions(kind: SurfaceKind, alpha_pairs, rho_max,
                 steps, threads: int = 1) -> RegionScan:
    """Label a (rho_1, rho_2) grid of cell centers by the strongest verdict.

    Cells sit at half-step offsets so exact thresholds fall between cells.
    Rows are independent, so threads > 1 fans them out over a worker pool;
    results are written by index and identical for any thread count.
    """
    n1, n2 = steps
    if n1 * n2 < 4:
        raise RegionError("scan grid too coarse to resolve any region")
    r1 = (np.arange(n1) + 0.5) * (rho_max[0] / n1)
    r2 = (np.arange(n2) + 0.5) * (rho_max[1] / n2)
    alpha_rows = ([p[0] for p in alpha_pairs], [p[1] for p in alpha_pairs])
    mins = [min(row, default=0.0) for row in alpha_rows]
    coercive_bound = [FOUR_PI * min(1.0, 1.0 + mins[i]) for i in range(2)]

    labels = np.full((n1, n2), LABEL_UNKNOWN, dtype=object)
    m_counts = np.zeros((n1, n2, 3), dtype=int)
    cdist = np.zeros((n1, n2))
    bound = max(max(rho_max) + FOUR_PI, 2.0 * FOUR_PI)
    rbar = rho_bar(alpha_rows)

    def label_row(i):
        a = r1[i]
        for j, b in enumerate(r2):
            rho = (float(a), float(b))
            M, boundary = count_M(rho, alpha_rows)
            m_counts[i, j] = M
            member, dist = critical_set_membership(rho, alpha_rows, bound)
            cdist[i, j] = dist

            non = False
            if kind is SurfaceKind.UnitDisk and len(alpha_pairs) == 1:
                non = disk_nonexistence(rho, alpha_pairs[0])
            elif kind is SurfaceKind.ClosedSphere and len(alpha_pairs) == 2:
                v, _ = sphere_nonexistence(rho, alpha_pairs)
                non = v is NonExistenceVerdict.NonExistence

            if non:
                labels[i, j] = LABEL_NONEXISTENCE
            elif rho[0] < coercive_bound[0] and rho[1] < coercive_bound[1]:
                labels[i, j] = LABEL_COERCIVE
            elif member or dist <= BOUNDARY_BAND or boundary:
                labels[i, j] = LABEL_CRITICAL
            elif rho[0] < rbar[0] and rho[1] < rbar[1] and \
                    topology_verdict(M) is ExistenceVerdict.ExistenceGuaranteed:
                labels[i, j] = LABEL_EXISTENCE

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(label_row, range(n1)))
    else:
        for i in range(n1):
            label_row(i)
    comps = _component_count(labels == LABEL_NONEXISTENCE)
    return RegionScan(kind, tuple(tuple(p) for p in alpha_pairs), r1, r2,
                      labels, m_counts, cdist, comps)
