"""Pipeline outcome distributions and the four distance measures.

For an individual u the pipeline outcome is either a score in [0, 1] or "not selected" (bottom).
The unconditional law treats bottom as score 0; the conditional law renormalizes over the
selected outcomes. Distances between two individuals are either the gap in expected score or the
mass-moving distance (MMD) between the two laws.

Computing MMD
-------------
MMD(g1, g2) is the infimum of v in [0, 1] such that each law can be moved to an adjusted law by
shifting every unit of mass at most v/2, with the two adjusted laws at total variation at most
v/2. Let m(d) be the largest amount of mass that can be paired between g1 and g2 using only pairs
(x, y) with |x - y| <= d. Then v is feasible exactly when m(v) >= 1 - v/2:

* If m(v) >= 1 - v/2, move both halves of each paired unit to the midpoint (x + y) / 2 (each
  move is |x - y| / 2 <= v/2) and leave unpaired mass in place. The adjusted laws then share at
  least m(v) mass, so their TV is at most 1 - m(v) <= v/2.
* Conversely, any adjusted pair with TV <= v/2 shares at least 1 - v/2 mass. Each shared unit at
  an adjusted point w came from some x within v/2 of w and some y within v/2 of w, so
  |x - y| <= v and tracing the shared mass back gives a pairing of size >= 1 - v/2.

m is a non-decreasing step function that only changes at the pairwise support gaps d_j, so the
infimum is min over d_j in {0} and the gaps of max(d_j, 2 (1 - m(d_j))). m(d) itself is a
maximum matching in a one-dimensional interval graph: sweep the atoms in increasing order and
pair each atom with the oldest still-reachable atoms of the other law.

mmd_bruteforce evaluates the definition directly (an LP over adjusted supports per candidate v)
and is kept as an independent oracle.
"""

import logging
from collections import deque
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from utility_funcs import DEFAULT_TOLERANCE, approx_equal, is_exact

logger = logging.getLogger(__name__)

# float score values closer than this are one atom
MERGE_TOLERANCE = 1e-12

ROLES = ("probability", "cluster", "summed")


def merge_atoms(pairs):
    """Sum the masses of (value, mass) pairs, merging float values within MERGE_TOLERANCE."""
    merged = []
    for value, mass in sorted(pairs, key=lambda vm: float(vm[0])):
        if merged:
            last_value, last_mass = merged[-1]
            if last_value == value or (
                not (is_exact(value) and is_exact(last_value))
                and abs(float(value) - float(last_value)) <= MERGE_TOLERANCE
            ):
                merged[-1] = (last_value, last_mass + mass)
                continue
        merged.append((value, mass))
    return merged


class ScorePMF(object):
    """Finite-support mass function over scores.

    role is "probability" for laws summing to 1, "cluster" for unnormalized measures and
    "summed" for laws over summed scores of repeated pipelines, which may exceed 1.
    """

    def __init__(self, mass, role="probability", tolerance=DEFAULT_TOLERANCE):
        if role not in ROLES:
            raise ValueError(f"role must be one of {', '.join(ROLES)}, not {role}")
        items = mass.items() if isinstance(mass, dict) else mass
        atoms = []
        for value, p in items:
            if p < 0:
                if is_exact(p) or p < -tolerance:
                    raise ValueError(f"negative mass {p} at score {value}")
                p = 0.0
            if p == 0:
                continue
            if role != "summed" and not (-tolerance <= value <= 1 + tolerance):
                raise ValueError(f"score {value} is outside [0, 1]")
            atoms.append((value, p))
        self.role = role
        self.tolerance = tolerance
        self._atoms = merge_atoms(atoms)
        if role == "probability" and not approx_equal(self.total, 1, tolerance):
            raise ValueError(f"probability masses sum to {self.total}, not 1")

    @classmethod
    def point(cls, value):
        return cls({value: Fraction(1)})

    @property
    def total(self):
        return sum((p for _, p in self._atoms), Fraction(0))

    @property
    def support(self):
        return tuple(v for v, _ in self._atoms)

    def items(self):
        return list(self._atoms)

    def mass(self, value):
        for v, p in self._atoms:
            if approx_equal(v, value, MERGE_TOLERANCE):
                return p
        return 0

    def expectation(self):
        return sum((v * p for v, p in self._atoms), Fraction(0))

    @property
    def exact(self):
        return all(is_exact(v) and is_exact(p) for v, p in self._atoms)

    def to_pairs(self):
        return [(v, p) for v, p in self._atoms]

    def __eq__(self, other):
        if not isinstance(other, ScorePMF):
            return NotImplemented
        return self.role == other.role and self._atoms == other._atoms

    def __repr__(self):
        body = ", ".join(f"{v}: {p}" for v, p in self._atoms)
        return f"ScorePMF({{{body}}}, role={self.role!r})"


class PipelineOutcomeDistribution(object):
    """Law of an individual's pipeline outcome: bottom with p_bot, else a score."""

    def __init__(self, p_bot, scores, tolerance=DEFAULT_TOLERANCE):
        self.p_bot = p_bot
        self.scores = ScorePMF(scores, role="cluster", tolerance=tolerance)
        self.tolerance = tolerance
        if p_bot < 0 or not approx_equal(p_bot + self.scores.total, 1, tolerance):
            raise ValueError(
                f"p_bot {p_bot} and score mass {self.scores.total} do not form a distribution"
            )

    @property
    def selection_probability(self):
        return 1 - self.p_bot

    def unconditional(self):
        return unconditional(self)

    def conditional(self):
        return conditional(self)

    def __repr__(self):
        return f"PipelineOutcomeDistribution(p_bot={self.p_bot}, scores={self.scores.items()})"


def scoring_components(f):
    """Finite mixture [(weight, deterministic f), ...] of a possibly randomized scoring function."""
    components = getattr(f, "components", None)
    if components is None:
        return [(Fraction(1), f)]
    return list(components())


def pipeline_distribution(dist, f, u):
    """S_u: mass at score s is the probability of cohorts C containing u with f(C, u) = s."""
    universe = dist.universe
    atoms = []
    for mask, p in dist.contexts(u):
        cohort = frozenset(universe.members(mask))
        for weight, component in scoring_components(f):
            atoms.append((component(cohort, u), p * weight))
    p_u = sum((p for _, p in dist.contexts(u)), Fraction(0))
    return PipelineOutcomeDistribution(1 - p_u, atoms, dist.tolerance)


def unconditional(d):
    """Map bottom to score 0."""
    atoms = d.scores.items()
    if d.p_bot != 0:
        atoms.append((Fraction(0), d.p_bot))
    return ScorePMF(atoms, tolerance=d.tolerance)


def conditional(d):
    selected = 1 - d.p_bot
    if approx_equal(selected, 0, d.tolerance):
        raise ValueError("conditional undefined for never-selected individual")
    return ScorePMF([(v, p / selected) for v, p in d.scores.items()], tolerance=d.tolerance)


def _aligned(g1, g2):
    """Union support as [(value, mass1, mass2)]."""
    tagged = [(v, (p, 0)) for v, p in g1.items()] + [(v, (0, p)) for v, p in g2.items()]
    merged = []
    for value, (p1, p2) in sorted(tagged, key=lambda t: float(t[0])):
        if merged and approx_equal(merged[-1][0], value, MERGE_TOLERANCE):
            last = merged[-1]
            merged[-1] = (last[0], last[1] + p1, last[2] + p2)
        else:
            merged.append((value, p1, p2))
    return merged


def tv_distance(g1, g2):
    return sum((abs(p1 - p2) for _, p1, p2 in _aligned(g1, g2)), Fraction(0)) / 2


def expected_score_distance(g1, g2):
    return abs(g1.expectation() - g2.expectation())


def max_coupled_mass(g1, g2, cap):
    """Largest mass pairable between g1 and g2 using pairs at distance <= cap.

    Sweeps atoms in increasing score order; each atom pairs with the oldest reachable unpaired
    atoms of the other law, which expire first.
    """
    atoms = [(v, p, 0) for v, p in g1.items()] + [(v, p, 1) for v, p in g2.items()]
    atoms.sort(key=lambda a: (float(a[0]), a[2]))
    exact = is_exact(cap) and all(is_exact(v) for v, _, _ in atoms)
    slack = 0 if exact else MERGE_TOLERANCE
    queues = (deque(), deque())
    coupled = Fraction(0)
    for value, mass, side in atoms:
        other = queues[1 - side]
        while other and other[0][0] < value - cap - slack:
            other.popleft()
        remaining = mass
        while remaining > 0 and other:
            o_value, o_mass = other[0]
            used = min(remaining, o_mass)
            coupled += used
            remaining -= used
            if used == o_mass:
                other.popleft()
            else:
                other[0] = (o_value, o_mass - used)
        if remaining > 0:
            queues[side].append((value, remaining))
    return coupled


def mmd_breakpoints(g1, g2):
    gaps = {abs(x - y) for x in g1.support for y in g2.support}
    gaps.add(Fraction(0))
    return sorted(gaps, key=float)


def mmd(g1, g2):
    """Mass-moving distance via the coupling characterization."""
    best = None
    for d in mmd_breakpoints(g1, g2):
        candidate = max(d, 2 * (1 - max_coupled_mass(g1, g2, d)))
        if best is None or candidate < best:
            best = candidate
    if not is_exact(best):
        best = min(max(float(best), 0.0), 1.0)
    logger.debug("mmd over %d breakpoints = %s", len(mmd_breakpoints(g1, g2)), best)
    return best


def coupled_mass_lp(g1, g2, cap):
    """max_coupled_mass as a transport LP; used to cross-check the sweep."""
    x = g1.items()
    y = g2.items()
    edges = [
        (i, j)
        for i, (xv, _) in enumerate(x)
        for j, (yv, _) in enumerate(y)
        if abs(float(xv) - float(yv)) <= float(cap) + MERGE_TOLERANCE
    ]
    if not edges:
        return 0.0
    A = np.zeros((len(x) + len(y), len(edges)))
    for e, (i, j) in enumerate(edges):
        A[i, e] = 1
        A[len(x) + j, e] = 1
    b = np.array([float(p) for _, p in x] + [float(p) for _, p in y])
    res = linprog(-np.ones(len(edges)), A_ub=A, b_ub=b, bounds=(0, None), method="highs")
    return float(-res.fun)


def _definition_feasible(g1, g2, v):
    """LP check of the MMD definition at v over supports and pairwise midpoints."""
    xs = [(float(a), float(p)) for a, p in g1.items()]
    ys = [(float(a), float(p)) for a, p in g2.items()]
    points = sorted(
        {a for a, _ in xs}
        | {a for a, _ in ys}
        | {(a + b) / 2 for a, _ in xs for b, _ in ys}
    )
    half = v / 2 + 1e-12
    moves = []  # (side, source index, point index)
    for side, atoms in enumerate((xs, ys)):
        for s, (a, _) in enumerate(atoms):
            for t, w in enumerate(points):
                if abs(a - w) <= half:
                    moves.append((side, s, t))
    n_moves = len(moves)
    n_points = len(points)
    # variables: moves, then one |difference| bound per point
    n_vars = n_moves + n_points
    A_eq = np.zeros((len(xs) + len(ys), n_vars))
    b_eq = np.array([p for _, p in xs] + [p for _, p in ys])
    for e, (side, s, _) in enumerate(moves):
        A_eq[s + side * len(xs), e] = 1
    A_ub = np.zeros((2 * n_points + 1, n_vars))
    b_ub = np.zeros(2 * n_points + 1)
    for e, (side, _, t) in enumerate(moves):
        sign = 1 if side == 0 else -1
        A_ub[2 * t, e] = sign
        A_ub[2 * t + 1, e] = -sign
    for t in range(n_points):
        A_ub[2 * t, n_moves + t] = -1
        A_ub[2 * t + 1, n_moves + t] = -1
    A_ub[-1, n_moves:] = 1
    b_ub[-1] = v
    res = linprog(
        np.zeros(n_vars), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs"
    )
    return res.status == 0


def mmd_bruteforce(g1, g2, grid=21, tol=1e-9):
    """MMD straight from its definition: grid bracketing over v, then bisection."""
    lo, hi = 0.0, 1.0
    if _definition_feasible(g1, g2, 0.0):
        return 0.0
    for v in np.linspace(0.0, 1.0, grid)[1:]:
        if _definition_feasible(g1, g2, float(v)):
            hi = float(v)
            break
        lo = float(v)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if _definition_feasible(g1, g2, mid):
            hi = mid
        else:
            lo = mid
    return hi
