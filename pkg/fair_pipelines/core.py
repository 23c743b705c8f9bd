"""Universe, cohort-set and cohort-distribution types.

Cohorts are int bitsets indexed by universe order: bit i is set when the i-th individual is a
member. Probabilities stay Fractions whenever every input is rational and fall back to floats
compared under an absolute tolerance otherwise.
"""

import logging
from collections import namedtuple
from fractions import Fraction

import numpy as np
from scipy.special import comb

from utility_funcs import (
    DEFAULT_TOLERANCE,
    all_exact,
    approx_equal,
    approx_leq,
    is_exact,
    mask_to_indices,
    parse_number,
    popcount,
    subsets_of_size,
)

logger = logging.getLogger(__name__)

Violation = namedtuple("Violation", ["kind", "items", "message"])


class ValidationResult(object):
    def __init__(self, violations):
        self.violations = list(violations)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def __repr__(self):
        if self.ok:
            return "ValidationResult(ok)"
        return f"ValidationResult({len(self.violations)} violations)"


class QualityProfile(tuple):
    """Count vector (x_1, ..., x_n) of cohort members per quality group."""

    def __new__(cls, counts):
        counts = tuple(int(x) for x in counts)
        if any(x < 0 for x in counts):
            raise ValueError(f"quality profile counts must be non-negative, not {counts}")
        return super().__new__(cls, counts)

    def check(self, spec):
        sizes = [len(g) for g in spec.quality_groups]
        if len(self) != len(sizes):
            raise ValueError(f"profile {tuple(self)} has {len(self)} groups, universe has {len(sizes)}")
        for i, (x, size) in enumerate(zip(self, sizes)):
            if x > size:
                raise ValueError(f"profile {tuple(self)} asks {x} members of group {i} of size {size}")

    @property
    def total(self):
        return sum(self)


class UniverseSpec(object):
    """The universe U with its task metric D.

    Parameters
    ----------
    individuals: list
        ordered, hashable identifiers; their order fixes the bitset encoding
    metric: matrix-like
        |U| x |U| distances in [0, 1]
    qualifications: dict or list, optional
        q_u in [0, 1] per individual
    quality_groups: list of lists, optional
        a partition of the individuals into quality groups q_1..q_n
    group_distances: matrix-like, optional
        D(i, j) between groups; derived as the minimum member distance when omitted
    beta: number, optional
        the declared clustering parameter
    """

    def __init__(
        self,
        individuals,
        metric,
        qualifications=None,
        quality_groups=None,
        group_distances=None,
        beta=None,
    ):
        self.individuals = tuple(individuals)
        if len(set(self.individuals)) != len(self.individuals):
            raise ValueError(f"individual ids must be distinct, got {list(self.individuals)}")
        self._index = {u: i for i, u in enumerate(self.individuals)}
        n = len(self.individuals)
        rows = [list(row) for row in metric]
        if len(rows) != n or any(len(row) != n for row in rows):
            raise ValueError(f"metric must be a {n}x{n} matrix")
        self._metric = tuple(tuple(parse_number(x) for x in row) for row in rows)

        self.qualifications = None
        if qualifications is not None:
            if isinstance(qualifications, dict):
                missing = [u for u in self.individuals if u not in qualifications]
                if missing:
                    raise ValueError(f"qualifications missing for {missing}")
                values = [qualifications[u] for u in self.individuals]
            else:
                values = list(qualifications)
            self.qualifications = {
                u: parse_number(q) for u, q in zip(self.individuals, values)
            }

        self.quality_groups = None
        self.group_distances = None
        self._group_of = None
        self.beta = None if beta is None else parse_number(beta)
        if quality_groups is not None:
            self.quality_groups = tuple(tuple(g) for g in quality_groups)
            self._group_of = {}
            for i, group in enumerate(self.quality_groups):
                for u in group:
                    if u not in self._index:
                        raise ValueError(f"quality group {i} names unknown individual {u!r}")
                    # duplicates are reported by validate_universe
                    self._group_of.setdefault(u, i)
            if group_distances is None:
                self.group_distances = self._derived_group_distances()
            else:
                self.group_distances = tuple(
                    tuple(parse_number(x) for x in row) for row in group_distances
                )

    @classmethod
    def from_qualifications(cls, qualifications, quality_groups=None, beta=None):
        """One-dimensional universe with D(u, v) = |q_u - q_v|.

        :param qualifications: ordered mapping individual -> q_u
        """
        individuals = list(qualifications)
        q = [parse_number(qualifications[u]) for u in individuals]
        metric = [[abs(a - b) for b in q] for a in q]
        return cls(individuals, metric, qualifications, quality_groups, beta=beta)

    @classmethod
    def discrete(cls, individuals, **kwargs):
        """The 0-1 metric."""
        n = len(individuals)
        metric = [[0 if i == j else 1 for j in range(n)] for i in range(n)]
        return cls(individuals, metric, **kwargs)

    def _derived_group_distances(self):
        groups = self.quality_groups
        out = []
        for i, gi in enumerate(groups):
            row = []
            for j, gj in enumerate(groups):
                if i == j:
                    row.append(Fraction(0))
                else:
                    row.append(min(self.distance(u, v) for u in gi for v in gj))
            out.append(tuple(row))
        return tuple(out)

    @property
    def n(self):
        return len(self.individuals)

    @property
    def full_mask(self):
        return (1 << self.n) - 1

    @property
    def has_quality_groups(self):
        return self.quality_groups is not None

    def index(self, u):
        try:
            return self._index[u]
        except KeyError:
            raise ValueError(f"unknown individual {u!r}") from None

    def distance(self, u, v):
        return self._metric[self.index(u)][self.index(v)]

    def distance_idx(self, i, j):
        return self._metric[i][j]

    def metric_array(self):
        return np.array([[float(x) for x in row] for row in self._metric])

    def members(self, mask):
        return tuple(self.individuals[i] for i in mask_to_indices(mask))

    def mask(self, members):
        mask = 0
        for u in members:
            bit = 1 << self.index(u)
            if mask & bit:
                raise ValueError(f"individual {u!r} listed twice in one cohort")
            mask |= bit
        return mask

    def as_mask(self, cohort):
        """Accept an int bitset or an iterable of ids."""
        if isinstance(cohort, (int, np.integer)) and not isinstance(cohort, bool):
            mask = int(cohort)
            if mask <= 0 or mask > self.full_mask:
                raise ValueError(f"cohort bitset {mask} is empty or outside the universe")
            return mask
        return self.mask(cohort)

    def qualification(self, u):
        if self.qualifications is None:
            raise ValueError("universe has no qualifications")
        return self.qualifications[u]

    def group_of(self, u):
        if self._group_of is None:
            raise ValueError("universe has no quality groups")
        return self._group_of[u]

    def group_distance(self, i, j):
        if self.group_distances is None:
            raise ValueError("universe has no quality groups")
        return self.group_distances[i][j]

    def quality_profile(self, mask):
        if self._group_of is None:
            raise ValueError("universe has no quality groups")
        counts = [0] * len(self.quality_groups)
        for u in self.members(mask):
            counts[self._group_of[u]] += 1
        return QualityProfile(counts)

    def __repr__(self):
        return f"UniverseSpec({list(self.individuals)})"


def validate_universe(spec):
    """Check the metric and quality-group invariants.

    Returns a ValidationResult listing every violation; nothing is raised.
    """
    violations = []
    ids = spec.individuals
    n = spec.n
    for i in range(n):
        d = spec.distance_idx(i, i)
        if d != 0:
            violations.append(
                Violation("diagonal", (ids[i],), f"D({ids[i]},{ids[i]}) = {d}, expected 0")
            )
    for i in range(n):
        for j in range(i + 1, n):
            d_ij, d_ji = spec.distance_idx(i, j), spec.distance_idx(j, i)
            if d_ij != d_ji:
                violations.append(
                    Violation(
                        "asymmetric",
                        (ids[i], ids[j]),
                        f"D({ids[i]},{ids[j]}) = {d_ij} but D({ids[j]},{ids[i]}) = {d_ji}",
                    )
                )
            for d in {d_ij, d_ji}:
                if d < 0 or d > 1:
                    violations.append(
                        Violation(
                            "range", (ids[i], ids[j]), f"D({ids[i]},{ids[j]}) = {d} not in [0,1]"
                        )
                    )
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            for k in range(n):
                if k == i or k == j:
                    continue
                # each unordered triangle once, with u and w the endpoints
                if i > k:
                    continue
                lhs = spec.distance_idx(i, k)
                rhs = spec.distance_idx(i, j) + spec.distance_idx(j, k)
                if lhs > rhs:
                    violations.append(
                        Violation(
                            "triangle",
                            (ids[i], ids[j], ids[k]),
                            f"D({ids[i]},{ids[j]}) + D({ids[j]},{ids[k]}) = {rhs}"
                            f" < D({ids[i]},{ids[k]}) = {lhs}",
                        )
                    )

    if spec.qualifications is not None:
        for u, q in spec.qualifications.items():
            if q < 0 or q > 1:
                violations.append(Violation("qualification", (u,), f"q({u}) = {q} not in [0,1]"))

    if spec.quality_groups is not None:
        seen = {}
        for gi, group in enumerate(spec.quality_groups):
            if not group:
                violations.append(Violation("partition", (gi,), f"quality group {gi} is empty"))
            for u in group:
                if u in seen:
                    violations.append(
                        Violation(
                            "partition", (u,), f"{u} is in quality groups {seen[u]} and {gi}"
                        )
                    )
                seen.setdefault(u, gi)
        missing = [u for u in ids if u not in seen]
        if missing:
            violations.append(
                Violation("partition", tuple(missing), f"not in any quality group: {missing}")
            )
        if not missing and len(seen) == n:
            derived = spec._derived_group_distances()
            for gi in range(len(derived)):
                for gj in range(len(derived)):
                    declared = spec.group_distances[gi][gj]
                    if declared != derived[gi][gj]:
                        violations.append(
                            Violation(
                                "group_distance",
                                (gi, gj),
                                f"D({gi},{gj}) = {declared}, member minimum is {derived[gi][gj]}",
                            )
                        )
        if spec.beta is not None and not 0 <= spec.beta <= 1:
            violations.append(Violation("beta", (), f"beta = {spec.beta} not in [0,1]"))
    return ValidationResult(violations)


class CohortSet(object):
    """The permissible cohorts: either every size-k subset or an explicit list."""

    def __init__(self, universe, size=None, cohorts=None):
        self.universe = universe
        self.size = size
        self._explicit = cohorts
        self._cohorts = None if cohorts is None else tuple(cohorts)
        self._lookup = None if cohorts is None else frozenset(cohorts)
        self._containing = {}

    @classmethod
    def all_of_size(cls, universe, k):
        k = int(k)
        if k < 1 or k > universe.n:
            raise ValueError(f"cohort size must be between 1 and {universe.n}, not {k}")
        return cls(universe, size=k)

    @classmethod
    def explicit(cls, universe, cohorts):
        masks = []
        seen = set()
        for cohort in cohorts:
            mask = universe.as_mask(cohort)
            if mask in seen:
                raise ValueError(f"duplicate cohort {universe.members(mask)}")
            seen.add(mask)
            masks.append(mask)
        if not masks:
            raise ValueError("an explicit cohort set needs at least one cohort")
        return cls(universe, cohorts=masks)

    @property
    def is_complete(self):
        """True for the all-size-k representation."""
        return self._explicit is None

    def __iter__(self):
        if self._cohorts is None:
            # lazy on first pass, cached afterwards
            return subsets_of_size(self.universe.n, self.size)
        return iter(self._cohorts)

    def cohorts(self):
        if self._cohorts is None:
            self._cohorts = tuple(subsets_of_size(self.universe.n, self.size))
            self._lookup = frozenset(self._cohorts)
        return self._cohorts

    def __len__(self):
        if self._cohorts is None:
            return int(comb(self.universe.n, self.size, exact=True))
        return len(self._cohorts)

    def __contains__(self, mask):
        if self._explicit is None:
            return 0 < mask <= self.universe.full_mask and popcount(mask) == self.size
        return mask in self._lookup

    def containing(self, u):
        """The cohorts C_u that contain u, in iteration order."""
        if u not in self._containing:
            bit = 1 << self.universe.index(u)
            self._containing[u] = tuple(c for c in self.cohorts() if c & bit)
        return self._containing[u]

    def members(self, mask):
        return self.universe.members(mask)

    def __repr__(self):
        if self.is_complete:
            return f"CohortSet(all size {self.size} of {self.universe.n})"
        return f"CohortSet({len(self)} explicit cohorts)"


def is_quality_symmetric(cohort_set, spec):
    """Whether swapping a member for a non-member of the same quality group stays in the set.

    Returns (ok, missing) where missing is (cohort, removed, added) for the first absent swap.
    """
    ids = spec.individuals
    for mask in cohort_set.cohorts():
        for i in mask_to_indices(mask):
            for j in range(spec.n):
                if mask >> j & 1 or spec.group_of(ids[i]) != spec.group_of(ids[j]):
                    continue
                swapped = (mask & ~(1 << i)) | (1 << j)
                if swapped not in cohort_set:
                    return False, (spec.members(mask), ids[i], ids[j])
    return True, None


class CohortDistribution(object):
    """An exact probability law over a cohort set.

    Parameters
    ----------
    cohort_set: CohortSet
    probabilities: dict
        cohort (bitset or iterable of ids) -> probability; unlisted cohorts get 0
    tolerance: float
        absolute tolerance used when any probability is a float
    """

    def __init__(self, cohort_set, probabilities, tolerance=DEFAULT_TOLERANCE):
        self.cohort_set = cohort_set
        self.universe = cohort_set.universe
        self.tolerance = tolerance
        probs = {}
        for cohort, p in probabilities.items():
            mask = self.universe.as_mask(cohort)
            if mask not in cohort_set:
                raise ValueError(f"cohort {self.universe.members(mask)} is not permissible")
            if not is_exact(p):
                p = float(p)
                if -tolerance <= p < 0:
                    p = 0.0
            if p < 0:
                raise ValueError(f"negative probability {p} on {self.universe.members(mask)}")
            if p != 0:
                probs[mask] = probs.get(mask, 0) + p
        self.exact = all_exact(probs.values())
        total = sum(probs.values())
        if not approx_equal(total, 1, tolerance):
            raise ValueError(f"cohort probabilities sum to {total}, not 1")
        self._probabilities = dict(sorted(probs.items()))
        self._contexts = {}
        self._selection = None

    @classmethod
    def uniform(cls, cohort_set):
        cohorts = cohort_set.cohorts()
        p = Fraction(1, len(cohorts))
        return cls(cohort_set, {c: p for c in cohorts})

    @classmethod
    def point_mass(cls, cohort_set, cohort):
        return cls(cohort_set, {cohort_set.universe.as_mask(cohort): Fraction(1)})

    @classmethod
    def mixture(cls, weighted):
        """Mix [(weight, distribution), ...] over one cohort set."""
        weighted = list(weighted)
        if not weighted:
            raise ValueError("mixture needs at least one component")
        cohort_set = weighted[0][1].cohort_set
        probs = {}
        for weight, dist in weighted:
            if dist.universe is not cohort_set.universe:
                raise ValueError("mixture components must share a universe")
            for mask, p in dist.items():
                probs[mask] = probs.get(mask, 0) + weight * p
        return cls(cohort_set, probs)

    def restricted(self, excluded):
        """Condition on avoiding the excluded individuals."""
        drop = self.universe.mask(excluded) if excluded else 0
        kept = {m: p for m, p in self._probabilities.items() if not m & drop}
        total = sum(kept.values())
        if total == 0:
            raise ValueError(f"no probability mass avoids {list(excluded)}")
        return CohortDistribution(
            self.cohort_set, {m: p / total for m, p in kept.items()}, self.tolerance
        )

    def items(self):
        return self._probabilities.items()

    @property
    def support(self):
        return tuple(self._probabilities)

    def probability(self, cohort):
        return self._probabilities.get(self.universe.as_mask(cohort), 0)

    def contexts(self, u):
        """(cohort, probability) for every supported cohort containing u."""
        if u not in self._contexts:
            bit = 1 << self.universe.index(u)
            self._contexts[u] = tuple((m, p) for m, p in self._probabilities.items() if m & bit)
        return self._contexts[u]

    def selection_probabilities(self):
        if self._selection is None:
            sel = {u: 0 for u in self.universe.individuals}
            for mask, p in self._probabilities.items():
                for u in self.universe.members(mask):
                    sel[u] += p
            self._selection = sel
        return dict(self._selection)

    def selection_probability(self, u):
        return self.selection_probabilities()[u]

    def sample(self, rng):
        masks = self.support
        probs = np.array([float(p) for p in self._probabilities.values()])
        return masks[rng.choice(len(masks), p=probs / probs.sum())]

    def sample_many(self, n, seed=None):
        rng = np.random.default_rng(seed)
        masks = self.support
        probs = np.array([float(p) for p in self._probabilities.values()])
        draws = rng.choice(len(masks), size=n, p=probs / probs.sum())
        return [masks[i] for i in draws]

    def as_table(self):
        """[(members, probability), ...] in support order."""
        return [(self.universe.members(m), p) for m, p in self._probabilities.items()]

    def __repr__(self):
        return f"CohortDistribution({len(self._probabilities)} cohorts, exact={self.exact})"


def selection_probabilities(dist):
    """p(u) = sum of A(C) over the cohorts containing u."""
    return dist.selection_probabilities()


def _pair_ratio(gap, d):
    if d == 0:
        return 0 if gap == 0 else float("inf")
    return gap / d


def is_individually_fair(dist, spec, alpha=1, tolerance=None):
    """Check |p(u) - p(v)| <= alpha * D(u, v) over all pairs.

    Returns (ok, (u, v, ratio)) where the pair maximizes |p(u) - p(v)| / D(u, v); pairs at
    distance zero contribute an infinite ratio unless their probabilities agree.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, not {alpha}")
    tol = dist.tolerance if tolerance is None else tolerance
    p = dist.selection_probabilities()
    ids = spec.individuals
    ok = True
    worst = None
    worst_ratio = -1
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            u, v = ids[i], ids[j]
            d = spec.distance_idx(i, j)
            gap = abs(p[u] - p[v])
            if d == 0 and approx_equal(gap, 0, tol):
                gap = 0
            if not approx_leq(gap, alpha * d, tol):
                ok = False
            ratio = _pair_ratio(gap, d)
            if ratio > worst_ratio:
                worst_ratio = ratio
                worst = (u, v, ratio)
    return ok, worst


def check_quality_clustered(spec):
    """Smallest beta' with max intra-group distance <= beta' * min inter-group distance.

    Returns (ok, beta') where ok compares against the declared beta (1 when undeclared). A
    single quality group has no inter-group term and gets beta' = 0.
    """
    if not spec.has_quality_groups:
        raise ValueError("check_quality_clustered needs quality groups")
    groups = spec.quality_groups
    beta_prime = Fraction(0)
    if len(groups) > 1:
        for i, group in enumerate(groups):
            intra = max(
                (spec.distance(u, v) for u in group for v in group if u != v), default=0
            )
            inter = min(spec.group_distance(i, j) for j in range(len(groups)) if j != i)
            if inter == 0:
                if intra > 0:
                    return False, float("inf")
                continue
            beta_prime = max(beta_prime, intra / inter)
    declared = 1 if spec.beta is None else spec.beta
    return beta_prime <= declared, beta_prime
