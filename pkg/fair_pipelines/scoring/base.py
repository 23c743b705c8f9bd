import logging
from fractions import Fraction
from itertools import combinations

from utility_funcs import approx_equal, approx_leq, mask_to_indices, parse_number

logger = logging.getLogger(__name__)

FAMILIES = ("F1", "F2", "F3")


class ScoringFunction(object):
    """f(C, u) in [0, 1] for u in C, and 0 for u outside C.

    Parameters
    ----------
    evaluator: callable
        (frozenset of member ids, individual) -> score, called only for members
    kind: str
        "deterministic" or "randomized"
    provenance: str
        where the function came from: "catalog", "table", "lp", "extension" or "adversarial"
    name: str, optional
    """

    def __init__(self, evaluator, kind="deterministic", provenance="table", name=None):
        self.evaluator = evaluator
        self.kind = kind
        self.provenance = provenance
        self.name = name or getattr(evaluator, "__name__", "f")

    @classmethod
    def from_table(cls, table, name=None):
        """From {(cohort members, individual): score}; contexts outside the table are errors."""
        values = {}
        for (cohort, u), score in table.items():
            score = parse_number(score) if not isinstance(score, float) else score
            if score < 0 or score > 1:
                raise ValueError(f"score {score} for ({list(cohort)}, {u}) is outside [0, 1]")
            values[(frozenset(cohort), u)] = score

        def evaluator(cohort, u):
            try:
                return values[(cohort, u)]
            except KeyError:
                raise ValueError(f"scoring table has no entry for ({sorted(cohort)}, {u})") from None

        return cls(evaluator, provenance="table", name=name or "table")

    def __call__(self, cohort, u):
        cohort = frozenset(cohort)
        if u not in cohort:
            return Fraction(0)
        return self.evaluator(cohort, u)

    def __repr__(self):
        return f"ScoringFunction({self.name}, {self.provenance})"


class MixtureScoringFunction(ScoringFunction):
    """A randomized scoring function: a finite mixture of deterministic ones."""

    def __init__(self, weighted, name=None):
        self._components = [(parse_number(w) if not isinstance(w, float) else w, f) for w, f in weighted]
        if not self._components:
            raise ValueError("a mixture needs at least one component")
        total = sum(w for w, _ in self._components)
        if not approx_equal(total, 1):
            raise ValueError(f"mixture weights sum to {total}, not 1")
        super().__init__(self._expected, kind="randomized", provenance="mixture", name=name or "mixture")

    def _expected(self, cohort, u):
        return sum(w * f(cohort, u) for w, f in self._components)

    def components(self):
        return list(self._components)


def _cohort_ids(spec, mask):
    return frozenset(spec.members(mask))


def intra_cohort_fair_check(f, cohorts, spec):
    """|f(C, u) - f(C, v)| <= D(u, v) for every permissible C and members u, v.

    :return: (ok, (cohort, u, v, gap, distance)) with the first violation
    """
    for mask in cohorts:
        ids = _cohort_ids(spec, mask)
        members = mask_to_indices(mask)
        scores = {i: f(ids, spec.individuals[i]) for i in members}
        for i, j in combinations(members, 2):
            gap = abs(scores[i] - scores[j])
            d = spec.distance_idx(i, j)
            if not approx_leq(gap, d):
                u, v = spec.individuals[i], spec.individuals[j]
                return False, (tuple(sorted(ids, key=spec.index)), u, v, gap, d)
    return True, None


def _check_f1(f, cohorts, spec):
    seen = {}
    for mask in cohorts:
        ids = _cohort_ids(spec, mask)
        for i in mask_to_indices(mask):
            u = spec.individuals[i]
            score = f(ids, u)
            if u not in seen:
                seen[u] = (score, mask)
            elif not approx_equal(seen[u][0], score):
                return False, (u, spec.members(seen[u][1]), seen[u][0], spec.members(mask), score)
    return True, None


def _check_f2(f, cohorts, spec):
    for mask in cohorts:
        ids = _cohort_ids(spec, mask)
        for i in mask_to_indices(mask):
            u = spec.individuals[i]
            for j in range(spec.n):
                if mask >> j & 1:
                    continue
                swapped = (mask & ~(1 << i)) | (1 << j)
                if swapped not in cohorts:
                    continue
                v = spec.individuals[j]
                gap = abs(f(_cohort_ids(spec, swapped), v) - f(ids, u))
                if not approx_leq(gap, spec.distance_idx(i, j)):
                    return False, (spec.members(mask), u, v, gap, spec.distance_idx(i, j))
    return True, None


def _check_f3(f, cohorts, spec):
    if not spec.has_quality_groups:
        raise ValueError("family F3 needs quality groups")
    ok, witness = intra_cohort_fair_check(f, cohorts, spec)
    if not ok:
        return ok, witness
    # one value per (profile, group) and groups within D(i, j) of each other
    values = {}
    for mask in cohorts:
        ids = _cohort_ids(spec, mask)
        profile = spec.quality_profile(mask)
        for u in spec.members(mask):
            score = f(ids, u)
            key = (profile, spec.group_of(u))
            if key not in values:
                values[key] = (score, mask, u)
            elif not approx_equal(values[key][0], score):
                other_score, other_mask, other = values[key]
                return False, (spec.members(other_mask), other, other_score, spec.members(mask), u, score)
    for (p1, i), (s1, m1, u1) in values.items():
        for (p2, j), (s2, m2, u2) in values.items():
            if p1 != p2 or i >= j:
                continue
            bound = spec.group_distance(i, j)
            if not approx_leq(abs(s1 - s2), bound):
                return False, (spec.members(m1), u1, s1, spec.members(m2), u2, s2)
    return True, None


def family_membership(f, family, spec, cohorts):
    """Check f against F1 (context-free), F2 (swap-stable) or F3 (profile-determined).

    :return: (ok, witness) where the witness names the offending contexts and scores
    """
    if family == "F1":
        return _check_f1(f, cohorts, spec)
    elif family == "F2":
        return _check_f2(f, cohorts, spec)
    elif family == "F3":
        return _check_f3(f, cohorts, spec)
    raise ValueError(f"family must be one of {', '.join(FAMILIES)}, not {family}")
