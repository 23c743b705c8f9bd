"""Compensation policies applied inside one cohort.

Each policy takes the qualifications of the cohort's members as an ordered mapping
{individual: q_u} and returns a score per member. The individually fair variants solve a small
LP per cohort with |f(u) - f(v)| <= |q_u - q_v|; the hard-cutoff variants are kept as reference
points and are not intra-cohort fair.

The bottom-10% indicator marks u when |{v : q_u > q_v}| / |C| <= 0.1, so every member tied at
the lowest qualification is marked.
"""

import logging
from fractions import Fraction
from itertools import combinations

from fair_pipelines.core import CohortSet, UniverseSpec
from fair_pipelines.lp import solve_lp
from fair_pipelines.scoring.base import ScoringFunction
from utility_funcs import parse_number

logger = logging.getLogger(__name__)

CATALOG = (
    "fixed_bonus_pool",
    "stack_rank_if",
    "equal_treatment",
    "promotion",
    "stack_rank_exact",
    "promotion_exact",
    "proportional_bonus",
)

BOTTOM_FRACTION = Fraction(1, 10)


def _quals(qualifications):
    if not qualifications:
        raise ValueError("a policy needs a non-empty cohort")
    return {u: parse_number(q) if not isinstance(q, float) else q for u, q in qualifications.items()}


def _fair_lp(quals, objective, total=None, solver="exact"):
    """maximize objective . f subject to pairwise fairness, 0 <= f <= 1 and optionally sum f = total."""
    ids = list(quals)
    n = len(ids)
    A_ub, b_ub = [], []
    for i, j in combinations(range(n), 2):
        gap = abs(quals[ids[i]] - quals[ids[j]])
        row = [0] * n
        row[i], row[j] = 1, -1
        A_ub.append(row)
        b_ub.append(gap)
        A_ub.append([-a for a in row])
        b_ub.append(gap)
    for i in range(n):
        row = [0] * n
        row[i] = 1
        A_ub.append(row)
        b_ub.append(1)
    A_eq, b_eq = None, None
    if total is not None:
        A_eq, b_eq = [[1] * n], [total]
    result = solve_lp(objective, A_ub, b_ub, A_eq, b_eq, maximize=True, solver=solver)
    if result.status != "optimal":
        return None
    return dict(zip(ids, result.x))


def bottom_indicator(quals):
    n = len(quals)
    return {
        u: Fraction(sum(1 for q_v in quals.values() if q_u > q_v), n) <= BOTTOM_FRACTION
        for u, q_u in quals.items()
    }


def fixed_bonus_pool(qualifications, pool=1, solver="exact"):
    """Shares b_u summing to one that maximize sum_{u,v} (b_u - b_v)(q_u - q_v), times pool.

    With the shares summing to one the objective equals 2 (|C| sum_u b_u q_u - sum_u q_u), so the
    LP maximizes sum_u b_u q_u.
    """
    quals = _quals(qualifications)
    shares = _fair_lp(quals, list(quals.values()), total=1, solver=solver)
    return {u: pool * b for u, b in shares.items()}


def weighted_spread(shares, qualifications):
    """sum over ordered pairs of (b_u - b_v)(q_u - q_v)."""
    ids = list(shares)
    return sum(
        (shares[u] - shares[v]) * (qualifications[u] - qualifications[v]) for u in ids for v in ids
    )


def proportional_bonus(qualifications, pool=1):
    """b_u proportional to q_u; equal shares when every qualification is zero."""
    quals = _quals(qualifications)
    total = sum(quals.values())
    if total == 0:
        return {u: Fraction(pool) / len(quals) for u in quals}
    return {u: pool * q / total for u, q in quals.items()}


def stack_rank_if(qualifications, expected_count=1, solver="exact"):
    """Performance-plan probabilities maximizing agreement with the bottom-10% indicator.

    :param expected_count: fixes sum_u f(u); None leaves only the fairness constraints
    """
    quals = _quals(qualifications)
    bottom = bottom_indicator(quals)
    objective = [1 if bottom[u] else -1 for u in quals]
    probs = _fair_lp(quals, objective, total=expected_count, solver=solver)
    if probs is None:
        raise ValueError(f"no fair stack rank places {expected_count} members in expectation")
    return probs


def stack_rank_exact(qualifications):
    quals = _quals(qualifications)
    return {u: Fraction(int(marked)) for u, marked in bottom_indicator(quals).items()}


def promotion(qualifications, solver="exact"):
    """Probabilities summing to one that put the most mass on the most qualified members."""
    quals = _quals(qualifications)
    top = max(quals.values())
    objective = [1 if q == top else 0 for q in quals.values()]
    probs = _fair_lp(quals, objective, total=1, solver=solver)
    if probs is None:
        logger.warning("promotion LP infeasible; falling back to uniform probabilities")
        return {u: Fraction(1, len(quals)) for u in quals}
    return probs


def promotion_exact(qualifications):
    """Promote the most qualified member; ties share the promotion uniformly."""
    quals = _quals(qualifications)
    top = max(quals.values())
    winners = [u for u, q in quals.items() if q == top]
    return {u: Fraction(1, len(winners)) if u in winners else Fraction(0) for u in quals}


def equal_treatment(qualifications, base=1):
    """Every member receives base times the cohort's average qualification."""
    quals = _quals(qualifications)
    share = base * sum(quals.values()) / len(quals)
    return {u: share for u in quals}


POLICIES = {
    "fixed_bonus_pool": fixed_bonus_pool,
    "stack_rank_if": stack_rank_if,
    "equal_treatment": equal_treatment,
    "promotion": promotion,
    "stack_rank_exact": stack_rank_exact,
    "promotion_exact": promotion_exact,
    "proportional_bonus": proportional_bonus,
}


def catalog_scoring_function(name, spec, **params):
    """Wrap a catalog policy as a ScoringFunction over the universe's qualifications.

    Scores are per-cohort policy outputs, computed once per cohort.
    """
    if name not in POLICIES:
        raise ValueError(f"policy must be one of {', '.join(CATALOG)}, not {name}")
    if spec.qualifications is None:
        raise ValueError(f"policy {name} needs qualifications on the universe")
    policy = POLICIES[name]
    cache = {}

    def evaluator(cohort, u):
        if cohort not in cache:
            members = sorted(cohort, key=spec.index)
            cache[cohort] = policy({x: spec.qualification(x) for x in members}, **params)
        return cache[cohort][u]

    evaluator.__name__ = name
    return ScoringFunction(evaluator, provenance="catalog", name=name)


def pathological_family():
    """Universe {a, b, c} at distance zero, the three pairs as cohorts, and one fair f.

    f scores {a, b} with 0, {a, c} with 1 and {b, c} with 1/2. Every individually fair mechanism
    over these cohorts selects each pair with probability 1/3, which leaves the conditional
    expected scores at 1/2, 1/4 and 3/4.
    """
    spec = UniverseSpec(["a", "b", "c"], [[0, 0, 0], [0, 0, 0], [0, 0, 0]])
    cohort_set = CohortSet.explicit(spec, [["a", "b"], ["a", "c"], ["b", "c"]])
    values = {
        frozenset("ab"): Fraction(0),
        frozenset("ac"): Fraction(1),
        frozenset("bc"): Fraction(1, 2),
    }

    def pathological(cohort, u):
        return values[cohort]

    return spec, cohort_set, ScoringFunction(pathological, provenance="catalog", name="pathological")
