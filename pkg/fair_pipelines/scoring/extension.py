import logging
from fractions import Fraction
from itertools import combinations

from fair_pipelines.scoring.base import ScoringFunction
from utility_funcs import approx_leq

logger = logging.getLogger(__name__)


def lipschitz_extend(partial, delta, alpha, spec, name="extension"):
    """Extend an alpha-Lipschitz partial scoring function to every cohort context.

    g'(x) = inf over anchors p of f(p) + alpha * delta(x, p), and g(x) = min(1, g'(x)).

    Parameters
    ----------
    partial: dict
        {(cohort bitset, individual): score} on the anchor contexts
    delta: callable
        policy distance over (bitset, individual) contexts
    alpha: number
        Lipschitz constant
    spec: UniverseSpec

    Raises ValueError naming the first anchor pair that breaks the Lipschitz condition.
    """
    anchors = []
    for (cohort, u), score in partial.items():
        if score < 0 or score > 1:
            raise ValueError(f"anchor score {score} at ({spec.members(spec.as_mask(cohort))}, {u}) is outside [0, 1]")
        anchors.append(((spec.as_mask(cohort), u), score))
    if not anchors:
        raise ValueError("lipschitz_extend needs at least one anchor")
    for (x, fx), (y, fy) in combinations(anchors, 2):
        bound = alpha * delta(x, y)
        if not approx_leq(abs(fx - fy), bound):
            raise ValueError(
                f"partial function is not {alpha}-Lipschitz: contexts "
                f"({list(spec.members(x[0]))}, {x[1]}) and ({list(spec.members(y[0]))}, {y[1]}) "
                f"differ by {abs(fx - fy)} > {bound}"
            )
    known = dict(anchors)
    logger.debug("extending %d anchors at alpha=%s", len(anchors), alpha)

    def evaluator(cohort, u):
        ctx = (spec.mask(cohort), u)
        if ctx in known:
            return known[ctx]
        return min([Fraction(1)] + [fp + alpha * delta(ctx, p) for p, fp in anchors])

    return ScoringFunction(evaluator, provenance="extension", name=name)
