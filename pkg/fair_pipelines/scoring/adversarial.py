"""Witness scoring functions for pairs that fail Notion 1 or Notion 2.

Both constructions score every context of a cluster alike, so they are 1-Lipschitz under any
policy distance that keeps different clusters at distance at least 1. Contexts outside the
pair's clusters are filled in by lipschitz_extend.
"""

import logging
from fractions import Fraction
from itertools import combinations

from fair_pipelines.scoring.extension import lipschitz_extend
from utility_funcs import approx_leq, parse_number

logger = logging.getLogger(__name__)


def cluster_delta(m):
    """0 between contexts of one cluster of m, 1 between everything else."""

    def delta(x, y):
        if x == y:
            return Fraction(0)
        try:
            same = m.label(*x) == m.label(*y)
        except ValueError:
            return Fraction(1)
        return Fraction(0) if same else Fraction(1)

    return delta


def _pair_contexts(m):
    for label, cluster in enumerate(m.clusters(), start=1):
        for ctx in cluster:
            yield label, ctx


def _check_clustering(m, delta, radius):
    """delta restricted to the pair's contexts must keep clusters within radius and apart by 1."""
    contexts = list(_pair_contexts(m))
    for (li, x), (lj, y) in combinations(contexts, 2):
        value = delta(x, y)
        if li == lj and not approx_leq(value, radius):
            raise ValueError(
                f"cluster {li} has contexts at delta = {value} > {radius}; "
                "delta is not clustered at this radius"
            )
        if li != lj and not approx_leq(1, value):
            raise ValueError(f"clusters {li} and {lj} are only {value} apart under delta, not 1")


def adversarial_score_mmd(m, u, v, spec, alpha, eps, delta=None, radius=None):
    """Score cluster i with i (alpha + eps) D(u, v).

    Needs D(u, v) < 1 / (alpha n) for the n clusters of m, and eps small enough that the top
    cluster still scores at most 1. When delta is given, its clusters are checked at radius
    (default alpha D(u, v)) and the scores are extended under delta.
    """
    if {u, v} != {m.u, m.v}:
        raise ValueError(f"mapping is for ({m.u!r}, {m.v!r}), not ({u!r}, {v!r})")
    alpha = parse_number(alpha) if not isinstance(alpha, float) else alpha
    eps = parse_number(eps) if not isinstance(eps, float) else eps
    d_uv = spec.distance(u, v)
    n = m.n
    if not d_uv * alpha * n < 1:
        raise ValueError(
            f"D({u}, {v}) = {d_uv} is not below 1 / (alpha n) = {1 / (alpha * n)} for {n} clusters"
        )
    step = (alpha + eps) * d_uv
    if n * step > 1:
        raise ValueError(f"eps = {eps} is too large: cluster {n} would score {n * step} > 1")
    if delta is None:
        delta = cluster_delta(m)
    else:
        _check_clustering(m, delta, alpha * d_uv if radius is None else radius)
    partial = {ctx: label * step for label, ctx in _pair_contexts(m)}
    logger.debug("MMD witness for (%s, %s): %d clusters, step %s", u, v, n, step)
    return lipschitz_extend(partial, delta, 1, spec, name=f"mmd-witness({u},{v})")


def adversarial_score_expected(m, measures, u, v, spec, conditional=True, delta=None, radius=None):
    """Score 1 on clusters where the more often selected individual's measure dominates, else 0.

    measures is the ClusterMeasures of (u, v). The conditional expected-score gap equals
    TV(q2); the unconditional gap equals TV(q1) + |p(u) - p(v)| / 2.
    """
    if {u, v} != {m.u, m.v}:
        raise ValueError(f"mapping is for ({m.u!r}, {m.v!r}), not ({u!r}, {v!r})")
    if conditional:
        q_u, q_v = measures.q2_uv, measures.q2_vu
    else:
        q_u, q_v = measures.q1_uv, measures.q1_vu
    if measures.p_u < measures.p_v:
        q_hi, q_lo = q_v, q_u
    else:
        q_hi, q_lo = q_u, q_v
    if delta is None:
        delta = cluster_delta(m)
    else:
        _check_clustering(m, delta, spec.distance(u, v) if radius is None else radius)
    partial = {
        ctx: Fraction(1) if q_hi[label - 1] >= q_lo[label - 1] else Fraction(0)
        for label, ctx in _pair_contexts(m)
    }
    return lipschitz_extend(partial, delta, 1, spec, name=f"expected-witness({u},{v})")
