"""Policy distances over cohort contexts, per-pair mappings and the alpha-Notion checks.

A cohort context is a pair (cohort, individual) with the individual a member of the cohort.
Contexts are passed around as (bitset, id) tuples.
"""

import logging
import warnings
from collections import namedtuple
from fractions import Fraction
from itertools import combinations

from fair_pipelines.core import is_quality_symmetric
from utility_funcs import approx_equal, approx_leq, is_exact

logger = logging.getLogger(__name__)

POLICY_KINDS = ("interchangeability", "quality", "family", "table")
MAPPING_KINDS = ("swapping", "quality", "single", "coarsest")


class NotClusterableError(ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


def _context(spec, ctx):
    cohort, u = ctx
    mask = spec.as_mask(cohort)
    if not mask >> spec.index(u) & 1:
        raise ValueError(f"{u!r} is not a member of cohort {spec.members(mask)}")
    return mask, u


def delta_int(pair1, pair2, spec):
    """D(u, v) for the same cohort or the cohort with u swapped out for v, else 1."""
    (c1, u), (c2, v) = _context(spec, pair1), _context(spec, pair2)
    if c1 == c2:
        return spec.distance(u, v)
    swapped = (c1 & ~(1 << spec.index(u))) | (1 << spec.index(v))
    if swapped == c2:
        return spec.distance(u, v)
    return Fraction(1)


def delta_quality(pair1, pair2, spec):
    """0 within a group, D(i, j) across groups, for equal quality profiles; 1 otherwise."""
    if not spec.has_quality_groups:
        raise ValueError("delta_quality needs quality groups")
    (c1, u), (c2, v) = _context(spec, pair1), _context(spec, pair2)
    if spec.quality_profile(c1) != spec.quality_profile(c2):
        return Fraction(1)
    i, j = spec.group_of(u), spec.group_of(v)
    if i == j:
        return Fraction(0)
    return spec.group_distance(i, j)


class PolicyDistance(object):
    """delta over pairs of cohort contexts, optionally scaled by a constant.

    Parameters
    ----------
    kind: str
        interchangeability, quality, family or table
    spec: UniverseSpec
    family: list, optional
        scoring functions for kind="family"
    table: dict, optional
        {(context, context): value} for kind="table"; missing pairs are 1
    scale: number
        multiplies every value; used for the (1/2 alpha) delta variants
    """

    def __init__(self, kind, spec, family=None, table=None, scale=1):
        if kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {', '.join(POLICY_KINDS)}, not {kind}")
        self.kind = kind
        self.spec = spec
        self.family = family
        self.scale = scale
        self._table = None
        if kind == "family":
            if not family:
                raise ValueError("delta_from_family needs a non-empty family")
        elif kind == "quality" and not spec.has_quality_groups:
            raise ValueError("delta_quality needs quality groups")
        elif kind == "table":
            self._table = {}
            for (x, y), value in (table or {}).items():
                x, y = _context(spec, x), _context(spec, y)
                self._table[(x, y)] = value
                self._table[(y, x)] = value

    def scaled(self, c):
        out = PolicyDistance.__new__(PolicyDistance)
        out.__dict__.update(self.__dict__)
        out.scale = self.scale * c
        return out

    def base(self, x, y):
        if self.kind == "interchangeability":
            return delta_int(x, y, self.spec)
        if self.kind == "quality":
            return delta_quality(x, y, self.spec)
        x, y = _context(self.spec, x), _context(self.spec, y)
        if self.kind == "table":
            if x == y:
                return Fraction(0)
            return self._table.get((x, y), Fraction(1))
        members_x = frozenset(self.spec.members(x[0]))
        members_y = frozenset(self.spec.members(y[0]))
        return max(abs(f(members_x, x[1]) - f(members_y, y[1])) for f in self._members())

    def _members(self):
        for f in self.family:
            components = getattr(f, "components", None)
            if components is None:
                yield f
            else:
                for _, component in components():
                    yield component

    def __call__(self, x, y):
        return self.scale * self.base(x, y)

    def __repr__(self):
        return f"PolicyDistance({self.kind}, scale={self.scale})"


def delta_from_family(family, spec):
    """delta^F((C1, u), (C2, v)) = sup over f in F of |f(C1, u) - f(C2, v)|."""
    return PolicyDistance("family", spec, family=list(family))


class PairMapping(object):
    """Cluster labels M_{u->v} on C_u and M_{v->u} on C_v.

    Labels run 1..n and are canonical: clusters are numbered by their smallest cohort bitset.
    """

    def __init__(self, u, v, clusters):
        self.u = u
        self.v = v
        ordered = []
        for cluster in clusters:
            cluster = sorted(set(cluster), key=lambda ctx: (ctx[0], ctx[1] != u))
            if not cluster:
                continue
            for _, x in cluster:
                if x not in (u, v):
                    raise ValueError(f"context for {x!r} in the mapping of ({u!r}, {v!r})")
            ordered.append(cluster)
        ordered.sort(key=lambda cl: min((m, x != u) for m, x in cl))
        self.labels_u = {}
        self.labels_v = {}
        for label, cluster in enumerate(ordered, start=1):
            for mask, x in cluster:
                labels = self.labels_u if x == u else self.labels_v
                if mask in labels:
                    raise ValueError(f"context ({mask}, {x!r}) is in two clusters")
                labels[mask] = label
        self._clusters = tuple(tuple(cl) for cl in ordered)

    @classmethod
    def from_clusters(cls, spec, u, v, clusters):
        """Build from clusters given as [(cohort ids or bitset, individual), ...]."""
        return cls(u, v, [[_context(spec, ctx) for ctx in cluster] for cluster in clusters])

    @property
    def n(self):
        return len(self._clusters)

    def clusters(self):
        return self._clusters

    def label(self, mask, x):
        labels = self.labels_u if x == self.u else self.labels_v
        try:
            return labels[mask]
        except KeyError:
            raise ValueError(f"mapping of ({self.u!r}, {self.v!r}) has no label for ({mask}, {x!r})") from None

    def check_covers(self, cohort_set):
        for x, labels in ((self.u, self.labels_u), (self.v, self.labels_v)):
            for mask in cohort_set.containing(x):
                if mask not in labels:
                    raise ValueError(f"cohort {cohort_set.members(mask)} of {x!r} has no cluster")

    def to_dict(self, spec):
        return {
            "pair": [self.u, self.v],
            "clusters": [[[list(spec.members(m)), x] for m, x in cl] for cl in self._clusters],
        }

    def __repr__(self):
        return f"PairMapping({self.u!r}, {self.v!r}, n={self.n})"


def swapping_mapping(cohort_set, u, v):
    """Pair (C, u) with (C, v) when v is in C, else with (C - u + v, v)."""
    spec = cohort_set.universe
    bit_u, bit_v = 1 << spec.index(u), 1 << spec.index(v)
    clusters = []
    for mask in cohort_set.containing(u):
        if mask & bit_v:
            clusters.append([(mask, u), (mask, v)])
            continue
        swapped = (mask & ~bit_u) | bit_v
        if swapped not in cohort_set:
            raise ValueError(
                f"cohort set is not closed under swapping {u!r} for {v!r}:"
                f" {spec.members(mask)} has no counterpart"
            )
        clusters.append([(mask, u), (swapped, v)])
    for mask in cohort_set.containing(v):
        if not mask & bit_u and (mask & ~bit_v) | bit_u not in cohort_set:
            raise ValueError(
                f"cohort set is not closed under swapping {v!r} for {u!r}:"
                f" {spec.members(mask)} has no counterpart"
            )
    return PairMapping(u, v, clusters)


def quality_mapping(spec, cohort_set, u, v):
    """One cluster per quality profile among the contexts of u and v."""
    ok, missing = is_quality_symmetric(cohort_set, spec)
    if not ok:
        cohort, out, into = missing
        raise ValueError(
            f"cohort set is not quality-symmetric: swapping {out!r} for {into!r} in"
            f" {list(cohort)} leaves the set"
        )
    by_profile = {}
    for x in (u, v):
        for mask in cohort_set.containing(x):
            by_profile.setdefault(spec.quality_profile(mask), []).append((mask, x))
    return PairMapping(u, v, by_profile.values())


def single_cluster_mapping(cohort_set, u, v):
    contexts = [(m, u) for m in cohort_set.containing(u)] + [(m, v) for m in cohort_set.containing(v)]
    return PairMapping(u, v, [contexts])


class _UnionFind(object):
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def coarsest_mapping(delta, spec, cohort_set, u, v, alpha):
    """The partition induced by delta when delta / alpha is a (D(u, v), 1/alpha)-metric.

    Contexts within alpha * D(u, v) of each other are joined; the result is accepted only if
    every cluster has delta-diameter at most alpha * D(u, v) and every cross-cluster pair is at
    delta >= 1. Otherwise NotClusterableError carries the violating context pair.
    """
    d_uv = spec.distance(u, v)
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, not {alpha}")
    if not d_uv < 1 / alpha:
        raise NotClusterableError(
            f"D({u},{v}) = {d_uv} is not below 1/alpha = {1 / Fraction(alpha)}", (u, v)
        )
    contexts = [(m, u) for m in cohort_set.containing(u)] + [(m, v) for m in cohort_set.containing(v)]
    radius = alpha * d_uv
    dsu = _UnionFind(len(contexts))
    values = {}
    for i, j in combinations(range(len(contexts)), 2):
        value = delta(contexts[i], contexts[j])
        values[i, j] = value
        if approx_leq(value, radius):
            dsu.union(i, j)
    for (i, j), value in values.items():
        same = dsu.find(i) == dsu.find(j)
        if same and not approx_leq(value, radius):
            raise NotClusterableError(
                f"contexts {_describe(spec, contexts[i])} and {_describe(spec, contexts[j])} are"
                f" chained into one cluster at delta = {value} > {radius}",
                (contexts[i], contexts[j], value),
            )
        if not same and not approx_leq(1, value):
            raise NotClusterableError(
                f"contexts {_describe(spec, contexts[i])} and {_describe(spec, contexts[j])} sit"
                f" in different clusters at delta = {value} < 1",
                (contexts[i], contexts[j], value),
            )
    groups = {}
    for i, ctx in enumerate(contexts):
        groups.setdefault(dsu.find(i), []).append(ctx)
    return PairMapping(u, v, groups.values())


def _describe(spec, ctx):
    return f"({list(spec.members(ctx[0]))}, {ctx[1]})"


def mapping_respects(m, delta, spec, scale=1):
    """Every intra-cluster pair satisfies scale * delta <= D(u, v).

    Returns (ok, witness) with witness (context, context, value) for the first violation.
    """
    d_uv = spec.distance(m.u, m.v)
    for cluster in m.clusters():
        for x, y in combinations(cluster, 2):
            value = scale * delta(x, y)
            if not approx_leq(value, d_uv):
                return False, (x, y, value)
    return True, None


class ClusterMeasures(object):
    """q1 (unconditional) and q2 (conditional) cluster measures of one pair."""

    def __init__(self, q1_uv, q1_vu, p_u, p_v):
        self.q1_uv = tuple(q1_uv)
        self.q1_vu = tuple(q1_vu)
        self.p_u = p_u
        self.p_v = p_v

    @staticmethod
    def _normalize(q, p, who):
        if p == 0 or (not is_exact(p) and abs(p) < 1e-15):
            raise ValueError(f"q2 is undefined: {who} is never selected")
        return tuple(x / p for x in q)

    @property
    def q2_uv(self):
        return self._normalize(self.q1_uv, self.p_u, "u")

    @property
    def q2_vu(self):
        return self._normalize(self.q1_vu, self.p_v, "v")

    def tv1(self):
        return measure_tv(self.q1_uv, self.q1_vu)

    def tv2(self):
        return measure_tv(self.q2_uv, self.q2_vu)


def measure_tv(q1, q2):
    return sum((abs(a - b) for a, b in zip(q1, q2)), Fraction(0)) / 2


def cluster_measures(dist, m, u, v):
    """q1_{u,v}(i) = sum of A(C) over C in C_u labeled i, and likewise for v."""
    if (u, v) != (m.u, m.v):
        if (v, u) == (m.u, m.v):
            measures = cluster_measures(dist, m, v, u)
            return ClusterMeasures(measures.q1_vu, measures.q1_uv, measures.p_v, measures.p_u)
        raise ValueError(f"mapping is for ({m.u!r}, {m.v!r}), not ({u!r}, {v!r})")
    q_u = [Fraction(0)] * m.n
    q_v = [Fraction(0)] * m.n
    for x, q in ((u, q_u), (v, q_v)):
        for mask, p in dist.contexts(x):
            q[m.label(mask, x) - 1] += p
    p = dist.selection_probabilities()
    return ClusterMeasures(q_u, q_v, p[u], p[v])


NotionCheck = namedtuple("NotionCheck", ["satisfied", "tv", "worst", "skipped"])


def _mapping_for(mappings, u, v):
    if callable(mappings):
        return mappings(u, v)
    if (u, v) in mappings:
        return mappings[(u, v)]
    if (v, u) in mappings:
        return mappings[(v, u)]
    raise ValueError(f"no mapping supplied for ({u!r}, {v!r})")


def _check_notion(dist, mappings, spec, alpha, slack, conditional):
    tvs = {}
    skipped = []
    satisfied = True
    worst = None
    worst_ratio = -1
    p = dist.selection_probabilities()
    for u, v in combinations(spec.individuals, 2):
        d_uv = spec.distance(u, v)
        if not d_uv < 1:
            continue
        if conditional and (p[u] == 0 or p[v] == 0 or (not is_exact(p[u]) and min(p[u], p[v]) < 1e-15)):
            warnings.warn(
                f"skipping ({u}, {v}) in the Notion 2 check: conditional measure undefined",
                RuntimeWarning,
            )
            skipped.append((u, v))
            continue
        measures = cluster_measures(dist, _mapping_for(mappings, u, v), u, v)
        tv = measures.tv2() if conditional else measures.tv1()
        if approx_equal(tv, 0, dist.tolerance):
            tv = 0 if is_exact(tv) else 0.0
        tvs[(u, v)] = tv
        bound = (alpha - slack) * d_uv
        if not approx_leq(tv, bound, dist.tolerance):
            satisfied = False
        if d_uv == 0:
            ratio = 0 if tv == 0 else float("inf")
        else:
            ratio = tv / d_uv
        if ratio > worst_ratio:
            worst_ratio = ratio
            worst = (u, v, tv, bound)
    return NotionCheck(satisfied, tvs, worst, skipped)


def check_notion1(dist, mappings, spec, alpha):
    """TV(q1_{u,v}, q1_{v,u}) <= (alpha - 0.5) D(u, v) for every pair with D(u, v) < 1.

    :param mappings: {(u, v): PairMapping} or a callable (u, v) -> PairMapping
    """
    if alpha < Fraction(1, 2):
        raise ValueError(f"Notion 1 needs alpha >= 0.5, not {alpha}")
    return _check_notion(dist, mappings, spec, alpha, Fraction(1, 2), conditional=False)


def check_notion2(dist, mappings, spec, alpha):
    """TV(q2_{u,v}, q2_{v,u}) <= alpha D(u, v) for every pair with D(u, v) < 1."""
    if alpha < 0:
        raise ValueError(f"Notion 2 needs alpha >= 0, not {alpha}")
    return _check_notion(dist, mappings, spec, alpha, 0, conditional=True)


def build_mappings(kind, cohort_set, spec, delta=None, alpha=None):
    """A (u, v) -> PairMapping callable for one of the canonical mapping kinds."""
    if kind == "swapping":

        def mapping(u, v):
            return swapping_mapping(cohort_set, u, v)

    elif kind == "quality":

        def mapping(u, v):
            return quality_mapping(spec, cohort_set, u, v)

    elif kind == "single":

        def mapping(u, v):
            return single_cluster_mapping(cohort_set, u, v)

    elif kind == "coarsest":
        if delta is None or alpha is None:
            raise ValueError("coarsest mappings need a policy distance and alpha")

        def mapping(u, v):
            return coarsest_mapping(delta, spec, cohort_set, u, v, alpha)

    else:
        raise ValueError(f"mapping must be one of {', '.join(MAPPING_KINDS)}, not {kind}")

    return mapping
