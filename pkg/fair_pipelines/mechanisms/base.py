import logging
from itertools import combinations

import numpy as np

from fair_pipelines.core import CohortSet
from utility_funcs import approx_leq, parse_number

logger = logging.getLogger(__name__)


class WeightAssignment(object):
    """Per-individual weights w(u) in [0, 1], the output of an individually fair classifier.

    Parameters
    ----------
    universe: UniverseSpec
    weights: dict or list
        w(u) per individual, in universe order when given as a list
    lipschitz: number, optional
        declared factor lambda with |w(u) - w(v)| <= lambda * D(u, v); checked on construction
    """

    def __init__(self, universe, weights, lipschitz=None):
        self.universe = universe
        if isinstance(weights, dict):
            missing = [u for u in universe.individuals if u not in weights]
            if missing:
                raise ValueError(f"weights missing for {missing}")
            values = [weights[u] for u in universe.individuals]
        else:
            values = list(weights)
            if len(values) != universe.n:
                raise ValueError(f"expected {universe.n} weights, got {len(values)}")
        self.weights = {}
        for u, w in zip(universe.individuals, values):
            if not isinstance(w, float):
                w = parse_number(w)
            if w < 0 or w > 1:
                raise ValueError(f"weight of {u!r} is {w}, outside [0, 1]")
            self.weights[u] = w
        self.lipschitz = lipschitz
        if lipschitz is not None:
            ok, witness = self.check_lipschitz(lipschitz)
            if not ok:
                u, v, gap, bound = witness
                raise ValueError(
                    f"weights are not {lipschitz}-Lipschitz: |w({u}) - w({v})| = {gap} > {bound}"
                )

    def __getitem__(self, u):
        return self.weights[u]

    def values(self):
        return [self.weights[u] for u in self.universe.individuals]

    @property
    def total(self):
        return sum(self.values())

    def check_lipschitz(self, lipschitz=1):
        """Returns (ok, (u, v, |w(u) - w(v)|, lipschitz * D(u, v))) for the first violation."""
        for u, v in combinations(self.universe.individuals, 2):
            gap = abs(self.weights[u] - self.weights[v])
            bound = lipschitz * self.universe.distance(u, v)
            if not approx_leq(gap, bound):
                return False, (u, v, gap, bound)
        return True, None


class Mechanism(object):
    """A cohort selection mechanism: an exact law at desk scale plus a seeded sampler."""

    def __init__(self, universe, k):
        self.universe = universe
        if k is not None and not 1 <= k <= universe.n:
            raise ValueError(f"cohort size k={k} must be between 1 and |U|={universe.n}")
        self.k = k
        self._distribution = None

    @property
    def cohort_set(self):
        return CohortSet.all_of_size(self.universe, self.k)

    def distribution(self):
        """The exact law, computed once."""
        if self._distribution is None:
            self._distribution = self.exact_distribution()
        return self._distribution

    def exact_distribution(self):
        raise NotImplementedError

    def sample(self, rng):
        """One cohort bitset."""
        raise NotImplementedError

    def sample_many(self, n, seed=None):
        rng = np.random.default_rng(seed)
        return [self.sample(rng) for _ in range(n)]

    def empirical_frequencies(self, n, seed=None):
        counts = {}
        for mask in self.sample_many(n, seed):
            counts[mask] = counts.get(mask, 0) + 1
        return {mask: c / n for mask, c in counts.items()}


class ExplicitMechanism(Mechanism):
    """A mechanism given directly by its law."""

    def __init__(self, distribution):
        super().__init__(distribution.universe, distribution.cohort_set.size)
        self._given = distribution

    @property
    def cohort_set(self):
        return self._given.cohort_set

    def exact_distribution(self):
        return self._given

    def sample(self, rng):
        return self._given.sample(rng)


def _ordering_values(dist, ordering):
    if ordering is None:
        return dist.selection_probabilities()
    if isinstance(ordering, WeightAssignment):
        return dict(ordering.weights)
    return dict(ordering)


def is_monotonic(dist, ordering=None):
    """Check that ordering(u) <= ordering(v) implies A(C' + u) <= A(C' + v) for every C'.

    :param ordering: None for the selection probabilities, or weights per individual
    :return: (ok, (u, v, C')) with the first violating pair and shared cohort part
    """
    cohort_set = dist.cohort_set
    if not cohort_set.is_complete:
        raise ValueError("monotonicity is defined over all cohorts of one size")
    spec = dist.universe
    k = cohort_set.size
    order = _ordering_values(dist, ordering)
    tol = dist.tolerance
    for u in spec.individuals:
        for v in spec.individuals:
            if u == v or not approx_leq(order[u], order[v], tol):
                continue
            bit_u, bit_v = 1 << spec.index(u), 1 << spec.index(v)
            rest = [i for i in range(spec.n) if i not in (spec.index(u), spec.index(v))]
            for combo in combinations(rest, k - 1):
                shared = 0
                for i in combo:
                    shared |= 1 << i
                if not approx_leq(
                    dist.probability(shared | bit_u), dist.probability(shared | bit_v), tol
                ):
                    return False, (u, v, spec.members(shared))
    return True, None
