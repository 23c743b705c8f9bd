import logging
import math
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy.special import comb

from fair_pipelines.core import CohortDistribution, UniverseSpec
from fair_pipelines.mechanisms.base import Mechanism, WeightAssignment
from utility_funcs import indices_to_mask, mask_to_indices

logger = logging.getLogger(__name__)


class WeightedSampling(Mechanism):
    """Sample a size-k cohort with probability proportional to the sum of its members' weights."""

    def __init__(self, weights, k):
        super().__init__(weights.universe, k)
        self.weights = weights
        self._w = weights.values()
        self.total = sum(self._w)
        if self.total <= 0:
            raise ValueError("weighted sampling needs at least one positive weight")

    def _normalizer(self):
        count = int(comb(self.universe.n - 1, self.k - 1, exact=True))
        return self.total * count

    def exact_distribution(self):
        norm = self._normalizer()
        law = {}
        for mask in self.cohort_set:
            law[mask] = sum(self._w[i] for i in mask_to_indices(mask)) / norm
        return CohortDistribution(self.cohort_set, law)

    def closed_form_probability(self, u):
        """p(x) = (w(x)/S)(|U|-k)/(|U|-1) + (k-1)/(|U|-1)."""
        return closed_form_probability(self.weights[u], self.total, self.universe.n, self.k)

    def sample(self, rng):
        # a w-weighted anchor plus k-1 uniform others gives A(C) proportional to w(C)
        n = self.universe.n
        probs = np.array([float(w) for w in self._w])
        anchor = int(rng.choice(n, p=probs / probs.sum()))
        others = [i for i in range(n) if i != anchor]
        rest = rng.choice(others, size=self.k - 1, replace=False) if self.k > 1 else []
        return indices_to_mask([anchor] + [int(i) for i in rest])


def weighted_sampling(weights, k):
    return WeightedSampling(weights, k)


def closed_form_probability(w, total, n, k):
    if n == 1:
        return w / total
    if isinstance(w, float) or isinstance(total, float):
        return (w / total) * (n - k) / (n - 1) + (k - 1) / (n - 1)
    return Fraction(w) / total * Fraction(n - k, n - 1) + Fraction(k - 1, n - 1)


def swap_conditional_tv(weights, k, u, v):
    """Conditional total variation under the swapping mapping for the pair (u, v).

    Sums cluster by cluster without building the cohort law: clusters pair C' + u with C' + v
    for C' avoiding both, and a cohort holding both individuals is its own cluster.
    """
    spec = weights.universe
    w = weights.values()
    n = spec.n
    iu, iv = spec.index(u), spec.index(v)
    total = sum(w)
    norm = total * int(comb(n - 1, k - 1, exact=True))
    p_u = closed_form_probability(w[iu], total, n, k)
    p_v = closed_form_probability(w[iv], total, n, k)
    if p_u == 0 or p_v == 0:
        raise ValueError("conditional distributions need positive selection probabilities")
    rest = [i for i in range(n) if i not in (iu, iv)]
    tv = 0
    for combo in combinations(rest, k - 1):
        shared = sum(w[i] for i in combo)
        tv += abs((shared + w[iu]) / (norm * p_u) - (shared + w[iv]) / (norm * p_v))
    if k >= 2:
        for combo in combinations(rest, k - 2):
            mass = (sum(w[i] for i in combo) + w[iu] + w[iv]) / norm
            tv += abs(mass / p_u - mass / p_v)
    return tv / 2


class WeightedSamplingCounterexample(object):
    """The construction on which weighted sampling fails Notion 2 by a factor growing in |U|.

    Attributes
    ----------
    weights: WeightAssignment
        total weight 1, w(y) = 0.5, w(u) = 0 and w(v) = (k ln k - (k - 1)) / (|U| - k)
    pair: tuple
        (u, v)
    """

    def __init__(self, weights, k, u, v, y):
        self.weights = weights
        self.universe = weights.universe
        self.k = k
        self.pair = (u, v)
        self.anchor = y

    @property
    def selection_gap(self):
        u, v = self.pair
        total = self.weights.total
        n = self.universe.n
        return abs(
            closed_form_probability(self.weights[u], total, n, self.k)
            - closed_form_probability(self.weights[v], total, n, self.k)
        )

    def conditional_tv(self):
        return swap_conditional_tv(self.weights, self.k, *self.pair)

    def growth_ratio(self):
        """TV(q2) / D(u, v); no constant bounds it as |U| grows."""
        return self.conditional_tv() / self.selection_gap


def weighted_sampling_counterexample(n, k=3):
    if k < 2 or n < k + 3:
        raise ValueError(f"the construction needs k >= 2 and |U| >= k + 3, got |U|={n}, k={k}")
    w_v = (k * math.log(k) - (k - 1)) / (n - k)
    if not 0 <= w_v <= 0.5:
        raise ValueError(f"|U|={n} is too small for k={k}: w(v) would be {w_v}")
    filler = (1 - 0.5 - w_v) / (n - 3)
    ids = ["u", "v", "y"] + [f"x{i}" for i in range(n - 3)]
    values = [0.0, w_v, 0.5] + [filler] * (n - 3)
    # the tightest metric making weighted sampling individually fair: D = |p(a) - p(b)|
    probs = [closed_form_probability(w, 1.0, n, k) for w in values]
    metric = [[abs(a - b) for b in probs] for a in probs]
    spec = UniverseSpec(ids, metric)
    weights = WeightAssignment(spec, values)
    logger.debug("counterexample weights: w(v)=%s, filler=%s", w_v, filler)
    return WeightedSamplingCounterexample(weights, k, "u", "v", "y")
