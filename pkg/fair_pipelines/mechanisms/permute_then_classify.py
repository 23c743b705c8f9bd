"""PermuteThenClassify: classify individuals in a uniformly random order until k are selected.

Each individual x, visited in permutation order, is added with probability w(x) while fewer than
k have been selected. Once the unvisited individuals are no more than the open slots, all of them
are added. Individuals with weight 0 can therefore still be selected by the fill step.
"""

import logging
from fractions import Fraction

from fair_pipelines.core import CohortDistribution
from fair_pipelines.mechanisms.base import Mechanism
from utility_funcs import mask_to_indices, popcount

logger = logging.getLogger(__name__)

# the exact law tracks (visited, selected) states, 3^|U| of them
EXACT_LIMIT = 10


class PermuteThenClassify(Mechanism):
    def __init__(self, weights, k):
        super().__init__(weights.universe, k)
        self.weights = weights
        self._w = weights.values()

    def _forced(self, visited, selected):
        remaining = self.universe.n - popcount(visited)
        return remaining <= self.k - popcount(selected)

    def exact_distribution(self):
        """Forward dynamic program over (visited set, selected set).

        The next visited individual is uniform over the unvisited ones, so the permutation never
        has to be enumerated.
        """
        n, k = self.universe.n, self.k
        if n > EXACT_LIMIT:
            raise ValueError(
                f"exact PermuteThenClassify law is limited to |U| <= {EXACT_LIMIT}, got {n}; "
                "use the sampler"
            )
        full = self.universe.full_mask
        exact = all(not isinstance(w, float) for w in self._w)
        one = Fraction(1) if exact else 1.0
        frontier = {(0, 0): one}
        law = {}
        for _ in range(n + 1):
            following = {}
            for (visited, selected), p in frontier.items():
                if popcount(selected) == k:
                    law[selected] = law.get(selected, 0) + p
                    continue
                if self._forced(visited, selected):
                    cohort = selected | (full & ~visited)
                    law[cohort] = law.get(cohort, 0) + p
                    continue
                unvisited = mask_to_indices(full & ~visited)
                step = p / len(unvisited)
                for i in unvisited:
                    w = self._w[i]
                    bit = 1 << i
                    if w != 0:
                        key = (visited | bit, selected | bit)
                        following[key] = following.get(key, 0) + step * w
                    if w != 1:
                        key = (visited | bit, selected)
                        following[key] = following.get(key, 0) + step * (1 - w)
            if not following:
                break
            frontier = following
        logger.info("PermuteThenClassify law over %d cohorts (|U|=%d, k=%d)", len(law), n, k)
        return CohortDistribution(self.cohort_set, law)

    def sample(self, rng):
        n, k = self.universe.n, self.k
        selected = 0
        order = rng.permutation(n)
        for position, i in enumerate(order):
            if popcount(selected) == k:
                break
            if n - position <= k - popcount(selected):
                for j in order[position:]:
                    selected |= 1 << int(j)
                break
            if rng.random() < float(self._w[i]):
                selected |= 1 << int(i)
        return selected


def permute_then_classify(weights, k):
    return PermuteThenClassify(weights, k)
