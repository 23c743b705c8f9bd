"""The Conditioning Mechanism.

Each round draws S by including every individual independently with probability w(u). Rounds
with |S| < k are discarded; otherwise a uniformly random size-k subset of S is returned.

The exact law conditions on success. For a cohort C,

    A(C) = prod_{c in C} w(c) * E[1 / binom(k + T, k)] / Pr[|S| >= k]

where T counts the selected individuals outside C, a Poisson-binomial variable. Pair diagnostics
follow the same decomposition over U minus {u, v}.
"""

import logging
import math
import warnings
from fractions import Fraction

from scipy.special import comb

from fair_pipelines.core import CohortDistribution
from fair_pipelines.mechanisms.base import Mechanism
from utility_funcs import indices_to_mask, mask_to_indices, popcount

logger = logging.getLogger(__name__)

EXACT_LIMIT = 20
# literal subset enumeration, kept as a cross-check of the closed forms
ENUMERATION_LIMIT = 16
MAX_ROUNDS = 10 ** 6


def poisson_binomial(probabilities, exact=True):
    """pmf of the number of successes among independent trials, index = count."""
    one = Fraction(1) if exact else 1.0
    pmf = [one]
    for p in probabilities:
        nxt = [0 * one] * (len(pmf) + 1)
        for j, mass in enumerate(pmf):
            nxt[j] += mass * (1 - p)
            nxt[j + 1] += mass * p
        pmf = nxt
    return pmf


def alpha3_lower_bound(k):
    """0.5 (1 - e^{-k/36} - e^{-k/54}), the bound behind the alpha_3 constants."""
    return 0.5 * (1 - math.exp(-k / 36) - math.exp(-k / 54))


class ConditioningBounds(object):
    """Constants of the Conditioning Mechanism's guarantees for cohort size k.

    alpha1 bounds the expected number of rounds, alpha2 the Notion 2 factor and alpha3 the
    lower bound on |p(u) - p(v)| / |w(u) - w(v)| when the weights sum to exactly 3k/2.
    """

    def __init__(self, k, alpha1, alpha2, alpha3, eta1=None):
        self.k = k
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.alpha3 = alpha3
        self.eta1 = eta1

    @classmethod
    def for_k(cls, k, eta1=None):
        if k < 2:
            raise ValueError(f"the Conditioning Mechanism's bounds need k >= 2, not {k}")
        alpha1 = 1.6 if k >= 12 else 13
        if k >= 180:
            alpha3 = 0.485
        elif k >= 54:
            alpha3 = 0.2
        else:
            alpha3 = 0
        return cls(k, alpha1, 12, alpha3, eta1)

    @property
    def expected_rounds(self):
        return self.eta1

    def __repr__(self):
        return (
            f"ConditioningBounds(k={self.k}, alpha1={self.alpha1}, alpha2={self.alpha2}, "
            f"alpha3={self.alpha3}, eta1={self.eta1})"
        )


class PairDiagnostics(object):
    """kappa1, kappa2 and eta2 for one pair, plus the closed-form marginals they imply."""

    def __init__(self, u, v, w_u, w_v, eta1, kappa1, kappa2, eta2):
        self.u, self.v = u, v
        self.w_u, self.w_v = w_u, w_v
        self.eta1 = eta1
        self.kappa1 = kappa1
        self.kappa2 = kappa2
        self.eta2 = eta2

    @property
    def p_u(self):
        return self.eta1 * self.w_u * (self.w_v * self.kappa2 + (1 - self.w_v) * self.kappa1)

    @property
    def p_v(self):
        return self.eta1 * self.w_v * (self.w_u * self.kappa2 + (1 - self.w_u) * self.kappa1)

    @property
    def selection_gap(self):
        """|p(u) - p(v)| = eta1 * kappa1 * |w(u) - w(v)|."""
        return self.eta1 * self.kappa1 * abs(self.w_u - self.w_v)


class ConditioningMechanism(Mechanism):
    """
    :param weights: WeightAssignment
    :param k: cohort size, at least 2
    """

    def __init__(self, weights, k):
        super().__init__(weights.universe, k)
        if k < 2:
            raise ValueError(f"the Conditioning Mechanism needs k >= 2, not {k}")
        self.weights = weights
        self._w = weights.values()
        self._exact = all(not isinstance(w, float) for w in self._w)
        total = sum(self._w)
        if total < Fraction(3 * k, 2):
            warnings.warn(
                f"weights sum to {total} < 3k/2 = {Fraction(3 * k, 2)}; "
                "round and fairness bounds are not claimed"
            )
        self._success = None

    def _pb(self, indices):
        return poisson_binomial([self._w[i] for i in indices], self._exact)

    def success_probability(self):
        """Pr[|S| >= k] for one round."""
        if self._success is None:
            pmf = self._pb(range(self.universe.n))
            self._success = sum(pmf[self.k:], 0 * pmf[0])
            if self._success == 0:
                raise ValueError(f"no round can select {self.k} individuals: Pr[|S| >= k] = 0")
        return self._success

    @property
    def eta1(self):
        return 1 / self.success_probability()

    def expected_rounds(self):
        return self.eta1

    def bounds(self):
        return ConditioningBounds.for_k(self.k, self.eta1)

    def exact_distribution(self):
        n, k = self.universe.n, self.k
        if n > EXACT_LIMIT:
            raise ValueError(f"exact Conditioning law is limited to |U| <= {EXACT_LIMIT}, got {n}")
        success = self.success_probability()
        law = {}
        for mask in self.cohort_set:
            members = mask_to_indices(mask)
            weight = 1
            for i in members:
                weight *= self._w[i]
            if weight == 0:
                continue
            rest = [i for i in range(n) if not mask >> i & 1]
            pmf = self._pb(rest)
            tail = sum(p / int(comb(k + t, k, exact=True)) for t, p in enumerate(pmf))
            law[mask] = weight * tail / success
        logger.info("Conditioning law over %d cohorts (|U|=%d, k=%d)", len(law), n, k)
        return CohortDistribution(self.cohort_set, law)

    def closed_form_marginals(self):
        """p(u) = w(u) sum_{j >= k-1} P_{U - u}(j) k / (j + 1) / Pr[|S| >= k]."""
        n, k = self.universe.n, self.k
        success = self.success_probability()
        out = {}
        for i, u in enumerate(self.universe.individuals):
            pmf = self._pb([j for j in range(n) if j != i])
            total = sum(pmf[j] * k / (j + 1) for j in range(k - 1, len(pmf)))
            out[u] = self._w[i] * total / success
        return out

    def enumerated_marginals(self):
        """Marginals by enumerating all 2^|U| first-round sets."""
        n, k = self.universe.n, self.k
        if n > ENUMERATION_LIMIT:
            raise ValueError(f"subset enumeration is limited to |U| <= {ENUMERATION_LIMIT}, got {n}")
        one = Fraction(1) if self._exact else 1.0
        marg = [0 * one] * n
        success = 0 * one
        for subset in range(1 << n):
            size = popcount(subset)
            if size < k:
                continue
            p = one
            for i in range(n):
                p *= self._w[i] if subset >> i & 1 else 1 - self._w[i]
            if p == 0:
                continue
            success += p
            share = p * k / size
            for i in mask_to_indices(subset):
                marg[i] += share
        if success == 0:
            raise ValueError(f"no round can select {k} individuals: Pr[|S| >= k] = 0")
        return {u: marg[i] / success for i, u in enumerate(self.universe.individuals)}

    def pair_diagnostics(self, u, v):
        spec = self.universe
        iu, iv = spec.index(u), spec.index(v)
        if iu == iv:
            raise ValueError("pair diagnostics need two distinct individuals")
        k = self.k
        pmf = self._pb([j for j in range(spec.n) if j not in (iu, iv)])
        zero = 0 * pmf[0]
        kappa1 = sum((pmf[j] * k / (j + 1) for j in range(k - 1, len(pmf))), zero)
        kappa2 = sum((pmf[j] * k / (j + 2) for j in range(max(k - 2, 0), len(pmf))), zero)
        below = pmf[k - 2] if k - 2 < len(pmf) else zero
        at = pmf[k - 1] if k - 1 < len(pmf) else zero
        if at == 0:
            eta2 = float("inf")
        else:
            eta2 = 4 * (1 + max(Fraction(1, k) if self._exact else 1 / k, below / at))
        return PairDiagnostics(u, v, self._w[iu], self._w[iv], self.eta1, kappa1, kappa2, eta2)

    def sample(self, rng):
        n, k = self.universe.n, self.k
        w = [float(x) for x in self._w]
        for _ in range(MAX_ROUNDS):
            chosen = [i for i in range(n) if rng.random() < w[i]]
            if len(chosen) >= k:
                picked = rng.choice(chosen, size=k, replace=False)
                return indices_to_mask(int(i) for i in picked)
        raise RuntimeError(f"no round selected {k} individuals within {MAX_ROUNDS} rounds")


def conditioning_mechanism(weights, k):
    return ConditioningMechanism(weights, k)
