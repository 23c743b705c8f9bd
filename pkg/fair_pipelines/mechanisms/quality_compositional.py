import logging
import warnings
from fractions import Fraction
from itertools import product

import numpy as np

from fair_pipelines.core import (
    CohortDistribution,
    CohortSet,
    QualityProfile,
    UniverseSpec,
    is_quality_symmetric,
)
from fair_pipelines.mechanisms.base import Mechanism
from utility_funcs import approx_leq, parse_number

logger = logging.getLogger(__name__)


def group_universe(spec, i):
    """The quality group q_i as a universe of its own, under the restricted metric D^i."""
    group = spec.quality_groups[i]
    metric = [[spec.distance(a, b) for b in group] for a in group]
    return UniverseSpec(group, metric)


def uniform_subgroup_mechanism(sub_universe, x):
    return CohortDistribution.uniform(CohortSet.all_of_size(sub_universe, x))


def profile_constraint_violations(spec, profiles, beta):
    """Profiles breaking |x_i/|q_i| - x_j/|q_j|| <= (1 - 2 beta) D(i, j)."""
    sizes = [len(g) for g in spec.quality_groups]
    out = []
    for profile in profiles:
        for i in range(len(sizes)):
            for j in range(i + 1, len(sizes)):
                gap = abs(Fraction(profile[i], sizes[i]) - Fraction(profile[j], sizes[j]))
                bound = (1 - 2 * beta) * spec.group_distance(i, j)
                if not approx_leq(gap, bound):
                    out.append((profile, i, j, gap, bound))
    return out


class QualityCompositional(Mechanism):
    """Draw a quality profile, then pick x_i members of each group q_i independently.

    Parameters
    ----------
    spec: UniverseSpec
        with quality groups
    profiles: dict
        quality profile (tuple of counts) -> probability
    subgroup_mechanisms: callable, optional
        (group universe, x_i) -> CohortDistribution or Mechanism selecting x_i members of the
        group; uniform selection when omitted
    cohort_set: CohortSet, optional
        must be quality-symmetric; all cohorts of the profiles' common size when omitted
    beta: number, optional
        clustering parameter used for the profile constraint; the universe's declared beta
        when omitted
    """

    def __init__(self, spec, profiles, subgroup_mechanisms=None, cohort_set=None, beta=None):
        if not spec.has_quality_groups:
            raise ValueError("a quality compositional mechanism needs quality groups")
        self.profiles = {}
        for profile, p in dict(profiles).items():
            profile = QualityProfile(profile)
            profile.check(spec)
            self.profiles[profile] = self.profiles.get(profile, 0) + parse_number(p)
        if not self.profiles:
            raise ValueError("profile distribution is empty")
        sizes = {profile.total for profile in self.profiles}
        if len(sizes) != 1:
            raise ValueError(f"profiles select different cohort sizes {sorted(sizes)}")
        super().__init__(spec, sizes.pop())
        self._cohort_set = cohort_set
        if cohort_set is not None:
            ok, missing = is_quality_symmetric(cohort_set, spec)
            if not ok:
                cohort, removed, added = missing
                raise ValueError(
                    f"cohort set is not quality-symmetric: swapping {removed} for {added} in "
                    f"{cohort} leaves the set"
                )
            realized = {spec.quality_profile(mask) for mask in cohort_set.cohorts()}
            outside = [tuple(p) for p in self.profiles if p not in realized]
            if outside:
                raise ValueError(f"profiles {outside} are not realized by any permissible cohort")
        self.subgroup_mechanisms = subgroup_mechanisms or uniform_subgroup_mechanism
        self.beta = beta if beta is not None else (spec.beta if spec.beta is not None else 0)
        violations = profile_constraint_violations(spec, self.profiles, self.beta)
        if violations:
            profile, i, j, gap, bound = violations[0]
            warnings.warn(
                f"profile {tuple(profile)} breaks the proportion constraint between groups {i} "
                f"and {j} ({gap} > {bound}); fairness is not guaranteed"
            )
        self._subgroup_laws = {}

    @property
    def cohort_set(self):
        if self._cohort_set is not None:
            return self._cohort_set
        return CohortSet.all_of_size(self.universe, self.k)

    def subgroup_law(self, i, x):
        """[(full-universe mask, probability)] for x members of group i."""
        if (i, x) not in self._subgroup_laws:
            if x == 0:
                law = [(0, Fraction(1))]
            else:
                sub = group_universe(self.universe, i)
                dist = self.subgroup_mechanisms(sub, x)
                if isinstance(dist, Mechanism):
                    dist = dist.distribution()
                law = [(self.universe.mask(sub.members(m)), p) for m, p in dist.items()]
            self._subgroup_laws[(i, x)] = law
        return self._subgroup_laws[(i, x)]

    def exact_distribution(self):
        law = {}
        for profile, weight in self.profiles.items():
            parts = [self.subgroup_law(i, x) for i, x in enumerate(profile)]
            for combo in product(*parts):
                mask = 0
                p = weight
                for part_mask, part_p in combo:
                    mask |= part_mask
                    p *= part_p
                law[mask] = law.get(mask, 0) + p
        return CohortDistribution(self.cohort_set, law)

    def sample(self, rng):
        profiles = list(self.profiles)
        probs = np.array([float(self.profiles[p]) for p in profiles])
        profile = profiles[rng.choice(len(profiles), p=probs / probs.sum())]
        mask = 0
        for i, x in enumerate(profile):
            law = self.subgroup_law(i, x)
            weights = np.array([float(p) for _, p in law])
            mask |= law[rng.choice(len(law), p=weights / weights.sum())][0]
        return mask


def quality_compositional(spec, profiles, subgroup_mechanisms=None, cohort_set=None, beta=None):
    return QualityCompositional(spec, profiles, subgroup_mechanisms, cohort_set, beta)


def canonical_profile(spec, k):
    """Counts proportional to the group sizes, when k splits that way exactly."""
    n = spec.n
    counts = []
    for group in spec.quality_groups:
        share = Fraction(k * len(group), n)
        if share.denominator != 1:
            raise ValueError(f"k={k} does not split proportionally over groups of {n}")
        counts.append(int(share))
    return QualityProfile(counts)
