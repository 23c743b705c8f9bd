"""Pipelines that form several cohorts: splitting one selected cohort, and repeating a mechanism.

A split labels each member of the selected cohort with the sub-cohort they join. Downstream
scoring then sees only the sub-cohort, so a split law exposes the same contexts/universe
interface as CohortDistribution and plugs into the distance and policy checks unchanged.
"""

import logging
from fractions import Fraction
from itertools import combinations

from fair_pipelines.core import CohortSet
from fair_pipelines.distances import ScorePMF, merge_atoms, pipeline_distribution, unconditional
from utility_funcs import indices_to_mask, mask_to_indices

logger = logging.getLogger(__name__)


def _labeled_splits(indices, sizes):
    """Every ordered split of indices into parts of the given sizes."""
    if not sizes:
        yield ()
        return
    head, rest = sizes[0], sizes[1:]
    for part in combinations(indices, head):
        remaining = [i for i in indices if i not in part]
        for tail in _labeled_splits(remaining, rest):
            yield (indices_to_mask(part),) + tail


def _stratified_splits(spec, mask, parts):
    """Splits into `parts` equal sub-cohorts, each holding x_i / parts members of group i."""
    per_group = []
    for group in spec.quality_groups:
        members = [spec.index(u) for u in group if mask >> spec.index(u) & 1]
        if len(members) % parts:
            raise ValueError(
                f"{len(members)} selected members of one quality group do not split into {parts}"
            )
        per_group.append(list(_labeled_splits(members, [len(members) // parts] * parts)))

    def combine(g):
        if g == len(per_group):
            yield (0,) * parts
            return
        for head in per_group[g]:
            for tail in combine(g + 1):
                yield tuple(a | b for a, b in zip(head, tail))

    yield from combine(0)


class MultiCohortDistribution(object):
    """Law over labeled sub-cohorts (C_1, ..., C_T) of one selected cohort.

    Parameters
    ----------
    base: CohortDistribution
    splits: dict
        tuple of sub-cohort bitsets -> probability
    """

    def __init__(self, base, splits):
        self.base = base
        self.universe = base.universe
        self.tolerance = base.tolerance
        self.splits = splits
        self._contexts = {}
        self._selection = None

    def items(self):
        return self.splits.items()

    def contexts(self, u):
        """(sub-cohort containing u, probability), aggregated over splits."""
        if u not in self._contexts:
            bit = 1 << self.universe.index(u)
            agg = {}
            for parts, p in self.splits.items():
                for part in parts:
                    if part & bit:
                        agg[part] = agg.get(part, 0) + p
                        break
            self._contexts[u] = tuple(sorted(agg.items()))
        return self._contexts[u]

    def selection_probabilities(self):
        if self._selection is None:
            self._selection = self.base.selection_probabilities()
        return dict(self._selection)

    def selection_probability(self, u):
        return self.selection_probabilities()[u]

    def subcohort_set(self, complete=False):
        """The sub-cohorts that occur, or all cohorts of their common size when complete."""
        masks = sorted({part for parts in self.splits for part in parts})
        if complete:
            sizes = {bin(m).count("1") for m in masks}
            if len(sizes) != 1:
                raise ValueError(f"sub-cohorts have several sizes {sorted(sizes)}")
            return CohortSet.all_of_size(self.universe, sizes.pop())
        return CohortSet.explicit(self.universe, masks)

    @property
    def cohort_set(self):
        return self.subcohort_set()

    def __repr__(self):
        return f"MultiCohortDistribution({len(self.splits)} labeled splits)"


def split_cohort(dist, sizes, stratified=False):
    """Split each selected cohort uniformly at random into sub-cohorts of the given sizes.

    :param sizes: c_1, ..., c_T summing to the cohort size
    :param stratified: split into T equal sub-cohorts that each hold x_i / T members of every
        quality group, uniformly among such splits
    """
    sizes = [int(c) for c in sizes]
    if any(c < 1 for c in sizes):
        raise ValueError(f"sub-cohort sizes must be positive, got {sizes}")
    spec = dist.universe
    if stratified:
        if len(set(sizes)) != 1:
            raise ValueError(f"a stratified split needs equal sub-cohort sizes, got {sizes}")
        if not spec.has_quality_groups:
            raise ValueError("a stratified split needs quality groups")
    splits = {}
    for mask, p in dist.items():
        members = mask_to_indices(mask)
        if sum(sizes) != len(members):
            raise ValueError(
                f"sub-cohort sizes {sizes} sum to {sum(sizes)}, cohort has {len(members)} members"
            )
        if stratified:
            options = list(_stratified_splits(spec, mask, len(sizes)))
        else:
            options = list(_labeled_splits(members, sizes))
        share = p / len(options)
        for parts in options:
            splits[parts] = splits.get(parts, 0) + share
    logger.debug("split law over %d labeled splits", len(splits))
    return MultiCohortDistribution(dist, splits)


class RepeatedPipeline(object):
    """T independent runs of a mechanism, each followed by scoring; the outcome is the sum."""

    def __init__(self, dist, repeats):
        if repeats < 1:
            raise ValueError(f"repeat count must be at least 1, not {repeats}")
        self.base = dist
        self.universe = dist.universe
        self.repeats = int(repeats)

    def single_run(self, f, u):
        return unconditional(pipeline_distribution(self.base, f, u))

    def summed_distribution(self, f, u):
        """Law of the summed unconditional score over the T runs, supported on [0, T]."""
        once = self.single_run(f, u).items()
        total = [(Fraction(0), Fraction(1))]
        for _ in range(self.repeats):
            total = merge_atoms([(a + b, p * q) for a, p in total for b, q in once])
        return ScorePMF(total, role="summed", tolerance=self.base.tolerance)

    def expected_score(self, f, u):
        return self.repeats * self.single_run(f, u).expectation()

    def expected_score_distance(self, f, u, v):
        return abs(self.expected_score(f, u) - self.expected_score(f, v))


def repeat_mechanism(dist, repeats):
    return RepeatedPipeline(dist, repeats)
