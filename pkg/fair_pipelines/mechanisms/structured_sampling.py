"""Individually fair weights over an explicit, structured cohort set.

The cohort weights come from a linear program with one variable per cohort: they sum to one and
keep every pair's selection probabilities within D(u, v). The program is solved with the weights
unconstrained in sign; any negative weight is then removed by adding its magnitude w* to every
weight and dividing by 1 + |C| w*. Among the feasible weightings the solver maximizes the smallest
weight, which spreads mass over the cohort set and usually leaves nothing to shift.
"""

import logging
import warnings
from collections import namedtuple

from fair_pipelines.core import CohortDistribution, is_individually_fair
from fair_pipelines.lp import solve_or_raise
from fair_pipelines.mechanisms.base import Mechanism
from utility_funcs import approx_leq, is_exact

logger = logging.getLogger(__name__)

PreconditionReport = namedtuple("PreconditionReport", ["count_violations", "partition"])


def count_violations(cohort_set, spec):
    """Pairs where ||C^u| - |C^v|| / |C| exceeds D(u, v)."""
    total = len(cohort_set)
    counts = [len(cohort_set.containing(u)) for u in spec.individuals]
    out = []
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            ratio = abs(counts[i] - counts[j]) / total if total else 0
            d = spec.distance_idx(i, j)
            if not approx_leq(ratio, d):
                out.append((spec.individuals[i], spec.individuals[j], ratio, d))
    return out


def find_partition(cohort_set, spec):
    """A sub-collection of disjoint cohorts covering the universe, or None.

    Exact-cover search branching on the lowest uncovered individual.
    """
    full = spec.full_mask
    covering = {i: [m for m in cohort_set.cohorts() if m >> i & 1] for i in range(spec.n)}

    def search(covered, chosen):
        if covered == full:
            return list(chosen)
        free = full & ~covered
        i = (free & -free).bit_length() - 1
        for mask in covering[i]:
            if mask & covered:
                continue
            chosen.append(mask)
            found = search(covered | mask, chosen)
            if found is not None:
                return found
            chosen.pop()
        return None

    return search(0, [])


def check_preconditions(cohort_set, spec):
    return PreconditionReport(count_violations(cohort_set, spec), find_partition(cohort_set, spec))


StructuredSamplingResult = namedtuple(
    "StructuredSamplingResult", ["weights", "distribution", "shift", "preconditions", "lp"]
)


def shift_and_renormalize(weights):
    """Steps 2-5 of the construction: lift the most negative weight to zero and rescale."""
    lowest = min(weights.values())
    shift = -lowest if lowest < 0 else 0
    if shift == 0:
        return dict(weights), shift
    y = 1 + len(weights) * shift
    return {c: (w + shift) / y for c, w in weights.items()}, shift


class StructuredWeightedSampling(Mechanism):
    """Weighted sampling over an explicit cohort set with LP-derived cohort weights.

    Parameters
    ----------
    cohort_set: CohortSet
        an explicit set of permissible cohorts
    spec: UniverseSpec
    check_preconditions: bool
        raise ValueError naming the violations when the count condition fails or no partition
        exists; when False the violations are only warned about
    solver: str
        "exact", "float" or "auto", passed to the LP layer
    """

    def __init__(self, cohort_set, spec, check_preconditions=True, solver="exact"):
        super().__init__(spec, None)
        self._cohort_set = cohort_set
        self.enforce = check_preconditions
        self.solver = solver
        self.result = None

    @property
    def cohort_set(self):
        return self._cohort_set

    def _preconditions(self):
        report = check_preconditions(self._cohort_set, self.universe)
        problems = []
        if report.count_violations:
            u, v, ratio, d = report.count_violations[0]
            problems.append(
                f"{len(report.count_violations)} pairs break the cohort-count condition, "
                f"e.g. ({u}, {v}): {ratio} > {d}"
            )
        if report.partition is None:
            problems.append("no sub-collection of cohorts partitions the universe")
        if problems:
            message = "; ".join(problems)
            if self.enforce:
                raise ValueError(message)
            warnings.warn(f"fairness is not guaranteed: {message}")
        return report

    def _solve(self):
        spec = self.universe
        cohorts = self._cohort_set.cohorts()
        m = len(cohorts)
        # variables: w_0..w_{m-1}, t
        t = m
        width = m + 1
        A_ub, b_ub, labels = [], [], []
        for i in range(spec.n):
            for j in range(i + 1, spec.n):
                d = spec.distance_idx(i, j)
                if d >= 1:
                    continue
                row = [0] * width
                for c, mask in enumerate(cohorts):
                    row[c] = (mask >> i & 1) - (mask >> j & 1)
                if not any(row):
                    continue
                u, v = spec.individuals[i], spec.individuals[j]
                A_ub.append(row)
                b_ub.append(d)
                labels.append(f"p({u}) - p({v}) <= D({u}, {v})")
                A_ub.append([-a for a in row])
                b_ub.append(d)
                labels.append(f"p({v}) - p({u}) <= D({u}, {v})")
        for c, mask in enumerate(cohorts):
            row = [0] * width
            row[t] = 1
            row[c] = -1
            A_ub.append(row)
            b_ub.append(0)
            labels.append(f"t <= w{spec.members(mask)}")
        A_eq = [[1] * m + [0]]
        labels.append("sum of cohort weights = 1")
        objective = [0] * m + [1]
        logger.info("structured sampling LP: %d cohorts, %d rows", m, len(A_ub) + 1)
        return solve_or_raise(
            objective,
            A_ub,
            b_ub,
            A_eq,
            [1],
            free=range(width),
            maximize=True,
            solver=self.solver,
            labels=labels,
        )

    def run(self):
        if self.result is None:
            report = self._preconditions()
            lp = self._solve()
            cohorts = self._cohort_set.cohorts()
            raw = {mask: lp.x[c] for c, mask in enumerate(cohorts)}
            weights, shift = shift_and_renormalize(raw)
            if shift:
                logger.info("shifted cohort weights by %s", shift)
            law = {c: w for c, w in weights.items() if w != 0}
            dist = CohortDistribution(self._cohort_set, law)
            ok, worst = is_individually_fair(dist, self.universe)
            if not ok:
                warnings.warn(f"structured sampling output is not individually fair at {worst}")
            self.result = StructuredSamplingResult(weights, dist, shift, report, lp)
        return self.result

    def exact_distribution(self):
        return self.run().distribution

    def sample(self, rng):
        return self.distribution().sample(rng)

    @property
    def exact(self):
        return all(is_exact(w) for w in self.run().weights.values())


def structured_weighted_sampling(cohort_set, spec, check_preconditions=True, solver="exact"):
    """Solve for fair cohort weights; returns a StructuredSamplingResult."""
    return StructuredWeightedSampling(cohort_set, spec, check_preconditions, solver).run()
