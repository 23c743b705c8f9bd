import math
import unittest
import warnings
from fractions import Fraction
from itertools import combinations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fair_pipelines.audit import (
    MEASURES,
    audit_robustness,
    measure_distance,
    minimize_witness,
    monte_carlo_estimate,
    reevaluate_witness,
)
from fair_pipelines.core import CohortDistribution, CohortSet, UniverseSpec, is_individually_fair
from fair_pipelines.distances import pipeline_distribution
from fair_pipelines.mechanisms import WeightAssignment, WeightedSampling
from fair_pipelines.policies import (
    PolicyDistance,
    build_mappings,
    check_notion1,
    check_notion2,
    delta_from_family,
    mapping_respects,
)
from fair_pipelines.scoring import ScoringFunction
from fair_pipelines.scoring.catalog import pathological_family

QUALIFICATIONS = {"a": "0.9", "b": "0.8", "c": "0.6", "d": "0.3", "e": "0.2"}


def qualification_score(spec):
    return ScoringFunction(lambda cohort, u: spec.qualification(u), name="qualification")


def weighted_setup():
    spec = UniverseSpec.from_qualifications(QUALIFICATIONS)
    mechanism = WeightedSampling(WeightAssignment(spec, QUALIFICATIONS, lipschitz=1), 2)
    return spec, mechanism


class TestImpossibility(unittest.TestCase):
    def setUp(self):
        self.spec, cohort_set, self.f = pathological_family()
        self.dist = CohortDistribution.uniform(cohort_set)

    def test_distances_at_zero_metric_fail(self):
        report = audit_robustness(self.dist, family=[self.f])
        self.assertEqual(len(report.rows), 3)
        row = report.rows[0]
        self.assertEqual((row["u"], row["v"]), ("a", "b"))
        self.assertEqual(row["uncond-e"], Fraction(1, 6))
        self.assertEqual(row["cond-e"], Fraction(1, 4))
        self.assertEqual(row["cond-mmd"], Fraction(1, 2))
        self.assertTrue(math.isinf(report.alpha_star["cond-e"]))
        self.assertFalse(report.passes())
        self.assertFalse(report.passes(alpha=10))
        self.assertEqual(report.to_dict()["alpha_star"]["cond-e"], "inf")
        self.assertEqual(list(report.to_frame()["u"]), ["a", "a", "b"])

    def test_witnesses_reevaluate(self):
        report = audit_robustness(self.dist, family=[self.f], measures=["cond-e"])
        self.assertEqual(len(report.witnesses), 3)
        for witness in report.witnesses:
            self.assertEqual(reevaluate_witness(self.dist, witness), witness.distance)
            self.assertEqual(witness.sub_universe, ("a", "b", "c"))


class TestFairFamilies(unittest.TestCase):
    def test_context_free_family_is_robust(self):
        spec = UniverseSpec.from_qualifications({"a": "0.9", "b": "0.8", "c": "0.3", "d": "0.2"})
        dist = CohortDistribution.uniform(CohortSet.all_of_size(spec, 2))
        report = audit_robustness(dist, family=[qualification_score(spec)])
        self.assertEqual(report.alpha_star["cond-e"], 1)
        self.assertEqual(report.alpha_star["cond-mmd"], 1)
        self.assertEqual(report.alpha_star["uncond-e"], Fraction(1, 2))
        self.assertTrue(report.passes())
        self.assertEqual(report.witnesses, [])
        self.assertEqual(report.findings, [])

    def test_constant_score(self):
        spec, mechanism = weighted_setup()
        constant = ScoringFunction(lambda cohort, u: Fraction(1, 2), name="constant")
        report = audit_robustness(mechanism, family=[constant])
        self.assertEqual(report.alpha_star["cond-e"], 0)
        self.assertEqual(report.alpha_star["cond-mmd"], 0)
        self.assertTrue(report.passes())

    def test_family_from_policy(self):
        spec, mechanism = weighted_setup()
        policy = delta_from_family([qualification_score(spec)], spec)
        report = audit_robustness(mechanism, policy=policy, measures=["cond-e"])
        self.assertEqual(report.measures, ("cond-e",))
        self.assertEqual(report.rows[0]["worst cond-e"], "qualification")

    def test_argument_errors(self):
        spec, mechanism = weighted_setup()
        with self.assertRaises(ValueError):
            audit_robustness(mechanism)
        with self.assertRaises(ValueError):
            audit_robustness(mechanism, family=[qualification_score(spec)], measures=["tv"])

    def test_parallel_matches_serial(self):
        spec, mechanism = weighted_setup()
        family = [qualification_score(spec)]
        serial = audit_robustness(mechanism, family=family)
        parallel = audit_robustness(mechanism, family=family, workers=3)
        self.assertEqual(serial.to_dict(), parallel.to_dict())


class TestNotionsInAudit(unittest.TestCase):
    def test_swapping_mapping_report(self):
        spec, mechanism = weighted_setup()
        policy = PolicyDistance("interchangeability", spec)
        report = audit_robustness(
            mechanism, family=[qualification_score(spec)], policy=policy, mapping="swapping"
        )
        self.assertTrue(report.notions["notion1"]["satisfied"])
        self.assertIn("notion2", report.notions)
        self.assertTrue(report.notions["respects_half_alpha_delta"])

    def test_unavailable_mapping(self):
        spec, mechanism = weighted_setup()
        policy = PolicyDistance("interchangeability", spec)
        report = audit_robustness(
            mechanism, family=[qualification_score(spec)], policy=policy, mapping="quality"
        )
        self.assertIn("unavailable", report.notions)
        self.assertTrue(report.findings)


class TestPolicyOnlyAudit(unittest.TestCase):
    def setUp(self):
        qualifications = {"a": "0.9", "b": "0.8", "c": "0.3", "d": "0.2"}
        self.spec = UniverseSpec.from_qualifications(qualifications)
        self.cohort_set = CohortSet.all_of_size(self.spec, 2)
        self.policy = PolicyDistance("interchangeability", self.spec)

    def test_passing_notions_certify_alpha_star(self):
        dist = CohortDistribution.uniform(self.cohort_set)
        report = audit_robustness(dist, policy=self.policy, mapping="swapping", alpha=1)
        self.assertTrue(report.notions["notion1"]["satisfied"])
        self.assertTrue(report.notions["notion2"]["satisfied"])
        self.assertEqual(
            report.alpha_star, {"uncond-e": 3, "cond-e": 3, "uncond-mmd": 2, "cond-mmd": 2}
        )
        self.assertEqual(set(report.alpha_star_basis.values()), {"certified"})
        self.assertEqual(len(report.unmeasured["cond-e"]), 6)
        self.assertFalse(report.passes())
        self.assertTrue(report.passes(3))
        self.assertTrue(any("certified" in finding for finding in report.findings))
        self.assertEqual(report.to_dict()["alpha_star_basis"]["uncond-mmd"], "certified")

    def test_uncertified_alpha_star_is_unmeasured(self):
        dist = CohortDistribution.point_mass(self.cohort_set, ["a", "b"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            report = audit_robustness(dist, policy=self.policy, mapping="swapping", alpha=1)
        self.assertFalse(report.notions["notion1"]["satisfied"])
        self.assertIsNone(report.alpha_star["uncond-e"])
        self.assertEqual(report.alpha_star_basis["uncond-e"], "unmeasured")
        self.assertIn(("c", "d"), report.unmeasured["uncond-e"])
        self.assertFalse(report.passes())
        self.assertFalse(report.passes(100))
        self.assertIsNone(report.to_dict()["alpha_star"]["uncond-e"])
        self.assertIn("uncond-e=unmeasured", repr(report))
        self.assertTrue(any("alpha* is unmeasured" in finding for finding in report.findings))

    def test_explicit_family_is_measured(self):
        dist = CohortDistribution.uniform(self.cohort_set)
        report = audit_robustness(
            dist, family=[qualification_score(self.spec)], policy=self.policy, mapping="swapping"
        )
        self.assertEqual(set(report.alpha_star_basis.values()), {"measured"})
        self.assertEqual(report.unmeasured["cond-e"], [])

    def test_parallel_policy_audit_matches_serial(self):
        dist = CohortDistribution.point_mass(self.cohort_set, ["a", "b"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            serial = audit_robustness(dist, policy=self.policy, mapping="swapping", minimize=False)
            parallel = audit_robustness(
                dist, policy=self.policy, mapping="swapping", minimize=False, workers=4
            )
        self.assertEqual(serial.to_dict(), parallel.to_dict())


@st.composite
def monotone_instances(draw):
    """Individually fair weighted sampling laws, which pass 1-Notion 1 under swapping."""
    n = draw(st.integers(min_value=3, max_value=5))
    k = draw(st.integers(min_value=1, max_value=n - 1))
    tenths = draw(st.lists(st.integers(min_value=1, max_value=10), min_size=n, max_size=n))
    # total weight >= 1 keeps |p(u) - p(v)| <= |w(u) - w(v)|
    while sum(tenths) < 10:
        tenths[tenths.index(min(tenths))] = 10
    qualifications = {f"x{i}": Fraction(t, 10) for i, t in enumerate(tenths)}
    spec = UniverseSpec.from_qualifications(qualifications)
    dist = WeightedSampling(WeightAssignment(spec, qualifications, lipschitz=1), k).distribution()
    alpha = draw(st.sampled_from([1, Fraction(3, 2), 2]))
    seed = draw(st.integers(min_value=0, max_value=2 ** 32 - 1))
    return spec, dist, alpha, seed


def interchangeable_family(spec, seed, size=50):
    """a q_u + sum_j c_j |q(C) - t_j| + b clipped to [0, 1], with |a| + sum_j |c_j| <= 1.

    Every member moves by at most D(u, v) between (C, u) and (C, v) and between (C, u) and
    (C - u + v, v), so the family respects the interchangeability policy.
    """
    rng = np.random.default_rng(seed)
    family = []
    for i in range(size):
        raw = [int(x) for x in rng.integers(-5, 6, size=4)]
        scale = max(sum(abs(x) for x in raw), 1)
        a, *c = [Fraction(x, scale) for x in raw]
        t = [Fraction(int(x), 10) for x in rng.integers(0, 10 * spec.n + 1, size=3)]
        b = Fraction(int(rng.integers(0, 11)), 10)

        def score(cohort, u, a=a, c=c, t=t, b=b):
            total = sum((spec.qualification(x) for x in cohort), Fraction(0))
            value = a * spec.qualification(u) + b
            value += sum(cj * abs(total - tj) for cj, tj in zip(c, t))
            return min(max(value, Fraction(0)), Fraction(1))

        family.append(ScoringFunction(score, name=f"member-{i}"))
    return family


class TestRobustnessFromNotions(unittest.TestCase):
    @settings(max_examples=100, deadline=None)
    @given(monotone_instances())
    def test_passing_notions_bound_mmd(self, instance):
        spec, dist, alpha, seed = instance
        self.assertTrue(is_individually_fair(dist, spec)[0])
        mappings = build_mappings("swapping", dist.cohort_set, spec)
        notion1 = check_notion1(dist, mappings, spec, alpha)
        notion2 = check_notion2(dist, mappings, spec, alpha)
        self.assertTrue(notion1.satisfied)
        delta = PolicyDistance("interchangeability", spec)
        family = interchangeable_family(spec, seed)
        pipelines = {
            (i, u): pipeline_distribution(dist, f, u)
            for i, f in enumerate(family)
            for u in spec.individuals
        }
        for u, v in combinations(spec.individuals, 2):
            d_uv = spec.distance(u, v)
            if not d_uv < 1:
                continue
            self.assertTrue(mapping_respects(mappings(u, v), delta, spec, Fraction(1, 2) / alpha)[0])
            for i in range(len(family)):
                d_u, d_v = pipelines[(i, u)], pipelines[(i, v)]
                self.assertLessEqual(measure_distance(d_u, d_v, "uncond-mmd"), 2 * alpha * d_uv)
                if notion2.satisfied:
                    self.assertLessEqual(measure_distance(d_u, d_v, "cond-mmd"), 2 * alpha * d_uv)


class TestNeverSelected(unittest.TestCase):
    def test_conditional_pairs_are_skipped(self):
        spec = UniverseSpec.from_qualifications({"a": "0.9", "b": "0.8", "c": "0.3", "d": "0.2"})
        dist = CohortDistribution.point_mass(CohortSet.all_of_size(spec, 2), ["a", "b"])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = audit_robustness(dist, family=[qualification_score(spec)])
        self.assertEqual(len(report.skipped), 5)
        self.assertTrue(all(issubclass(w.category, RuntimeWarning) for w in caught))
        skipped_row = report.rows[1]
        self.assertEqual((skipped_row["u"], skipped_row["v"]), ("a", "c"))
        self.assertIsNone(skipped_row["cond-e"])
        self.assertEqual(skipped_row["uncond-e"], Fraction(9, 10))


class TestMonteCarlo(unittest.TestCase):
    def test_deterministic_under_seed(self):
        spec, mechanism = weighted_setup()
        f = qualification_score(spec)
        first = monte_carlo_estimate(mechanism, f, "a", 500, seed=11)
        second = monte_carlo_estimate(mechanism, f, "a", 500, seed=11)
        self.assertEqual(first.pipeline.p_bot, second.pipeline.p_bot)
        self.assertEqual(first.stderr, second.stderr)

    def test_agrees_with_exact_law(self):
        spec, mechanism = weighted_setup()
        f = qualification_score(spec)
        exact = pipeline_distribution(mechanism.distribution(), f, "d")
        estimate = monte_carlo_estimate(mechanism, f, "d", 4000, seed=5)
        gap = abs(float(estimate.pipeline.p_bot) - float(exact.p_bot))
        self.assertLessEqual(gap, 1.5 * estimate.radius)
        self.assertGreater(estimate.radius, 0)

    def test_single_draw_is_a_point_mass(self):
        spec, mechanism = weighted_setup()
        estimate = monte_carlo_estimate(mechanism, qualification_score(spec), "a", 1, seed=0)
        self.assertIn(estimate.pipeline.p_bot, (0, 1))
        self.assertEqual(estimate.radius, 0)
        with self.assertRaises(ValueError):
            monte_carlo_estimate(mechanism, qualification_score(spec), "a", 0)

    def test_sampled_audit(self):
        spec, mechanism = weighted_setup()
        family = [qualification_score(spec)]
        first = audit_robustness(mechanism, family=family, montecarlo=2000, seed=1)
        second = audit_robustness(mechanism, family=family, montecarlo=2000, seed=1)
        self.assertEqual(first.to_dict(), second.to_dict())
        self.assertEqual(first.montecarlo, 2000)
        self.assertGreater(first.radius, 0)


class TestMinimizeWitness(unittest.TestCase):
    def test_drops_irrelevant_individuals(self):
        spec = UniverseSpec(["a", "b", "c", "d"], [[0] * 4 for _ in range(4)])
        values = {
            frozenset("ab"): Fraction(0),
            frozenset("ac"): Fraction(1),
            frozenset("bc"): Fraction(1, 2),
            frozenset("ad"): Fraction(1, 2),
            frozenset("bd"): Fraction(1, 2),
        }
        f = ScoringFunction(lambda cohort, u: values[cohort], name="table")
        cohort_set = CohortSet.explicit(spec, [["a", "b"], ["a", "c"], ["b", "c"], ["a", "d"], ["b", "d"]])
        dist = CohortDistribution.uniform(cohort_set)
        d_a = pipeline_distribution(dist, f, "a")
        d_b = pipeline_distribution(dist, f, "b")
        self.assertEqual(measure_distance(d_a, d_b, "cond-e"), Fraction(1, 6))
        self.assertEqual(minimize_witness(dist, f, "a", "b", "cond-e"), ("a", "b", "c"))

    def test_no_violation(self):
        spec = UniverseSpec.from_qualifications({"a": "0.9", "b": "0.8", "c": "0.3", "d": "0.2"})
        dist = CohortDistribution.uniform(CohortSet.all_of_size(spec, 2))
        f = qualification_score(spec)
        self.assertIsNone(minimize_witness(dist, f, "a", "b", "cond-e"))
        for measure in MEASURES:
            self.assertIsNotNone(measure_distance(
                pipeline_distribution(dist, f, "a"), pipeline_distribution(dist, f, "b"), measure
            ))


if __name__ == "__main__":
    unittest.main()
