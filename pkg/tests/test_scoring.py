import unittest
from fractions import Fraction

from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fair_pipelines.audit import measure_distance
from fair_pipelines.core import CohortDistribution, CohortSet, UniverseSpec
from fair_pipelines.distances import conditional, pipeline_distribution, unconditional
from fair_pipelines.mechanisms import WeightAssignment, WeightedSampling
from fair_pipelines.policies import PolicyDistance, cluster_measures, swapping_mapping
from fair_pipelines.scoring import (
    MixtureScoringFunction,
    ScoringFunction,
    adversarial_score_expected,
    adversarial_score_mmd,
    catalog_scoring_function,
    family_membership,
    intra_cohort_fair_check,
    lipschitz_extend,
)
from fair_pipelines.scoring.catalog import (
    equal_treatment,
    fixed_bonus_pool,
    promotion,
    promotion_exact,
    proportional_bonus,
    stack_rank_exact,
    stack_rank_if,
    weighted_spread,
)
from utility_funcs import parse_number

FIRST = {u: parse_number(q) for u, q in {"Alice": "0.8", "Bob": "0.7", "Carol": "0.5", "Dan": "0.2", "Erin": "0.8"}.items()}
SECOND = {u: parse_number(q) for u, q in {"Frank": "0.8", "Grace": "0.6", "Harriet": "0.1", "Ivan": "0.2", "Judy": "0.3"}.items()}
GROUPED = {"a": "0.9", "b": "0.8", "c": "0.3", "d": "0.2"}


def shares(*values):
    return [parse_number(v) for v in values]


class TestCatalog(unittest.TestCase):
    def test_fixed_bonus_pool(self):
        bonus = fixed_bonus_pool(FIRST)
        self.assertEqual(list(bonus.values()), shares("0.35", "0.25", "0.05", 0, "0.35"))
        self.assertEqual(sum(b * FIRST[u] for u, b in bonus.items()), Fraction(19, 25))
        # 2 (|C| sum b q - sum q)
        self.assertEqual(weighted_spread(bonus, FIRST), Fraction(8, 5))
        second = fixed_bonus_pool(SECOND)
        self.assertEqual(list(second.values()), shares("17/30", "11/30", 0, 0, "1/15"))
        self.assertEqual(fixed_bonus_pool(FIRST, pool=100)["Alice"], 35)

    def test_fixed_bonus_pool_float_solver(self):
        bonus = fixed_bonus_pool(FIRST, solver="float")
        self.assertAlmostEqual(bonus["Bob"], 0.25, places=7)

    def test_promotion_matches_bonus_shares(self):
        self.assertEqual(list(promotion(FIRST).values()), list(fixed_bonus_pool(FIRST).values()))
        self.assertEqual(promotion_exact(FIRST), {
            "Alice": Fraction(1, 2), "Bob": 0, "Carol": 0, "Dan": 0, "Erin": Fraction(1, 2)
        })

    def test_stack_rank(self):
        self.assertEqual(list(stack_rank_if(FIRST).values()), shares(0, "1/10", "3/10", "3/5", 0))
        self.assertEqual(list(stack_rank_if(SECOND).values()), shares(0, 0, "13/30", "1/3", "7/30"))
        self.assertEqual(stack_rank_exact(FIRST)["Dan"], 1)
        self.assertEqual(stack_rank_exact(SECOND)["Harriet"], 1)
        self.assertEqual(sum(stack_rank_exact(SECOND).values()), 1)

    def test_equal_and_proportional(self):
        self.assertEqual(equal_treatment(FIRST, base=100)["Alice"], 60)
        self.assertEqual(equal_treatment(SECOND, base=100)["Frank"], 40)
        self.assertEqual(proportional_bonus(FIRST)["Alice"], Fraction(4, 15))
        self.assertEqual(proportional_bonus({"x": 0, "y": 0})["x"], Fraction(1, 2))
        with self.assertRaises(ValueError):
            equal_treatment({})

    def test_scoring_function_wrapper(self):
        spec = UniverseSpec.from_qualifications({**FIRST, **SECOND})
        f = catalog_scoring_function("fixed_bonus_pool", spec)
        self.assertEqual(f(FIRST.keys(), "Bob"), Fraction(1, 4))
        self.assertEqual(f(FIRST.keys(), "Frank"), 0)
        cohorts = CohortSet.explicit(spec, [list(FIRST), list(SECOND)])
        self.assertTrue(intra_cohort_fair_check(f, cohorts, spec)[0])
        hard = catalog_scoring_function("stack_rank_exact", spec)
        ok, (cohort, u, v, gap, d) = intra_cohort_fair_check(hard, cohorts, spec)
        self.assertFalse(ok)
        self.assertEqual(gap, 1)
        with self.assertRaises(ValueError):
            catalog_scoring_function("lottery", spec)
        with self.assertRaises(ValueError):
            catalog_scoring_function("promotion", UniverseSpec.discrete(["x", "y"]))


class TestScoringFunctions(unittest.TestCase):
    def test_table(self):
        f = ScoringFunction.from_table({(("a", "b"), "a"): "0.5", (("a", "b"), "b"): 1})
        self.assertEqual(f(["b", "a"], "a"), Fraction(1, 2))
        self.assertEqual(f(["a", "b"], "c"), 0)
        with self.assertRaises(ValueError):
            f(["a", "c"], "a")
        with self.assertRaises(ValueError):
            ScoringFunction.from_table({(("a",), "a"): 2})

    def test_mixture(self):
        low = ScoringFunction(lambda cohort, u: Fraction(0))
        high = ScoringFunction(lambda cohort, u: Fraction(1))
        mixed = MixtureScoringFunction([("1/4", low), ("3/4", high)])
        self.assertEqual(mixed(["a"], "a"), Fraction(3, 4))
        self.assertEqual(len(mixed.components()), 2)
        self.assertEqual(mixed.kind, "randomized")
        with self.assertRaises(ValueError):
            MixtureScoringFunction([("1/2", low)])


class TestFamilies(unittest.TestCase):
    def setUp(self):
        self.spec = UniverseSpec.from_qualifications(GROUPED, quality_groups=[["a", "b"], ["c", "d"]])
        self.cohorts = CohortSet.all_of_size(self.spec, 2)

    def test_context_free_scores(self):
        spec = self.spec
        f = ScoringFunction(lambda cohort, u: spec.qualification(u))
        self.assertTrue(family_membership(f, "F1", spec, self.cohorts)[0])
        self.assertTrue(family_membership(f, "F2", spec, self.cohorts)[0])
        # members of one profile and group score alike under F3, a and b do not
        self.assertFalse(family_membership(f, "F3", spec, self.cohorts)[0])

    def test_cohort_dependent_scores(self):
        f = catalog_scoring_function("equal_treatment", self.spec)
        ok, witness = family_membership(f, "F1", self.spec, self.cohorts)
        self.assertFalse(ok)
        self.assertEqual(witness[0], "a")

    def test_group_scores(self):
        spec = self.spec
        f = ScoringFunction(lambda cohort, u: Fraction(1, 2) if spec.group_of(u) == 0 else Fraction(0))
        self.assertTrue(family_membership(f, "F3", spec, self.cohorts)[0])
        with self.assertRaises(ValueError):
            family_membership(f, "F4", spec, self.cohorts)
        plain = UniverseSpec.from_qualifications(GROUPED)
        with self.assertRaises(ValueError):
            family_membership(f, "F3", plain, CohortSet.all_of_size(plain, 2))


class TestExtension(unittest.TestCase):
    def setUp(self):
        self.spec = UniverseSpec.from_qualifications(GROUPED)
        self.delta = PolicyDistance("interchangeability", self.spec)

    def test_extends_from_anchor(self):
        g = lipschitz_extend({(("a", "b"), "a"): 0}, self.delta, 1, self.spec)
        self.assertEqual(g(["a", "b"], "a"), 0)
        self.assertEqual(g(["a", "b"], "b"), Fraction(1, 10))
        self.assertEqual(g(["b", "c"], "c"), Fraction(3, 5))
        self.assertEqual(g(["a", "c"], "c"), 1)

    def test_rejects_non_lipschitz_anchors(self):
        with self.assertRaises(ValueError):
            lipschitz_extend({(("a", "b"), "a"): 0, (("a", "b"), "b"): 1}, self.delta, 1, self.spec)
        with self.assertRaises(ValueError):
            lipschitz_extend({(("a", "b"), "a"): 2}, self.delta, 1, self.spec)
        with self.assertRaises(ValueError):
            lipschitz_extend({}, self.delta, 1, self.spec)


class TestAdversarialScores(unittest.TestCase):
    def setUp(self):
        quals = {"a": "0.9", "b": "0.8", "c": "0.6", "d": "0.3", "e": "0.2"}
        self.spec = UniverseSpec.from_qualifications(quals)
        weights = WeightAssignment(self.spec, quals)
        self.dist = WeightedSampling(weights, 2).distribution()

    def expected_gap(self, g, u, v, view):
        e_u = view(pipeline_distribution(self.dist, g, u)).expectation()
        e_v = view(pipeline_distribution(self.dist, g, v)).expectation()
        return abs(e_u - e_v)

    def test_expected_witness_realizes_tv(self):
        m = swapping_mapping(self.dist.cohort_set, "a", "e")
        measures = cluster_measures(self.dist, m, "a", "e")
        g = adversarial_score_expected(m, measures, "a", "e", self.spec)
        self.assertGreater(measures.tv2(), 0)
        self.assertEqual(self.expected_gap(g, "a", "e", conditional), measures.tv2())
        g1 = adversarial_score_expected(m, measures, "a", "e", self.spec, conditional=False)
        gap = abs(measures.p_u - measures.p_v)
        self.assertEqual(self.expected_gap(g1, "a", "e", unconditional), measures.tv1() + gap / 2)

    def test_mmd_witness_scores_by_cluster(self):
        m = swapping_mapping(self.dist.cohort_set, "a", "b")
        g = adversarial_score_mmd(m, "a", "b", self.spec, 1, 0)
        for label, cluster in enumerate(m.clusters(), start=1):
            for mask, x in cluster:
                self.assertEqual(g(self.spec.members(mask), x), Fraction(label, 10))

    def test_mmd_witness_needs_close_pair(self):
        m = swapping_mapping(self.dist.cohort_set, "a", "e")
        with self.assertRaises(ValueError):
            adversarial_score_mmd(m, "a", "e", self.spec, 1, 0)
        with self.assertRaises(ValueError):
            adversarial_score_mmd(m, "a", "b", self.spec, 1, 0)


@st.composite
def notion_failures(draw):
    """Random laws with D(x0, x1) set to |p(x0) - p(x1)|, kept when 1-Notion 2 fails there."""
    n = draw(st.integers(min_value=4, max_value=5))
    k = draw(st.integers(min_value=2, max_value=n - 2))
    ids = [f"x{i}" for i in range(n)]
    discrete = CohortSet.all_of_size(UniverseSpec.discrete(ids), k)
    masks = list(discrete)
    masses = draw(
        st.lists(st.integers(min_value=0, max_value=5), min_size=len(masks), max_size=len(masks))
    )
    assume(sum(masses) > 0)
    law = {mask: Fraction(w, sum(masses)) for mask, w in zip(masks, masses)}
    p = CohortDistribution(discrete, law).selection_probabilities()
    assume(p["x0"] > 0 and p["x1"] > 0)
    metric = [[0 if i == j else 1 for j in range(n)] for i in range(n)]
    metric[0][1] = metric[1][0] = abs(p["x0"] - p["x1"])
    spec = UniverseSpec(ids, metric)
    dist = CohortDistribution(CohortSet.all_of_size(spec, k), law)
    m = swapping_mapping(dist.cohort_set, "x0", "x1")
    measures = cluster_measures(dist, m, "x0", "x1")
    assume(measures.tv2() > spec.distance("x0", "x1"))
    return spec, dist, m, measures


class TestNotionNecessity(unittest.TestCase):
    @settings(max_examples=50, deadline=None)
    @given(notion_failures())
    def test_witnesses_exceed_the_bound(self, instance):
        spec, dist, m, measures = instance
        u, v = "x0", "x1"
        d_uv = spec.distance(u, v)
        self.assertEqual(abs(measures.p_u - measures.p_v), d_uv)

        def distance(g, measure):
            d_u, d_v = pipeline_distribution(dist, g, u), pipeline_distribution(dist, g, v)
            return measure_distance(d_u, d_v, measure)

        g = adversarial_score_expected(m, measures, u, v, spec)
        self.assertEqual(distance(g, "cond-e"), measures.tv2())
        self.assertGreater(distance(g, "cond-e"), d_uv)
        g1 = adversarial_score_expected(m, measures, u, v, spec, conditional=False)
        self.assertEqual(distance(g1, "uncond-e"), measures.tv1() + d_uv / 2)
        if measures.tv1() > d_uv:
            self.assertGreater(distance(g1, "uncond-e"), d_uv)

        if 0 < d_uv * m.n < 1:
            eps = min(Fraction(1, 100), (1 / (m.n * d_uv) - 1) / 2)
            g2 = adversarial_score_mmd(m, u, v, spec, 1, eps)
            self.assertGreater(distance(g2, "cond-mmd"), d_uv)
            if measures.tv1() > d_uv / 2:
                self.assertGreater(distance(g2, "uncond-mmd"), d_uv)


if __name__ == "__main__":
    unittest.main()
