import unittest
from fractions import Fraction

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fair_pipelines.core import CohortDistribution
from fair_pipelines.distances import (
    PipelineOutcomeDistribution,
    ScorePMF,
    conditional,
    coupled_mass_lp,
    expected_score_distance,
    max_coupled_mass,
    mmd,
    mmd_bruteforce,
    pipeline_distribution,
    tv_distance,
    unconditional,
)
from fair_pipelines.scoring.catalog import pathological_family

HALF = Fraction(1, 2)


def pmf(pairs):
    return ScorePMF({Fraction(v): Fraction(p) for v, p in pairs.items()})


class TestScorePMF(unittest.TestCase):
    def test_merges_and_validates(self):
        g = ScorePMF([(Fraction(1, 2), HALF), (Fraction(1, 2), Fraction(1, 4)), (1, Fraction(1, 4))])
        self.assertEqual(g.support, (Fraction(1, 2), 1))
        self.assertEqual(g.mass(Fraction(1, 2)), Fraction(3, 4))
        self.assertEqual(g.expectation(), Fraction(5, 8))
        with self.assertRaises(ValueError):
            ScorePMF({Fraction(1, 2): HALF})
        with self.assertRaises(ValueError):
            ScorePMF({Fraction(3, 2): 1})
        with self.assertRaises(ValueError):
            ScorePMF({0: Fraction(3, 2), 1: HALF * -1})

    def test_summed_role_allows_large_scores(self):
        g = ScorePMF({3: 1}, role="summed")
        self.assertEqual(g.expectation(), 3)

    def test_outcome_views(self):
        d = PipelineOutcomeDistribution(HALF, {Fraction(1, 2): Fraction(1, 4), 1: Fraction(1, 4)})
        self.assertEqual(d.selection_probability, HALF)
        self.assertEqual(unconditional(d).mass(0), HALF)
        self.assertEqual(conditional(d).expectation(), Fraction(3, 4))
        never = PipelineOutcomeDistribution(1, {})
        with self.assertRaises(ValueError):
            conditional(never)


class TestMeasures(unittest.TestCase):
    def test_mmd_midpoint_example(self):
        g1 = ScorePMF.point(Fraction(7, 10))
        g2 = pmf({Fraction(3, 5): HALF, Fraction(4, 5): HALF})
        self.assertEqual(mmd(g1, g2), Fraction(1, 10))
        self.assertEqual(tv_distance(g1, g2), 1)
        self.assertEqual(expected_score_distance(g1, g2), 0)

    def test_mmd_identity_and_extremes(self):
        g = pmf({0: HALF, 1: HALF})
        self.assertEqual(mmd(g, g), 0)
        self.assertEqual(mmd(ScorePMF.point(0), ScorePMF.point(1)), 1)

    def test_mmd_small_shift(self):
        # moving half the mass from 0 to 1 costs the TV term
        g1 = ScorePMF.point(0)
        g2 = pmf({0: HALF, 1: HALF})
        self.assertEqual(mmd(g1, g2), 1)
        g3 = pmf({0: Fraction(9, 10), Fraction(1, 10): Fraction(1, 10)})
        self.assertEqual(mmd(g1, g3), Fraction(1, 10))

    def test_float_pmfs(self):
        g1 = ScorePMF({0.7: 1.0})
        g2 = ScorePMF({0.6: 0.5, 0.8: 0.5})
        self.assertAlmostEqual(mmd(g1, g2), 0.1)

    def test_sweep_matches_transport_lp(self):
        g1 = pmf({0: Fraction(1, 3), Fraction(2, 5): Fraction(1, 3), 1: Fraction(1, 3)})
        g2 = pmf({Fraction(1, 10): HALF, Fraction(7, 10): HALF})
        for cap in (0, Fraction(1, 10), Fraction(3, 10), Fraction(1, 2), 1):
            self.assertAlmostEqual(
                float(max_coupled_mass(g1, g2, cap)), coupled_mass_lp(g1, g2, cap), places=7
            )


class TestPipelineDistribution(unittest.TestCase):
    def test_pathological_family(self):
        spec, cohort_set, f = pathological_family()
        dist = CohortDistribution.uniform(cohort_set)
        expected = {"a": Fraction(1, 2), "b": Fraction(1, 4), "c": Fraction(3, 4)}
        unconditional_expected = {"a": Fraction(1, 3), "b": Fraction(1, 6), "c": Fraction(1, 2)}
        for u in spec.individuals:
            d = pipeline_distribution(dist, f, u)
            self.assertEqual(d.p_bot, Fraction(1, 3))
            self.assertEqual(conditional(d).expectation(), expected[u])
            self.assertEqual(unconditional(d).expectation(), unconditional_expected[u])


values = st.integers(min_value=0, max_value=10)
masses = st.integers(min_value=1, max_value=5)


@st.composite
def small_pmfs(draw):
    atoms = draw(st.dictionaries(values, masses, min_size=1, max_size=6))
    total = sum(atoms.values())
    return ScorePMF({Fraction(v, 10): Fraction(m, total) for v, m in atoms.items()})


@settings(max_examples=200, deadline=None)
@given(small_pmfs(), small_pmfs())
def test_mmd_matches_definition(g1, g2):
    fast = mmd(g1, g2)
    assert 0 <= fast <= 1
    assert fast <= 2 * tv_distance(g1, g2)
    assert fast == mmd(g2, g1)
    np.testing.assert_allclose(float(fast), mmd_bruteforce(g1, g2), atol=1e-6)


if __name__ == "__main__":
    unittest.main()
