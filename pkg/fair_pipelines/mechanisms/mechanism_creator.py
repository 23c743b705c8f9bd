from fair_pipelines.core import CohortDistribution, CohortSet
from fair_pipelines.mechanisms.base import ExplicitMechanism, WeightAssignment
from fair_pipelines.mechanisms.conditioning import ConditioningMechanism
from fair_pipelines.mechanisms.permute_then_classify import PermuteThenClassify
from fair_pipelines.mechanisms.quality_compositional import QualityCompositional
from fair_pipelines.mechanisms.structured_sampling import StructuredWeightedSampling
from fair_pipelines.mechanisms.weighted_sampling import WeightedSampling

MECHANISMS = (
    "permute_then_classify",
    "weighted_sampling",
    "structured_sampling",
    "conditioning",
    "quality_compositional",
    "uniform",
    "explicit",
)


def get_mechanism_creator(
    mechanism,
    k=None,
    weights=None,
    lipschitz=None,
    cohorts=None,
    profiles=None,
    law=None,
    check_preconditions=True,
    solver="exact",
):
    """Returns mechanism_creator(universe) building the named mechanism.

    cohorts is a list of member lists for an explicit cohort set; law maps cohorts to
    probabilities for the explicit mechanism.
    """
    if mechanism == "permute_then_classify":

        def mechanism_creator(universe):
            return PermuteThenClassify(WeightAssignment(universe, weights, lipschitz), k)

    elif mechanism == "weighted_sampling":

        def mechanism_creator(universe):
            return WeightedSampling(WeightAssignment(universe, weights, lipschitz), k)

    elif mechanism == "conditioning":

        def mechanism_creator(universe):
            return ConditioningMechanism(WeightAssignment(universe, weights, lipschitz), k)

    elif mechanism == "structured_sampling":

        def mechanism_creator(universe):
            return StructuredWeightedSampling(
                CohortSet.explicit(universe, cohorts),
                universe,
                check_preconditions=check_preconditions,
                solver=solver,
            )

    elif mechanism == "quality_compositional":

        def mechanism_creator(universe):
            cohort_set = None if cohorts is None else CohortSet.explicit(universe, cohorts)
            return QualityCompositional(
                universe, {tuple(p): w for p, w in profiles}, cohort_set=cohort_set
            )

    elif mechanism == "uniform":

        def mechanism_creator(universe):
            if cohorts is None:
                cohort_set = CohortSet.all_of_size(universe, k)
            else:
                cohort_set = CohortSet.explicit(universe, cohorts)
            return ExplicitMechanism(CohortDistribution.uniform(cohort_set))

    elif mechanism == "explicit":

        def mechanism_creator(universe):
            if cohorts is None:
                cohort_set = CohortSet.all_of_size(universe, k)
            else:
                cohort_set = CohortSet.explicit(universe, cohorts)
            return ExplicitMechanism(
                CohortDistribution(cohort_set, {tuple(c): p for c, p in law})
            )

    else:
        raise ValueError(f"mechanism must be one of {', '.join(MECHANISMS)}, not {mechanism}")

    return mechanism_creator
