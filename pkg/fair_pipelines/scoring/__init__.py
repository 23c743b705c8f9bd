from fair_pipelines.scoring.adversarial import adversarial_score_expected, adversarial_score_mmd
from fair_pipelines.scoring.base import (
    MixtureScoringFunction,
    ScoringFunction,
    family_membership,
    intra_cohort_fair_check,
)
from fair_pipelines.scoring.catalog import (
    catalog_scoring_function,
    equal_treatment,
    fixed_bonus_pool,
    pathological_family,
    promotion,
    stack_rank_if,
)
from fair_pipelines.scoring.extension import lipschitz_extend
