from fair_pipelines.mechanisms.base import (
    ExplicitMechanism,
    Mechanism,
    WeightAssignment,
    is_monotonic,
)
from fair_pipelines.mechanisms.conditioning import (
    ConditioningBounds,
    ConditioningMechanism,
    conditioning_mechanism,
)
from fair_pipelines.mechanisms.mechanism_creator import get_mechanism_creator
from fair_pipelines.mechanisms.multi_cohort import repeat_mechanism, split_cohort
from fair_pipelines.mechanisms.permute_then_classify import (
    PermuteThenClassify,
    permute_then_classify,
)
from fair_pipelines.mechanisms.quality_compositional import (
    QualityCompositional,
    quality_compositional,
)
from fair_pipelines.mechanisms.structured_sampling import (
    StructuredWeightedSampling,
    structured_weighted_sampling,
)
from fair_pipelines.mechanisms.weighted_sampling import (
    WeightedSampling,
    weighted_sampling,
    weighted_sampling_counterexample,
)
