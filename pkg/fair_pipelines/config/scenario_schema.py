"""Pydantic models of a scenario document.

The models only check shape and types; cross-references between sections (individual ids,
cohort sizes, group counts) are checked in fair_pipelines.scenarios. Validated documents are
used as plain dicts afterwards.
"""

from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Discriminator, Field, StrictBool, StrictInt, StrictStr
from pydantic import Tag, ValidationError
from pydantic.functional_validators import BeforeValidator
from pydantic.json_schema import WithJsonSchema

from fair_pipelines.audit import MEASURES
from fair_pipelines.mechanisms.mechanism_creator import MECHANISMS
from fair_pipelines.policies import MAPPING_KINDS, POLICY_KINDS
from fair_pipelines.scoring.catalog import CATALOG
from utility_funcs import parse_number

# union member tags, dropped from error paths
LIST_TAG = "<list>"
MAP_TAG = "<map>"
NAME_TAG = "<name>"
_TAGS = (LIST_TAG, MAP_TAG, NAME_TAG)


def _rational(value):
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ValueError(f"expected a number or a string such as '1/3', got {type(value).__name__}")
    try:
        parse_number(value)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"{value!r} is not a number") from None
    return value


def _individual(value):
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ValueError(f"an individual id is a string or an integer, got {type(value).__name__}")
    return value


Rational = Annotated[
    Any,
    BeforeValidator(_rational),
    WithJsonSchema({"type": ["number", "string"], "format": "rational"}),
]
Individual = Annotated[
    Any, BeforeValidator(_individual), WithJsonSchema({"type": ["string", "integer"]})
]
Members = Annotated[List[Individual], Field(min_length=1)]


def _shape(value):
    if isinstance(value, dict):
        return MAP_TAG
    if isinstance(value, str):
        return NAME_TAG
    return LIST_TAG


# a list in universe order, or an {individual: number} object
PerIndividual = Annotated[
    Union[
        Annotated[List[Rational], Tag(LIST_TAG)],
        Annotated[Dict[str, Rational], Tag(MAP_TAG)],
    ],
    Discriminator(lambda v: MAP_TAG if isinstance(v, dict) else LIST_TAG),
]
Metric = Annotated[
    Union[
        Annotated[Literal["discrete", "qualifications"], Tag(NAME_TAG)],
        Annotated[List[List[Rational]], Tag(LIST_TAG)],
    ],
    Discriminator(lambda v: NAME_TAG if isinstance(v, str) else LIST_TAG),
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class UniverseSection(_Section):
    individuals: Members
    metric: Optional[Metric] = None
    qualifications: Optional[PerIndividual] = None
    quality_groups: Optional[List[Members]] = None
    group_distances: Optional[List[List[Rational]]] = None
    beta: Optional[Rational] = None


class CohortSetSection(_Section):
    k: Optional[StrictInt] = Field(default=None, ge=1)
    cohorts: Optional[Annotated[List[Members], Field(min_length=1)]] = None


class ProfileEntry(_Section):
    profile: List[Annotated[StrictInt, Field(ge=0)]]
    probability: Rational


class LawEntry(_Section):
    cohort: Members
    probability: Rational


class MechanismSection(_Section):
    kind: Literal[MECHANISMS]
    weights: Optional[PerIndividual] = None
    lipschitz: Optional[Rational] = None
    profiles: Optional[List[ProfileEntry]] = None
    law: Optional[List[LawEntry]] = None
    check_preconditions: Optional[StrictBool] = None
    solver: Optional[Literal["exact", "float", "auto"]] = None


class CatalogEntry(_Section):
    name: Literal[CATALOG]
    params: Dict[str, Any] = Field(default_factory=dict)


CatalogItem = Annotated[
    Union[
        Annotated[Literal[CATALOG], Tag(NAME_TAG)],
        Annotated[CatalogEntry, Tag(MAP_TAG)],
    ],
    Discriminator(_shape),
]


class ScoreEntry(_Section):
    cohort: Members
    individual: Individual
    score: Rational


class ScoreTable(_Section):
    name: Optional[StrictStr] = None
    scores: List[ScoreEntry]


class FamilySection(_Section):
    catalog: Optional[List[CatalogItem]] = None
    tables: Optional[List[ScoreTable]] = None
    constant: Optional[List[Rational]] = None
    policy: Optional[Literal[POLICY_KINDS]] = None


class AuditSection(_Section):
    measures: Optional[List[Literal[MEASURES]]] = None
    alpha: Optional[Rational] = None
    mapping: Optional[Literal[MAPPING_KINDS]] = None
    seed: Optional[StrictInt] = None
    montecarlo: Optional[StrictInt] = Field(default=None, ge=1)
    minimize: Optional[StrictBool] = None


class ScenarioDocument(_Section):
    """A whole scenario file."""

    model_config = ConfigDict(extra="forbid", title="fair-pipelines scenario")

    name: Optional[StrictStr] = None
    description: Optional[StrictStr] = None
    universe: UniverseSection
    cohort_set: CohortSetSection = Field(default_factory=CohortSetSection)
    mechanism: MechanismSection
    family: FamilySection = Field(default_factory=FamilySection)
    audit: AuditSection = Field(default_factory=AuditSection)


def _path(loc):
    path = "$"
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        elif part not in _TAGS:
            path += f".{part}"
    return path


def schema_errors(doc):
    """Shape errors of a parsed document as (path, message) pairs, e.g. ("$.cohort_set.k", ...)."""
    try:
        ScenarioDocument.model_validate(doc)
    except ValidationError as e:
        errors = []
        for error in e.errors():
            loc = tuple(error["loc"])
            if error["type"] == "missing":
                errors.append((_path(loc[:-1]), f"missing required key {loc[-1]!r}"))
            elif error["type"] == "extra_forbidden":
                errors.append((_path(loc[:-1]), f"unknown key {loc[-1]!r}"))
            else:
                errors.append((_path(loc), error["msg"]))
        return errors
    return []


SCENARIO_SCHEMA = ScenarioDocument.model_json_schema()
