"""Scenario documents and the canned reproduction scenarios.

A scenario document is a UTF-8 JSON object describing a universe, its permissible cohorts, a
cohort selection mechanism, a scoring family and audit options. Its shape is modelled in
fair_pipelines.config.scenario_schema; validate_scenario checks a parsed document against those
models and resolves the cross-references (individual ids, group ids, cohort sizes).

Numbers may be JSON numbers or strings such as "1/3"; both are read as exact rationals.
"""

import json
import logging
import warnings
from collections import namedtuple
from fractions import Fraction
from itertools import combinations

from fair_pipelines.audit import MEASURES, audit_robustness
from fair_pipelines.config.scenario_schema import SCENARIO_SCHEMA, schema_errors
from fair_pipelines.core import (
    CohortDistribution,
    CohortSet,
    UniverseSpec,
    is_individually_fair,
    validate_universe,
)
from fair_pipelines.distances import pipeline_distribution
from fair_pipelines.mechanisms import (
    StructuredWeightedSampling,
    get_mechanism_creator,
    weighted_sampling_counterexample,
)
from fair_pipelines.policies import PolicyDistance
from fair_pipelines.scoring import ScoringFunction, catalog_scoring_function, pathological_family
from fair_pipelines.scoring.catalog import (
    equal_treatment,
    fixed_bonus_pool,
    promotion,
    promotion_exact,
    stack_rank_exact,
    stack_rank_if,
)
from utility_funcs import approx_equal, parse_number, to_json_number, update_nested_dict

logger = logging.getLogger(__name__)

SCENARIOS = (
    "impossibility",
    "ws-counterexample",
    "packing",
    "splitting",
    "adversarial-ranking",
    "bonus-tables",
)


class ScenarioError(ValueError):
    """A scenario document failed to parse or validate; errors holds (path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"{path}: {message}" for path, message in self.errors))


def _reference_errors(doc):
    """Cross-references that the schema alone cannot express."""
    errors = []
    universe = doc["universe"]
    ids = universe["individuals"]
    known = set(ids)
    n = len(ids)
    if len(known) != n:
        errors.append(("$.universe.individuals", "individual ids must be distinct"))

    def check_members(members, path):
        for i, x in enumerate(members):
            if x not in known:
                errors.append((f"{path}[{i}]", f"unknown individual {x!r}"))
        if len(set(members)) != len(members):
            errors.append((path, "a cohort lists a member twice"))

    metric = universe.get("metric")
    if isinstance(metric, list):
        if len(metric) != n:
            errors.append(("$.universe.metric", f"expected {n} rows, got {len(metric)}"))
        for i, row in enumerate(metric):
            if len(row) != n:
                errors.append((f"$.universe.metric[{i}]", f"expected {n} entries, got {len(row)}"))
    quals = universe.get("qualifications")
    if isinstance(quals, list) and len(quals) != n:
        errors.append(("$.universe.qualifications", f"expected {n} values, got {len(quals)}"))
    if isinstance(quals, dict):
        for key in quals:
            if key not in known:
                errors.append((f"$.universe.qualifications.{key}", f"unknown individual {key!r}"))
    if metric in (None, "qualifications") and quals is None:
        errors.append(("$.universe.metric", "a metric or qualifications are required"))
    for g, group in enumerate(universe.get("quality_groups", [])):
        check_members(group, f"$.universe.quality_groups[{g}]")
    groups = universe.get("quality_groups")
    if "group_distances" in universe and groups is None:
        errors.append(("$.universe.group_distances", "group distances need quality groups"))

    cohort_set = doc.get("cohort_set", {})
    k = cohort_set.get("k")
    if k is not None and k > n:
        errors.append(("$.cohort_set.k", f"cohort size k={k} exceeds |U|={n}"))
    for c, cohort in enumerate(cohort_set.get("cohorts", [])):
        check_members(cohort, f"$.cohort_set.cohorts[{c}]")

    mechanism = doc["mechanism"]
    kind = mechanism["kind"]
    if kind in ("permute_then_classify", "weighted_sampling", "conditioning"):
        if "weights" not in mechanism:
            errors.append(("$.mechanism", f"mechanism {kind} needs weights"))
        if k is None:
            errors.append(("$.cohort_set", f"mechanism {kind} needs a cohort size k"))
    if kind == "structured_sampling" and "cohorts" not in cohort_set:
        errors.append(("$.cohort_set", "structured_sampling needs explicit cohorts"))
    if kind == "quality_compositional":
        if groups is None:
            errors.append(("$.universe", "quality_compositional needs quality groups"))
        if "profiles" not in mechanism:
            errors.append(("$.mechanism", "quality_compositional needs profiles"))
        for p, entry in enumerate(mechanism.get("profiles", [])):
            if groups is not None and len(entry["profile"]) != len(groups):
                errors.append(
                    (f"$.mechanism.profiles[{p}].profile", f"expected {len(groups)} counts")
                )
    if kind in ("uniform", "explicit") and k is None and "cohorts" not in cohort_set:
        errors.append(("$.cohort_set", f"mechanism {kind} needs k or explicit cohorts"))
    if kind == "explicit" and "law" not in mechanism:
        errors.append(("$.mechanism", "the explicit mechanism needs a law"))
    weights = mechanism.get("weights")
    if isinstance(weights, list) and len(weights) != n:
        errors.append(("$.mechanism.weights", f"expected {n} weights, got {len(weights)}"))
    if isinstance(weights, dict):
        for key in weights:
            if key not in known:
                errors.append((f"$.mechanism.weights.{key}", f"unknown individual {key!r}"))
    for e, entry in enumerate(mechanism.get("law", [])):
        check_members(entry["cohort"], f"$.mechanism.law[{e}].cohort")

    for t, table in enumerate(doc.get("family", {}).get("tables", [])):
        for s, entry in enumerate(table["scores"]):
            path = f"$.family.tables[{t}].scores[{s}]"
            check_members(entry["cohort"], f"{path}.cohort")
            if entry["individual"] not in entry["cohort"]:
                errors.append((f"{path}.individual", f"{entry['individual']!r} is not in the cohort"))
    return errors


def validate_scenario(doc):
    """Schema and cross-reference errors of a parsed scenario, as (path, message) pairs."""
    errors = schema_errors(doc)
    if errors:
        return errors
    errors = _reference_errors(doc)
    if errors:
        return errors
    try:
        spec = build_universe(doc["universe"])
    except (ValueError, TypeError) as e:
        return [("$.universe", str(e))]
    for violation in validate_universe(spec).violations:
        errors.append((f"$.universe ({violation.kind})", violation.message))
    return errors


def parse_scenario(text, source="<scenario>"):
    """Parse and validate scenario JSON; ScenarioError carries line or path diagnostics."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError([(f"{source}:{e.lineno}:{e.colno}", e.msg)]) from None
    errors = validate_scenario(doc)
    if errors:
        raise ScenarioError([(f"{source} {path}", message) for path, message in errors])
    return doc


def load_scenario_file(path):
    with open(path, encoding="utf-8") as f:
        return parse_scenario(f.read(), source=str(path))


def build_universe(section):
    ids = section["individuals"]
    quals = section.get("qualifications")
    if isinstance(quals, list):
        quals = dict(zip(ids, quals))
    groups = section.get("quality_groups")
    metric = section.get("metric", "qualifications")
    if metric == "qualifications":
        if quals is None:
            raise ValueError("the qualifications metric needs qualifications")
        ordered = {u: quals[u] for u in ids}
        spec = UniverseSpec.from_qualifications(ordered, groups, beta=section.get("beta"))
        if "group_distances" in section:
            spec = UniverseSpec(
                ids,
                [[spec.distance(u, v) for v in ids] for u in ids],
                ordered,
                groups,
                section["group_distances"],
                section.get("beta"),
            )
        return spec
    if metric == "discrete":
        return UniverseSpec.discrete(
            ids,
            qualifications=quals,
            quality_groups=groups,
            group_distances=section.get("group_distances"),
            beta=section.get("beta"),
        )
    return UniverseSpec(
        ids, metric, quals, groups, section.get("group_distances"), section.get("beta")
    )


def _constant(c):
    c = parse_number(c)

    def constant(cohort, u):
        return c

    return ScoringFunction(constant, provenance="table", name=f"constant({c})")


def build_family(section, spec):
    """Scoring functions named by the family section, and the policy distance if any."""
    family = []
    for entry in section.get("catalog", []):
        if isinstance(entry, str):
            entry = {"name": entry}
        family.append(catalog_scoring_function(entry["name"], spec, **entry.get("params", {})))
    for i, table in enumerate(section.get("tables", [])):
        scores = {(tuple(e["cohort"]), e["individual"]): e["score"] for e in table["scores"]}
        family.append(ScoringFunction.from_table(scores, name=table.get("name", f"table{i}")))
    for c in section.get("constant", []):
        family.append(_constant(c))
    policy = None
    kind = section.get("policy")
    if kind == "family":
        policy = PolicyDistance("family", spec, family=family)
    elif kind is not None:
        policy = PolicyDistance(kind, spec)
    return family, policy


class Scenario(object):
    """A validated scenario document, built into library objects."""

    def __init__(self, doc):
        self.doc = doc
        self.name = doc.get("name", "scenario")
        self.universe = build_universe(doc["universe"])
        section = doc["mechanism"]
        cohort_section = doc.get("cohort_set", {})
        creator = get_mechanism_creator(
            section["kind"],
            k=cohort_section.get("k"),
            weights=section.get("weights"),
            lipschitz=section.get("lipschitz"),
            cohorts=cohort_section.get("cohorts"),
            profiles=[(e["profile"], parse_number(e["probability"])) for e in section.get("profiles", [])],
            law=[(e["cohort"], parse_number(e["probability"])) for e in section.get("law", [])],
            check_preconditions=section.get("check_preconditions", True),
            solver=section.get("solver", "exact"),
        )
        self.mechanism = creator(self.universe)
        self.family, self.policy = build_family(doc.get("family", {}), self.universe)
        self.options = {
            "measures": list(MEASURES),
            "alpha": 1,
            "mapping": None,
            "seed": None,
            "montecarlo": None,
            "minimize": True,
        }
        update_nested_dict(self.options, doc.get("audit", {}))

    def audit(self, **overrides):
        options = dict(self.options)
        update_nested_dict(options, {k: v for k, v in overrides.items() if v is not None})
        return audit_robustness(
            self.mechanism,
            self.universe,
            family=self.family,
            measures=options["measures"],
            policy=self.policy,
            mapping=options["mapping"],
            alpha=parse_number(options["alpha"]),
            seed=options["seed"],
            montecarlo=options["montecarlo"],
            minimize=options["minimize"],
        )


GoldenCheck = namedtuple("GoldenCheck", ["name", "expected", "actual", "passed"])


class ScenarioResult(object):
    def __init__(self, name, report, checks):
        self.name = name
        self.report = report
        self.checks = checks

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    def to_dict(self):
        def value(x):
            if isinstance(x, (list, tuple)):
                return [value(y) for y in x]
            if isinstance(x, (str, bool)) or x is None:
                return x
            return to_json_number(x)

        return {
            "scenario": self.name,
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "expected": value(c.expected),
                    "actual": value(c.actual),
                    "passed": c.passed,
                }
                for c in self.checks
            ],
            "report": None if self.report is None else self.report.to_dict(),
        }


def _equal(name, expected, actual):
    if isinstance(expected, (list, tuple)):
        passed = len(expected) == len(actual) and all(
            approx_equal(e, a) for e, a in zip(expected, actual)
        )
    else:
        passed = approx_equal(expected, actual)
    return GoldenCheck(name, expected, actual, passed)


def _less(name, lower, higher, margin=1e-9):
    """lower < higher, strictly and by more than float noise."""
    return GoldenCheck(name, f"< {float(higher):.6g}", lower, float(lower) < float(higher) - margin)


def _conditional_expectation(dist, f, u):
    return pipeline_distribution(dist, f, u).conditional().expectation()


def _unconditional_expectation(dist, f, u):
    return pipeline_distribution(dist, f, u).unconditional().expectation()


def catalog_universe():
    """12 individuals: minority T of 4 and majority S of 8, qualified at 0.9 or 0.6 in equal shares."""
    qualifications = {}
    for i in range(1, 5):
        qualifications[f"t{i}"] = "0.9" if i <= 2 else "0.6"
    for i in range(1, 9):
        qualifications[f"s{i}"] = "0.9" if i <= 4 else "0.6"
    return UniverseSpec.from_qualifications(qualifications)


def _catalog_groups(spec):
    top = [u for u in spec.individuals if spec.qualification(u) == Fraction(9, 10)]
    minority_top = [u for u in top if u.startswith("t")]
    majority_top = [u for u in top if u.startswith("s")]
    medium = [u for u in spec.individuals if u not in top]
    return minority_top, majority_top, medium


def packing_cohorts(spec):
    """Qualified minority members are always hired together; a qualified majority member never is."""
    t_top, s_top, medium = _catalog_groups(spec)
    cohorts = [t_top + list(pair) for pair in combinations(medium, 2)]
    cohorts += [[s] + list(rest) for s in s_top for rest in combinations(medium, 3)]
    return CohortSet.explicit(spec, cohorts)


def splitting_cohorts(spec):
    """A qualified minority member is the only qualified member of their cohort."""
    t_top, s_top, medium = _catalog_groups(spec)
    cohorts = [[t] + list(rest) for t in t_top for rest in combinations(medium, 3)]
    cohorts += [
        list(c) for c in combinations(s_top + medium, 4) if any(x in s_top for x in c)
    ]
    return CohortSet.explicit(spec, cohorts)


def adversarial_universe():
    """Each minority member is marginally behind a majority qualification level."""
    qualifications = {"t1": "0.85", "t2": "0.85", "t3": "0.55", "t4": "0.55"}
    for i in range(1, 9):
        qualifications[f"s{i}"] = "0.9" if i <= 4 else "0.6"
    return UniverseSpec.from_qualifications(qualifications)


def _dominated(spec, cohort):
    """An injective map from the cohort's minority into strictly better majority members."""
    minority = sorted(
        (spec.qualification(u) for u in cohort if u.startswith("t")), reverse=True
    )
    available = sorted(spec.qualification(u) for u in cohort if u.startswith("s"))
    for q in minority:
        better = [i for i, s in enumerate(available) if s > q]
        if not better:
            return False
        available.pop(better[0])
    return True


def adversarial_ranking_cohorts(spec):
    cohorts = [list(c) for c in combinations(spec.individuals, 4) if _dominated(spec, c)]
    return CohortSet.explicit(spec, cohorts)


def _fair_sampling(cohort_set, spec):
    mechanism = StructuredWeightedSampling(cohort_set, spec, check_preconditions=False, solver="float")
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="fairness is not guaranteed", category=UserWarning)
        return mechanism.distribution()


def _fairness_check(dist, spec):
    fair, _ = is_individually_fair(dist, spec)
    return GoldenCheck("law is individually fair", True, fair, fair)


def _quiet_audit(dist, spec, family, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return audit_robustness(dist, spec, family=family, minimize=False, **kwargs)


def _impossibility():
    spec, cohort_set, f = pathological_family()
    dist = CohortDistribution.uniform(cohort_set)
    ids = spec.individuals
    uncond = [_unconditional_expectation(dist, f, u) for u in ids]
    cond = [_conditional_expectation(dist, f, u) for u in ids]
    report = _quiet_audit(dist, spec, [f], alpha=10)
    fair, _ = is_individually_fair(dist, spec)
    checks = [
        GoldenCheck("uniform law is individually fair", True, fair, fair),
        _equal("unconditional expectations (a, b, c)", [Fraction(1, 3), Fraction(1, 6), Fraction(1, 2)], uncond),
        _equal("conditional expectations (a, b, c)", [Fraction(1, 2), Fraction(1, 4), Fraction(3, 4)], cond),
        GoldenCheck("not robust at alpha = 10", False, report.passes(10), not report.passes(10)),
    ]
    return ScenarioResult("impossibility", report, checks)


def _ws_counterexample(sizes=(20, 40, 80), k=3):
    ratios = [weighted_sampling_counterexample(n, k).growth_ratio() for n in sizes]
    logger.info("weighted sampling TV(q2) / D ratios over %s: %s", sizes, ratios)
    checks = [
        GoldenCheck(
            f"TV ratio grows from |U|={a} to |U|={b}", f"> {ra:.6g}", rb, rb > ra
        )
        for (a, ra), (b, rb) in zip(zip(sizes, ratios), zip(sizes[1:], ratios[1:]))
    ]
    return ScenarioResult("ws-counterexample", None, checks)


def _catalog_family(spec):
    return [
        catalog_scoring_function("fixed_bonus_pool", spec),
        catalog_scoring_function("stack_rank_if", spec),
        catalog_scoring_function("promotion", spec),
    ]


def _packing():
    spec = catalog_universe()
    dist = _fair_sampling(packing_cohorts(spec), spec)
    bonus, stack, promote = family = _catalog_family(spec)
    t, s = "t1", "s1"
    checks = [
        _fairness_check(dist, spec),
        _less("bonus: qualified minority < qualified majority",
              _conditional_expectation(dist, bonus, t), _conditional_expectation(dist, bonus, s)),
        _less("stack rank: qualified majority flagged less than qualified minority",
              _conditional_expectation(dist, stack, s), _conditional_expectation(dist, stack, t)),
        _less("promotion: qualified minority < qualified majority",
              _conditional_expectation(dist, promote, t), _conditional_expectation(dist, promote, s)),
        _equal("bonus of a qualified minority member", Fraction(2, 5), _conditional_expectation(dist, bonus, t)),
        _equal("bonus of a qualified majority member", Fraction(19, 40), _conditional_expectation(dist, bonus, s)),
    ]
    report = _quiet_audit(dist, spec, family)
    return ScenarioResult("packing", report, checks)


def _splitting():
    spec = catalog_universe()
    dist = _fair_sampling(splitting_cohorts(spec), spec)
    equal = catalog_scoring_function("equal_treatment", spec)
    t_value = _conditional_expectation(dist, equal, "t1")
    s_value = _conditional_expectation(dist, equal, "s1")
    checks = [
        _fairness_check(dist, spec),
        _equal("equal treatment of a qualified minority member", Fraction(27, 40), t_value),
        _less("equal treatment: qualified minority < qualified majority", t_value, s_value),
    ]
    report = _quiet_audit(dist, spec, [equal])
    return ScenarioResult("splitting", report, checks)


def _adversarial_ranking():
    spec = adversarial_universe()
    dist = _fair_sampling(adversarial_ranking_cohorts(spec), spec)
    exact = catalog_scoring_function("promotion_exact", spec)
    fair = catalog_scoring_function("promotion", spec)
    minority = [_unconditional_expectation(dist, exact, u) for u in ("t1", "t2", "t3", "t4")]
    majority_top = _unconditional_expectation(dist, exact, "s1")
    checks = [
        _fairness_check(dist, spec),
        _equal("minority promotion probability", [0, 0, 0, 0], minority),
        _less("qualified majority is promoted", 0, majority_top),
    ]
    report = _quiet_audit(dist, spec, [exact, fair])
    return ScenarioResult("adversarial-ranking", report, checks)


BONUS_COHORTS = (
    {"Alice": "0.8", "Bob": "0.7", "Carol": "0.5", "Dan": "0.2", "Erin": "0.8"},
    {"Frank": "0.8", "Grace": "0.6", "Harriet": "0.1", "Ivan": "0.2", "Judy": "0.3"},
)


def _bonus_tables():
    first, second = [{u: parse_number(q) for u, q in c.items()} for c in BONUS_COHORTS]
    checks = []
    for label, quals, shares, value in (
        ("first", first, ["0.35", "0.25", "0.05", 0, "0.35"], Fraction(19, 25)),
        ("second", second, ["17/30", "11/30", 0, 0, "1/15"], Fraction(52, 75)),
    ):
        expected = [parse_number(x) for x in shares]
        bonus = fixed_bonus_pool(quals)
        checks.append(_equal(f"{label} cohort bonus shares", expected, list(bonus.values())))
        checks.append(_equal(f"{label} cohort promotion", expected, list(promotion(quals).values())))
        objective = sum(b * quals[u] for u, b in bonus.items())
        checks.append(_equal(f"{label} cohort bonus objective", value, objective))
    checks.append(_equal("first cohort fair stack rank", [0, Fraction(1, 10), Fraction(3, 10), Fraction(3, 5), 0], list(stack_rank_if(first).values())))
    checks.append(_equal("second cohort fair stack rank", [0, 0, Fraction(13, 30), Fraction(1, 3), Fraction(7, 30)], list(stack_rank_if(second).values())))
    checks.append(_equal("first cohort hard stack rank", [0, 0, 0, 1, 0], list(stack_rank_exact(first).values())))
    checks.append(_equal("second cohort hard stack rank", [0, 0, 1, 0, 0], list(stack_rank_exact(second).values())))
    checks.append(_equal("first cohort hard promotion", [Fraction(1, 2), 0, 0, 0, Fraction(1, 2)], list(promotion_exact(first).values())))
    checks.append(_equal("equal treatment at a pool of 100", [60, 40], [
        equal_treatment(first, base=100)["Alice"], equal_treatment(second, base=100)["Frank"]
    ]))

    spec = UniverseSpec.from_qualifications({**BONUS_COHORTS[0], **BONUS_COHORTS[1]})
    cohort_set = CohortSet.explicit(spec, [list(BONUS_COHORTS[0]), list(BONUS_COHORTS[1])])
    family = [catalog_scoring_function(name, spec) for name in ("fixed_bonus_pool", "stack_rank_if", "promotion")]
    report = _quiet_audit(CohortDistribution.uniform(cohort_set), spec, family)
    return ScenarioResult("bonus-tables", report, checks)


def reproduce_scenario(name):
    """Build a canned scenario at desk scale, audit it and run its golden checks."""
    if name == "impossibility":
        return _impossibility()
    elif name == "ws-counterexample":
        return _ws_counterexample()
    elif name == "packing":
        return _packing()
    elif name == "splitting":
        return _splitting()
    elif name == "adversarial-ranking":
        return _adversarial_ranking()
    elif name == "bonus-tables":
        return _bonus_tables()
    raise ValueError(f"scenario must be one of {', '.join(SCENARIOS)}, not {name}")
