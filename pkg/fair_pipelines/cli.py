import argparse
import json
import logging
import sys

import pandas as pd

from fair_pipelines.config.default_args import add_default_args
from fair_pipelines.distances import ScorePMF, mmd
from fair_pipelines.scenarios import (
    SCENARIO_SCHEMA,
    SCENARIOS,
    Scenario,
    ScenarioError,
    load_scenario_file,
    reproduce_scenario,
)
from utility_funcs import parse_number, to_json_number

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

common = argparse.ArgumentParser(add_help=False)
add_default_args(common)

parser = argparse.ArgumentParser(
    prog="fair-pipelines",
    description="Audit cohort selection mechanisms for robustness to post-processing.",
)
subparsers = parser.add_subparsers(dest="command", required=True)

simulate_parser = subparsers.add_parser(
    "simulate", parents=[common], help="Dump the exact cohort law or sampled cohorts."
)
simulate_parser.add_argument("scenario", help="Path to a scenario JSON file.")

audit_parser = subparsers.add_parser(
    "audit", parents=[common], help="Audit a scenario; exits 1 when alpha* exceeds alpha."
)
audit_parser.add_argument("scenario", help="Path to a scenario JSON file.")

mmd_parser = subparsers.add_parser(
    "mmd", parents=[common], help="Mass-moving distance between two inline score pmfs."
)
mmd_parser.add_argument(
    "pmf1", help='Score pmf as "value:mass,value:mass", e.g. "0.6:1/2,0.8:1/2".'
)
mmd_parser.add_argument("pmf2", help="Second score pmf, same format.")

reproduce_parser = subparsers.add_parser(
    "reproduce", parents=[common], help="Run a canned scenario and its golden checks."
)
reproduce_parser.add_argument("name", choices=SCENARIOS, help="Scenario name.")

validate_parser = subparsers.add_parser(
    "validate", parents=[common], help="Validate a scenario file against the schema."
)
validate_parser.add_argument("scenario", nargs="?", default=None, help="Path to a scenario JSON file.")
validate_parser.add_argument(
    "--schema", action="store_true", default=False, help="Print the scenario JSON schema."
)


def parse_pmf(text):
    """ "v:m,v:m" -> ScorePMF with exact values and masses."""
    atoms = []
    for part in text.split(","):
        value, sep, mass = part.partition(":")
        if not sep:
            raise ValueError(f"expected value:mass, got {part!r}")
        atoms.append((parse_number(value), parse_number(mass)))
    return ScorePMF(atoms)


def _emit(payload, frame, out):
    if out == "table":
        print(frame.to_string(index=False))
    else:
        print(json.dumps(payload, indent=2))


def cmd_simulate(args):
    scenario = Scenario(load_scenario_file(args.scenario))
    mechanism = scenario.mechanism
    universe = scenario.universe
    seed = args.seed if args.seed is not None else scenario.options["seed"]
    n = args.montecarlo if args.montecarlo is not None else scenario.options["montecarlo"]
    if n is None or args.exact:
        rows = [
            {"cohort": list(members), "probability": to_json_number(p)}
            for members, p in mechanism.distribution().as_table()
        ]
        payload = {"scenario": scenario.name, "mode": "exact", "law": rows}
    else:
        draws = mechanism.sample_many(n, seed)
        rows = [{"cohort": list(universe.members(m))} for m in draws]
        payload = {"scenario": scenario.name, "mode": "montecarlo", "n": n, "seed": seed, "samples": rows}
    _emit(payload, pd.DataFrame(rows), args.out)
    return EXIT_PASS


def cmd_audit(args):
    scenario = Scenario(load_scenario_file(args.scenario))
    overrides = {
        "seed": args.seed,
        "montecarlo": None if args.exact else args.montecarlo,
        "measures": args.measures,
        "alpha": args.alpha,
    }
    if args.exact:
        scenario.options["montecarlo"] = None
    report = scenario.audit(**overrides)
    frame = report.to_frame()
    if args.out == "table":
        print(frame.to_string(index=False))
        for measure, value in report.alpha_star.items():
            shown = "unmeasured" if value is None else f"{float(value):.6g}"
            print(f"alpha* {measure}: {shown} ({report.alpha_star_basis[measure]})")
        for finding in report.findings:
            print(f"finding: {finding}")
    else:
        print(json.dumps(report.to_dict(), indent=2))
    return EXIT_PASS if report.passes() else EXIT_FAILURE


def cmd_mmd(args):
    g1, g2 = parse_pmf(args.pmf1), parse_pmf(args.pmf2)
    value = mmd(g1, g2)
    payload = {"mmd": to_json_number(value)}
    _emit(payload, pd.DataFrame([{"mmd": float(value)}]), args.out)
    return EXIT_PASS


def cmd_reproduce(args):
    result = reproduce_scenario(args.name)
    frame = pd.DataFrame(
        [{"check": c.name, "passed": c.passed, "actual": str(c.actual)} for c in result.checks]
    )
    _emit(result.to_dict(), frame, args.out)
    return EXIT_PASS if result.passed else EXIT_FAILURE


def cmd_validate(args):
    if args.schema:
        print(json.dumps(SCENARIO_SCHEMA, indent=2))
        return EXIT_PASS
    if args.scenario is None:
        raise ScenarioError([("<arguments>", "validate needs a scenario file or --schema")])
    doc = load_scenario_file(args.scenario)
    payload = {"scenario": args.scenario, "valid": True, "name": doc.get("name")}
    _emit(payload, pd.DataFrame([payload]), args.out)
    return EXIT_PASS


COMMANDS = {
    "simulate": cmd_simulate,
    "audit": cmd_audit,
    "mmd": cmd_mmd,
    "reproduce": cmd_reproduce,
    "validate": cmd_validate,
}


def main(argv=None):
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
