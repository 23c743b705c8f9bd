from fair_pipelines.audit import MEASURES


def _measures(value):
    measures = [m.strip() for m in value.split(",") if m.strip()]
    unknown = [m for m in measures if m not in MEASURES]
    if unknown or not measures:
        raise ValueError(f"measures must be a comma-separated subset of {', '.join(MEASURES)}")
    return measures


_measures.__name__ = "measures"


def add_default_args(parser):
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Seed for every sampler and Monte Carlo estimate. Identical scenario and seed give "
        "identical output. Overrides the scenario's audit.seed.",
    )
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument(
        "--exact",
        action="store_true",
        default=False,
        help="Use the exact cohort distribution. This is the default, and only feasible at desk "
        "scale (|U| <= 20 for a single mechanism).",
    )
    mode.add_argument(
        "--montecarlo",
        type=int,
        default=None,
        metavar="N",
        help="Estimate from N sampled cohorts instead of the exact law. Reports carry a "
        "3-sigma binomial confidence radius.",
    )
    parser.add_argument(
        "--measures",
        type=_measures,
        default=None,
        help="Comma-separated distances to audit, from uncond-e, cond-e, uncond-mmd and "
        "cond-mmd. Defaults to the scenario's audit.measures, or all four.",
    )
    parser.add_argument(
        "--alpha",
        type=str,
        default=None,
        help="Robustness level the audit is judged against. Accepts decimals or fractions such "
        "as 1/2. The audit passes when alpha* <= alpha for every requested measure.",
    )
    parser.add_argument(
        "--out",
        type=str,
        choices=["json", "table"],
        default="json",
        help="Report format written to standard output.",
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        default=False,
        help="Log at DEBUG level to standard error.",
    )
