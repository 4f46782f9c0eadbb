"""
Command-line front end: predict, simulate, validate, compare-doctors,
delta-sweep, identity and lazy-walk.

Exit status: 0 when every embedded check passes, 1 when a check fails,
2 on invalid parameters.
"""
import argparse
import logging
import math
import sys
from dataclasses import dataclass
from fractions import Fraction

import pandas as pd

import clumping_utils as cu
import experiment_utils as eu
import sim_utils
from clumping_utils import (
    ContinuousQueueSpec,
    Discipline,
    DiscreteQueueSpec,
    ParameterDomainError,
    ToleranceNotMetError,
)

logger = logging.getLogger("qclump")

FORMATS = ("json", "csv", "text", "xlsx")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2


def parse_number(value):
    """
    Parse a rate, probability or horizon.
    Accepts decimals, simple fractions and scientific notation.

    Examples:
        "0.25" -> 0.25
        "1/3"  -> 0.3333333333333333
        "1e6"  -> 1000000.0
    Raises ValueError with a descriptive message on bad syntax.
    """
    text = str(value).strip().replace(" ", "")
    if not text:
        raise ValueError("empty number")
    if "/" in text:
        parts = text.split("/")
        if len(parts) != 2 or not all(parts):
            raise ValueError(f"Invalid fraction '{value}' — use format like '1/3'")
        try:
            frac = Fraction(parts[0]) / Fraction(parts[1])
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"Invalid fraction '{value}' — numerator and denominator must be numbers, "
                             "denominator non-zero") from None
        return float(frac)
    try:
        number = float(text)
    except ValueError:
        raise ValueError(f"Invalid number '{value}' — use a decimal, a fraction like '1/3' or '1e6'") from None
    if not math.isfinite(number):
        raise ValueError(f"Invalid number '{value}' — must be finite")
    return number


def parse_count(value):
    """Positive integer, scientific notation allowed ("1e4")."""
    number = parse_number(value)
    if number < 1 or not number.is_integer():
        raise ValueError(f"Invalid count '{value}' — must be a positive integer")
    return int(number)


def _arg_type(parser_fn):
    def convert(value):
        try:
            return parser_fn(value)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    convert.__name__ = parser_fn.__name__
    return convert


# ── Run configuration ─────────────────────────────────────────────────────────

@dataclass
class RunConfig:
    command: str
    model: str = None
    p: float = None
    r: float = None
    lam: float = None
    mu: float = None
    c: int = None
    horizon: float = eu.DEFAULT_HORIZON
    reps: int = eu.DEFAULT_REPS
    seed: int = 0
    jobs: int = 1
    output: str = None
    fmt: str = "text"
    compare: bool = False
    full: bool = False
    trace: str = None
    deltas: tuple = eu.DEFAULT_DELTAS

    def build_spec(self):
        """Spec for the model family; parameter set and stability checked here."""
        if self.model is None:
            raise ParameterDomainError(f"command '{self.command}' needs --model")
        if self.model.startswith("geo"):
            if self.p is None or self.r is None:
                raise ParameterDomainError(f"model '{self.model}' needs --p and --r")
            if self.lam is not None or self.mu is not None:
                raise ParameterDomainError(f"model '{self.model}' takes --p/--r, not --lambda/--mu")
            if self.c is not None:
                raise ParameterDomainError(f"model '{self.model}' has a fixed server count; --c is for mmc only")
            return DiscreteQueueSpec(
                p=self.p,
                r=self.r,
                servers=2 if self.model == "geo2-lasda" else 1,
                discipline=Discipline.EAS if self.model == "geo1-eas" else Discipline.LAS_DA,
            )
        if self.lam is None or self.mu is None:
            raise ParameterDomainError(f"model '{self.model}' needs --lambda and --mu")
        if self.p is not None or self.r is not None:
            raise ParameterDomainError(f"model '{self.model}' takes --lambda/--mu, not --p/--r")
        fixed = {"mm1": 1, "mm2": 2}
        if self.model in fixed:
            if self.c is not None:
                raise ParameterDomainError(f"model '{self.model}' has a fixed server count; --c is for mmc only")
            c = fixed[self.model]
        else:
            c = 1 if self.c is None else self.c
        return ContinuousQueueSpec(lam=self.lam, mu=self.mu, c=c)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qclump",
        description="Extreme-value predictions and simulations for Geo/Geo/c and M/M/c queue lengths.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, model=True, seed=False):
        if model:
            p.add_argument("--model", choices=eu.MODELS, required=True)
            p.add_argument("--p", type=_arg_type(parse_number), help="arrival probability per step")
            p.add_argument("--r", type=_arg_type(parse_number), help="departure probability per step")
            p.add_argument("--lambda", dest="lam", type=_arg_type(parse_number), help="arrival rate")
            p.add_argument("--mu", type=_arg_type(parse_number), help="service rate")
            p.add_argument("--c", type=_arg_type(parse_count), help="servers (mmc only, default 1)")
        if seed:
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--jobs", type=_arg_type(parse_count), default=eu.default_jobs(),
                           help="worker processes (default: $QCLUMP_JOBS or 1)")
        p.add_argument("--output", help="write the report here instead of stdout")
        p.add_argument("--format", dest="fmt", choices=FORMATS, default="text")

    horizon_help = "steps n (discrete) or elapsed time x (continuous); scientific notation allowed"

    p = sub.add_parser("predict", help="closed-form asymptotics, expected maximum and mean length")
    common(p)
    p.add_argument("--n", "--x", dest="horizon", type=_arg_type(parse_number), default=eu.DEFAULT_HORIZON,
                   help=horizon_help)

    p = sub.add_parser("simulate", help="replicate a simulator and summarise the maxima")
    common(p, seed=True)
    p.add_argument("--n", "--x", dest="horizon", type=_arg_type(parse_number), default=eu.DEFAULT_HORIZON,
                   help=horizon_help)
    p.add_argument("--reps", type=_arg_type(parse_count), default=eu.DEFAULT_REPS)
    p.add_argument("--compare", action="store_true", help="also judge the sample against the prediction")
    p.add_argument("--trace", help="CSV of (step, u) for replication 0 (discrete models)")

    p = sub.add_parser("validate", help="oracle-vs-closed-form grid and printed constants")
    common(p, model=False, seed=True)
    p.add_argument("--grid", choices=("default",), default="default")
    p.add_argument("--full", action="store_true", help="add the full-scale simulation acceptance runs")

    p = sub.add_parser("compare-doctors", help="one fast server against two slow ones")
    common(p, model=False)
    p.add_argument("--n", "--x", dest="horizon", type=_arg_type(parse_number), default=eu.DEFAULT_HORIZON,
                   help=horizon_help)

    p = sub.add_parser("delta-sweep", help="discretised M/M/c against its continuous limit")
    common(p, model=False)
    p.add_argument("--lambda", dest="lam", type=_arg_type(parse_number), default=1 / 3)
    p.add_argument("--mu", type=_arg_type(parse_number), default=1 / 4)
    p.add_argument("--c", type=_arg_type(parse_count), default=2)
    p.add_argument("--deltas", type=_arg_type(parse_number), nargs="+", default=list(eu.DEFAULT_DELTAS))

    p = sub.add_parser("identity", help="max L_sys = c + max L_que over M/M/c runs")
    common(p, model=False, seed=True)
    p.add_argument("--lambda", dest="lam", type=_arg_type(parse_number), default=1 / 3)
    p.add_argument("--mu", type=_arg_type(parse_number), default=1 / 4)
    p.add_argument("--c", type=_arg_type(parse_count), default=2)
    p.add_argument("--x", dest="horizon", type=_arg_type(parse_number), default=eu.DEFAULT_HORIZON)
    p.add_argument("--reps", type=_arg_type(parse_count), default=10**3)

    p = sub.add_parser("lazy-walk", help="EAS simulation against the clumping and lazy-walk means")
    common(p, model=False, seed=True)
    p.add_argument("--p", type=_arg_type(parse_number), default=1 / 3)
    p.add_argument("--r", type=_arg_type(parse_number), default=1 / 2)
    p.add_argument("--n", dest="horizon", type=_arg_type(parse_number), default=eu.DEFAULT_HORIZON)
    p.add_argument("--reps", type=_arg_type(parse_count), default=eu.DEFAULT_REPS)

    return parser


def config_from_args(args):
    values = vars(args).copy()
    values.pop("verbose", None)
    values.pop("grid", None)
    if "deltas" in values:
        values["deltas"] = tuple(values["deltas"])
    known = RunConfig.__dataclass_fields__
    return RunConfig(**{k: v for k, v in values.items() if k in known})


# ── Commands ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PredictionReport:
    model: str
    spec: object
    horizon: float
    asymptotics: cu.ExtremeAsymptotics
    expected_max: float
    mean_length: float

    @property
    def passes(self):
        return {}

    def payload(self):
        return {
            "schema": "prediction/1",
            "model": self.model,
            "parameters": _spec_parameters(self.spec),
            "horizon": self.horizon,
            **self.asymptotics.as_dict(),
            "expected_max": self.expected_max,
            "mean_queue_length": self.mean_length,
        }

    def tables(self):
        payload = self.payload()
        rows = [{"quantity": k, "value": v} for k, v in payload.items()
                if isinstance(v, float) and k != "horizon"]
        return {"prediction": pd.DataFrame(rows)}


def _spec_parameters(spec):
    if isinstance(spec, ContinuousQueueSpec):
        return {"lambda": spec.lam, "mu": spec.mu, "c": spec.c}
    return {"p": spec.p, "r": spec.r, "servers": spec.servers, "discipline": spec.discipline.value}


def run_predict(config):
    spec = config.build_spec()
    asym = cu.asymptotics_for(spec)
    return PredictionReport(
        model=config.model,
        spec=spec,
        horizon=float(config.horizon),
        asymptotics=asym,
        expected_max=cu.expected_max(asym, config.horizon),
        mean_length=cu.mean_queue_length(spec),
    )


def run_simulate(config):
    spec = config.build_spec()
    if config.trace:
        if not isinstance(spec, DiscreteQueueSpec):
            raise ParameterDomainError("--trace is available for discrete models only")
        sim_utils.trace_path(spec, int(config.horizon), config.seed).to_csv(config.trace, index=False)
        logger.info("wrote trace of replication 0 to %s", config.trace)
    return eu.simulate_model(config.model, spec, config.horizon, config.reps, config.seed,
                             config.jobs, compare=config.compare)


def run_validate(config):
    return eu.validation_report(jobs=config.jobs, full=config.full, seed=config.seed)


def run_compare_doctors(config):
    return eu.doctor_scenario(config.horizon)


def run_delta_sweep(config):
    spec = ContinuousQueueSpec(lam=config.lam, mu=config.mu, c=config.c)
    return eu.delta_sweep(spec, config.deltas)


def run_identity(config):
    spec = ContinuousQueueSpec(lam=config.lam, mu=config.mu, c=config.c)
    return eu.system_queue_identity(spec, config.horizon, config.reps, config.seed, config.jobs)


def run_lazy_walk(config):
    return eu.lazy_walk_comparison(config.p, config.r, config.horizon, config.reps, config.seed, config.jobs)


RUNNERS = {
    "predict": run_predict,
    "simulate": run_simulate,
    "validate": run_validate,
    "compare-doctors": run_compare_doctors,
    "delta-sweep": run_delta_sweep,
    "identity": run_identity,
    "lazy-walk": run_lazy_walk,
}


def run(config, stdout=None):
    """Execute one command; returns the exit status."""
    stdout = stdout or sys.stdout
    try:
        report = RUNNERS[config.command](config)
        text = eu.write_report(report, config.output, config.fmt)
    except ValueError as exc:
        logger.debug("invalid parameters", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ToleranceNotMetError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED

    if text and not config.output:
        stdout.write(text)

    failed = sorted(k for k, ok in getattr(report, "passes", {}).items() if not ok)
    if failed:
        print(f"checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def configure_logging(verbosity):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
