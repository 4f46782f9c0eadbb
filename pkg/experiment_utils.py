"""
Replication harness and reports: empirical maximum distributions, their
comparison with the clumping predictions, the fast-vs-slow doctor table,
the Δ-sweep towards the continuous limit, and the M/M/c identity check.
"""
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

import clumping_utils as cu
import oracle_utils as ou
import sim_utils
from clumping_utils import ContinuousQueueSpec, Discipline, DiscreteQueueSpec, ParameterDomainError

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 10**6
DEFAULT_REPS = 10**4
SUP_DISTANCE_TOL = 0.02
IDENTITY_SUP_TOL = 0.03
IDENTITY_RATE_MIN = 0.99
SIGMA_BAND = 3.0
MIN_ASYMPTOTIC_HORIZON = 10**4
DEFAULT_DELTAS = (1e-2, 1e-3, 1e-4)
RATE_TOL = 0.005    # relative error of the clump rate at the smallest Δ
TAIL_TOL = 0.01     # relative error of the tail coefficient for Δ ≤ 1e−3
MONOTONE_SLACK = 1e-12

MODELS = ("geo1-lasda", "geo2-lasda", "geo1-eas", "mm1", "mm2", "mmc")


def default_jobs():
    """Worker count from QCLUMP_JOBS, 1 when unset."""
    try:
        return max(1, int(os.environ.get("QCLUMP_JOBS", "1")))
    except ValueError:
        logger.warning("ignoring non-integer QCLUMP_JOBS=%r", os.environ.get("QCLUMP_JOBS"))
        return 1


def check_model_spec(model, spec):
    """Raise ParameterDomainError when the spec does not belong to the model family."""
    if model not in MODELS:
        raise ParameterDomainError(f"unknown model '{model}' — expected one of {', '.join(MODELS)}")
    if model.startswith("geo"):
        if not isinstance(spec, DiscreteQueueSpec):
            raise ParameterDomainError(f"model '{model}' takes p and r, not lambda/mu")
        servers = 2 if model == "geo2-lasda" else 1
        discipline = Discipline.EAS if model == "geo1-eas" else Discipline.LAS_DA
        if spec.servers != servers or spec.discipline is not discipline:
            raise ParameterDomainError(
                f"model '{model}' needs servers={servers} and discipline={discipline.value}"
            )
        return
    if not isinstance(spec, ContinuousQueueSpec):
        raise ParameterDomainError(f"model '{model}' takes lambda and mu, not p/r")
    if model == "mm1" and spec.c != 1:
        raise ParameterDomainError("model 'mm1' needs c=1")
    if model == "mm2" and spec.c != 2:
        raise ParameterDomainError("model 'mm2' needs c=2")


# ── Serialisation helpers ─────────────────────────────────────────────────────

def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def dumps_json(payload):
    """Stable JSON: sorted keys, repr floats, no timestamps."""
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"


def format_table(df):
    """Aligned columns, 10 significant digits."""
    return df.to_string(index=False, float_format=lambda v: f"{v:.10g}")


def write_report(report, output=None, fmt="json"):
    """
    Serialise a report (anything with payload() and tables()).
    Returns the text written; writes to `output` when given.
    json: full payload; csv: the first table; text: every table aligned;
    xlsx: one sheet per table (requires an output path).
    """
    tables = report.tables()
    if fmt == "json":
        text = dumps_json(report.payload())
    elif fmt == "csv":
        first = next(iter(tables.values()))
        text = first.to_csv(index=False, float_format="%.17g")
    elif fmt == "text":
        parts = []
        for name, df in tables.items():
            parts.append(f"== {name} ==")
            parts.append(format_table(df))
        passes = report.payload().get("passes")
        if passes:
            parts.append("== checks ==")
            parts.extend(f"{k}: {'PASS' if v else 'FAIL'}" for k, v in sorted(passes.items()))
        text = "\n".join(parts) + "\n"
    elif fmt == "xlsx":
        if not output:
            raise ParameterDomainError("xlsx output needs --output")
        with pd.ExcelWriter(output, engine="openpyxl") as writer:
            for name, df in tables.items():
                df.to_excel(writer, sheet_name=name[:31], index=False)
        return ""
    else:
        raise ParameterDomainError(f"unknown format '{fmt}' — expected json, csv, text or xlsx")

    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


# ── Empirical summaries ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class EmpiricalMaxSummary:
    n: float
    reps: int
    mean: float
    variance: float
    cdf: dict      # level -> P{M ≤ level}
    seed: int

    @property
    def stderr(self):
        return math.sqrt(self.variance / self.reps)

    def cdf_at(self, level):
        if level < min(self.cdf):
            return 0.0
        if level > max(self.cdf):
            return 1.0
        return self.cdf[int(level)]

    def payload(self):
        return {
            "schema": "empirical-max-summary/1",
            "n": self.n,
            "reps": self.reps,
            "mean": self.mean,
            "variance": self.variance,
            "cdf": {str(k): v for k, v in self.cdf.items()},
            "seed": self.seed,
        }

    def tables(self):
        return {"cdf": pd.DataFrame({"level": list(self.cdf), "frequency": list(self.cdf.values())})}


def summarize(levels, n, seed):
    """Sample moments and the empirical CDF over 0 … max(levels)."""
    levels = np.asarray(levels, dtype=np.int64)
    counts = np.bincount(levels, minlength=int(levels.max()) + 1)
    cum = np.cumsum(counts) / levels.size
    cdf = {int(k): float(v) for k, v in enumerate(cum)}
    cdf[max(cdf)] = 1.0
    return EmpiricalMaxSummary(
        n=n,
        reps=int(levels.size),
        mean=float(levels.mean()),
        variance=float(levels.var(ddof=1)) if levels.size > 1 else 0.0,
        cdf=cdf,
        seed=int(seed),
    )


def _one_max(model, spec, n, seed, replication):
    if model in ("geo1-lasda", "geo2-lasda"):
        return sim_utils.sim_geo_lasda(spec, n, seed, replication).max_level
    if model == "geo1-eas":
        return sim_utils.sim_geo_eas(spec.p, spec.r, n, seed, replication, test_mode=spec.test_mode).max_level
    return sim_utils.sim_mmc(spec, n, seed, replication).max_sys


def _replicate_chunk(args):
    model, spec, n, seed, start, stop = args
    return [_one_max(model, spec, n, seed, i) for i in range(start, stop)]


def _chunks(reps, jobs):
    size = math.ceil(reps / jobs)
    return [(i, min(i + size, reps)) for i in range(0, reps, size)]


def replicate(fn_args, reps, jobs, worker):
    """Fan `worker` over contiguous replication ranges; results in replication order."""
    jobs = max(1, min(int(jobs), reps))
    tasks = [fn_args + (start, stop) for start, stop in _chunks(reps, jobs)]
    if jobs == 1:
        parts = [worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(worker, tasks))
    return [v for part in parts for v in part]


def replicate_max(model, spec, n, reps, seed, jobs=1):
    """Run the model's simulator `reps` times on independent streams."""
    check_model_spec(model, spec)
    if reps < 2:
        raise ParameterDomainError(f"replication count must satisfy reps >= 2, got {reps}")
    logger.info("replicating %s %r: n=%g reps=%d seed=%d jobs=%d", model, spec, n, reps, seed, jobs)
    levels = replicate((model, spec, n, seed), reps, jobs, _replicate_chunk)
    return summarize(levels, n, seed)


# ── Prediction vs simulation ──────────────────────────────────────────────────

@dataclass(frozen=True)
class ComparisonReport:
    predicted_mean: float
    empirical_mean: float
    stderr: float
    sup_cdf_distance: float
    passes: dict
    tolerances: dict = field(default_factory=dict)

    def payload(self):
        return {
            "schema": "comparison-report/1",
            "predicted_mean": self.predicted_mean,
            "empirical_mean": self.empirical_mean,
            "stderr": self.stderr,
            "sup_cdf_distance": self.sup_cdf_distance,
            "passes": dict(self.passes),
            "tolerances": dict(self.tolerances),
        }

    def tables(self):
        return {"comparison": pd.DataFrame([{k: v for k, v in self.payload().items()
                                            if k not in ("schema", "passes", "tolerances")}])}


def predicted_cdf_table(summary, asym):
    """Empirical vs predicted P{M ≤ m} over the integer levels that carry mass."""
    hi = max(max(summary.cdf), math.ceil(cu.max_quantile(asym, summary.n, 0.9999)))
    levels = np.arange(0, hi + 1)
    return pd.DataFrame({
        "level": levels,
        "empirical": [summary.cdf_at(m) for m in levels],
        "predicted": cu.max_cdf(asym, summary.n, levels),
    })


def sup_cdf_distance(summary, asym):
    table = predicted_cdf_table(summary, asym)
    return float(np.max(np.abs(table["empirical"] - table["predicted"])))


def compare_prediction(summary, asym, sup_tol=SUP_DISTANCE_TOL, sigmas=SIGMA_BAND):
    """
    Predicted P{M_n ≤ m} = exp(−A·n·ω^m), the clumping form exp(−π_k n/E(C))
    with k = m + 1, against the empirical CDF; predicted mean against the
    empirical mean with a `sigmas`-stderr band.
    """
    if summary.n < MIN_ASYMPTOTIC_HORIZON:
        logger.warning("horizon %g is below %d; the asymptotic regime may not apply",
                       summary.n, MIN_ASYMPTOTIC_HORIZON)
    predicted = cu.expected_max(asym, summary.n)
    distance = sup_cdf_distance(summary, asym)
    band = sigmas * summary.stderr
    return ComparisonReport(
        predicted_mean=predicted,
        empirical_mean=summary.mean,
        stderr=summary.stderr,
        sup_cdf_distance=distance,
        passes={
            "mean_within_band": bool(abs(summary.mean - predicted) <= band),
            "cdf_within_tolerance": bool(distance < sup_tol),
        },
        tolerances={"sigmas": sigmas, "sup_cdf_distance": sup_tol},
    )


# ── Table reports ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TableReport:
    name: str
    table: pd.DataFrame
    passes: dict
    tolerances: dict = field(default_factory=dict)

    def payload(self):
        return {
            "schema": f"{self.name}/1",
            "rows": self.table.to_dict(orient="records"),
            "passes": dict(self.passes),
            "tolerances": dict(self.tolerances),
        }

    def tables(self):
        return {self.name: self.table}

    @property
    def passed(self):
        return all(self.passes.values())


DOCTORS = (
    ("discrete", "Geo/Geo/1 fast", DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1)),
    ("discrete", "Geo/Geo/2 slow", DiscreteQueueSpec(p=1 / 3, r=1 / 4, servers=2)),
    ("continuous", "M/M/1 fast", ContinuousQueueSpec(lam=1 / 3, mu=1 / 2, c=1)),
    ("continuous", "M/M/2 slow", ContinuousQueueSpec(lam=1 / 3, mu=1 / 4, c=2)),
)


def doctor_scenario(horizon=DEFAULT_HORIZON):
    """
    One fast doctor against two slow ones, in discrete and continuous time.
    "Fast wins" means a strictly smaller expected maximum at `horizon` and a
    strictly smaller mean length.
    """
    rows = []
    for setting, label, spec in DOCTORS:
        asym = cu.asymptotics_for(spec)
        rows.append({
            "setting": setting,
            "queue": label,
            "slope": asym.slope,
            "intercept": asym.intercept,
            "expected_max": cu.expected_max(asym, horizon),
            "mean_length": cu.mean_queue_length(spec),
        })
    table = pd.DataFrame(rows)

    passes = {}
    for setting in ("discrete", "continuous"):
        fast, slow = table[table["setting"] == setting].to_dict(orient="records")
        passes[f"{setting}_fast_wins"] = bool(
            fast["expected_max"] < slow["expected_max"] and fast["mean_length"] < slow["mean_length"]
        )
    return TableReport(name="doctor-scenario", table=table, passes=passes, tolerances={"horizon": horizon})


def _nonincreasing(values):
    return all(b <= a + MONOTONE_SLACK for a, b in zip(values, values[1:]))


def delta_sweep(spec, deltas=DEFAULT_DELTAS):
    """
    Discretise an M/M/c (c ≤ 2) at each Δ and tabulate the clump rate
    1/(E(C)Δ), the tail coefficient A·ω/Δ and the mean length against their
    continuous targets. Rows are ordered by decreasing Δ.
    """
    deltas = sorted(deltas, reverse=True)
    target_rate = spec.c * spec.mu - spec.lam
    target_tail = cu.continuous_asymptotics(spec).a
    target_mean = cu.mean_queue_length(spec)

    rows = []
    for delta in deltas:
        dspec = cu.discretize(spec, delta)
        rate = cu.clump_rate(dspec, delta)
        tail = cu.continuum_tail_coefficient(dspec, delta)
        mean = cu.mean_queue_length(dspec)
        rows.append({
            "delta": delta,
            "p": dspec.p,
            "r": dspec.r,
            "omega": cu.decay_ratio(dspec),
            "clump_rate": rate,
            "clump_rate_target": target_rate,
            "clump_rate_rel_error": abs(rate - target_rate) / target_rate,
            "tail_coef": tail,
            "tail_coef_target": target_tail,
            "tail_coef_rel_error": abs(tail - target_tail) / target_tail,
            "mean_length": mean,
            "mean_length_target": target_mean,
            "mean_length_rel_error": abs(mean - target_mean) / target_mean,
        })
    table = pd.DataFrame(rows)

    small = table[table["delta"] <= 1e-3]
    passes = {
        "clump_rate_error_nonincreasing": _nonincreasing(list(table["clump_rate_rel_error"])),
        "tail_coef_error_nonincreasing": _nonincreasing(list(table["tail_coef_rel_error"])),
        "mean_length_error_nonincreasing": _nonincreasing(list(table["mean_length_rel_error"])),
        "clump_rate_converged": bool(table["clump_rate_rel_error"].iloc[-1] < RATE_TOL),
        "tail_coef_converged": bool(small.empty or (small["tail_coef_rel_error"] < TAIL_TOL).all()),
    }
    return TableReport(
        name="delta-sweep",
        table=table,
        passes=passes,
        tolerances={"clump_rate": RATE_TOL, "tail_coef": TAIL_TOL, "monotone_slack": MONOTONE_SLACK},
    )


# ── M/M/c identity and the lazy-walk comparison ───────────────────────────────

def _mmc_chunk(args):
    spec, x, seed, start, stop = args
    runs = [sim_utils.sim_mmc(spec, x, seed, i) for i in range(start, stop)]
    return [(run.max_sys, run.max_que) for run in runs]


@dataclass(frozen=True)
class IdentityReport:
    identity_rate: float
    summary: EmpiricalMaxSummary
    sup_cdf_distance: float
    passes: dict
    tolerances: dict

    def payload(self):
        return {
            "schema": "mmc-identity/1",
            "identity_rate": self.identity_rate,
            "summary": self.summary.payload(),
            "sup_cdf_distance": self.sup_cdf_distance,
            "passes": dict(self.passes),
            "tolerances": dict(self.tolerances),
        }

    def tables(self):
        return self.summary.tables()


def system_queue_identity(spec, x, reps, seed, jobs=1):
    """
    Frequency of max L_sys = c + max L_que over M/M/c runs, and the distance
    between the empirical law of max L_sys and the continuous prediction
    (c ≤ 2 only; None otherwise, with no matching pass flag).
    """
    if reps < 2:
        raise ParameterDomainError(f"replication count must satisfy reps >= 2, got {reps}")
    pairs = replicate((spec, x, seed), reps, jobs, _mmc_chunk)
    sys_max = np.array([a for a, _ in pairs])
    que_max = np.array([b for _, b in pairs])
    rate = float(np.mean(sys_max == spec.c + que_max))
    summary = summarize(sys_max, x, seed)

    passes = {"identity_holds": bool(rate >= IDENTITY_RATE_MIN)}
    tolerances = {"identity_rate": IDENTITY_RATE_MIN}
    distance = None
    if spec.c <= 2:
        distance = sup_cdf_distance(summary, cu.continuous_asymptotics(spec))
        passes["matches_continuous_law"] = bool(distance < IDENTITY_SUP_TOL)
        tolerances["sup_cdf_distance"] = IDENTITY_SUP_TOL
    return IdentityReport(
        identity_rate=rate,
        summary=summary,
        sup_cdf_distance=distance,
        passes=passes,
        tolerances=tolerances,
    )


def lazy_walk_comparison(p, r, n, reps, seed, jobs=1, sigmas=SIGMA_BAND):
    """
    Simulated EAS mean maximum against the clumping E(M_n) and the
    reference-only lazy-walk E′(M_n).
    """
    spec = DiscreteQueueSpec(p=p, r=r, servers=1, discipline=Discipline.EAS)
    summary = replicate_max("geo1-eas", spec, n, reps, seed, jobs)
    clumping = cu.expected_max(cu.extreme_asymptotics(spec), n)
    lazy = cu.eas_lazy_walk_expected_max(p, r, n)
    band = sigmas * summary.stderr
    offset = math.log(spec.p * spec.s + spec.q * spec.r) / math.log(spec.q * spec.r / (spec.p * spec.s))
    table = pd.DataFrame([
        {"formula": "clumping E(M_n)", "value": clumping, "flag": "", "gap_in_stderr": (summary.mean - clumping) / summary.stderr},
        {"formula": "lazy walk E'(M_n)", "value": lazy, "flag": cu.LAZY_WALK_FLAG, "gap_in_stderr": (summary.mean - lazy) / summary.stderr},
        {"formula": "simulated mean", "value": summary.mean, "flag": "", "gap_in_stderr": 0.0},
    ])
    return TableReport(
        name="lazy-walk",
        table=table,
        passes={
            "offset_identity": bool(abs((lazy - clumping) - offset) < 1e-12),
            "matches_clumping": bool(abs(summary.mean - clumping) <= band),
            "rejects_lazy_walk": bool(abs(summary.mean - lazy) > band),
        },
        tolerances={"sigmas": sigmas, "offset_identity": 1e-12},
    )


# ── Composite reports for the command line ────────────────────────────────────

@dataclass(frozen=True)
class SimulationReport:
    model: str
    summary: EmpiricalMaxSummary
    comparison: ComparisonReport = None

    @property
    def passes(self):
        return dict(self.comparison.passes) if self.comparison else {}

    def payload(self):
        out = {
            "schema": "simulation-report/1",
            "model": self.model,
            "summary": self.summary.payload(),
        }
        if self.comparison is not None:
            out["comparison"] = self.comparison.payload()
            out["passes"] = self.passes
        return out

    def tables(self):
        out = self.summary.tables()
        if self.comparison is not None:
            out.update(self.comparison.tables())
        return out


def simulate_model(model, spec, n, reps, seed, jobs=1, compare=False):
    summary = replicate_max(model, spec, n, reps, seed, jobs)
    comparison = compare_prediction(summary, cu.asymptotics_for(spec)) if compare else None
    return SimulationReport(model=model, summary=summary, comparison=comparison)


@dataclass(frozen=True)
class ValidationReport:
    grid: pd.DataFrame
    constants: pd.DataFrame
    acceptance: pd.DataFrame = None

    @property
    def passes(self):
        out = {
            "oracle_grid": bool(self.grid["passed"].all()),
            "printed_constants": bool(self.constants["passed"].all()),
        }
        if self.acceptance is not None:
            out["acceptance"] = bool(self.acceptance["passed"].all())
        return out

    def payload(self):
        out = {
            "schema": "validation-report/1",
            "grid": self.grid.to_dict(orient="records"),
            "constants": self.constants.to_dict(orient="records"),
            "passes": self.passes,
        }
        if self.acceptance is not None:
            out["acceptance"] = self.acceptance.to_dict(orient="records")
        return out

    def tables(self):
        out = {"grid": self.grid, "constants": self.constants}
        if self.acceptance is not None:
            out["acceptance"] = self.acceptance
        return out


ACCEPTANCE_RUNS = (
    ("geo1-lasda", DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1)),
    ("geo2-lasda", DiscreteQueueSpec(p=1 / 3, r=1 / 4, servers=2)),
    ("geo1-eas", DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1, discipline=Discipline.EAS)),
)


def acceptance_table(n=DEFAULT_HORIZON, reps=DEFAULT_REPS, seed=0, jobs=1):
    """Full-scale simulation, continuum and identity checks; one row per check."""
    rows = []

    def add(check, passed, detail):
        rows.append({"check": check, "passed": bool(passed), "detail": detail})

    for model, spec in ACCEPTANCE_RUNS:
        report = simulate_model(model, spec, n, reps, seed, jobs, compare=True)
        cmp = report.comparison
        add(f"{model}.mean_within_band", cmp.passes["mean_within_band"],
            f"empirical {cmp.empirical_mean:.6g} vs predicted {cmp.predicted_mean:.6g} (stderr {cmp.stderr:.3g})")
        add(f"{model}.cdf_within_tolerance", cmp.passes["cdf_within_tolerance"],
            f"sup distance {cmp.sup_cdf_distance:.4g}")

    for label, cspec in (("mm1", DOCTORS[2][2]), ("mm2", DOCTORS[3][2])):
        sweep = delta_sweep(cspec)
        for name, ok in sweep.passes.items():
            add(f"{label}.delta_sweep.{name}", ok, "")

    identity = system_queue_identity(DOCTORS[3][2], n, max(2, reps // 10), seed, jobs)
    for name, ok in identity.passes.items():
        add(f"mm2.{name}", ok, f"rate {identity.identity_rate:.4g}, sup {identity.sup_cdf_distance:.4g}")

    lazy = lazy_walk_comparison(1 / 3, 1 / 2, n, reps, seed, jobs)
    for name, ok in lazy.passes.items():
        add(f"geo1-eas.{name}", ok, "")

    return pd.DataFrame(rows)


def validation_report(models=ou.GRID_MODELS, K=ou.DEFAULT_TRUNCATION, J=ou.DEFAULT_HALF_WIDTH,
                      jobs=1, full=False, seed=0):
    """Oracle grid plus printed constants; with full=True also the acceptance runs."""
    grid = ou.verification_report(models, K, J, jobs)
    constants = ou.worked_example_checks()
    acceptance = acceptance_table(seed=seed, jobs=jobs) if full else None
    return ValidationReport(grid=grid, constants=constants, acceptance=acceptance)
