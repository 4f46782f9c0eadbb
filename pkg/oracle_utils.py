"""
Brute-force numerical checks of the closed forms in clumping_utils:
truncated stationary solves of the transition matrices, a truncated linear
system for the hitting probabilities ν_j, and a Monte-Carlo return estimate.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.sparse import lil_matrix
from scipy.sparse.linalg import spsolve

import clumping_utils as cu
from clumping_utils import Discipline, DiscreteQueueSpec, ParameterDomainError, ToleranceNotMetError

logger = logging.getLogger(__name__)

DEFAULT_TRUNCATION = 120    # K: states {0, …, K}
DEFAULT_HALF_WIDTH = 200    # J: positions {−J, …, J}
STATIONARY_TOL = 1e-10
HITTING_TOL = 1e-8
STABILITY_TOL = 1e-9        # allowed shift between J and 2J (or K and 2K)
ROW_SUM_TOL = 1e-14
TAIL_NEGLIGIBLE = 1e-13     # ω^K below this means the truncation is harmless
ESCAPE_PROB = 1e-12         # Monte-Carlo walkers this unlikely to return are retired
RESCALE_AT = 1e100          # GTH back-substitution renormalises past this


# ── Truncated transition matrices ─────────────────────────────────────────────

@dataclass(frozen=True)
class TruncatedChain:
    size: int
    rows: np.ndarray


def build_truncated_chain(spec, K):
    """
    Transition matrix on {0, …, K}. Mass that would leave through K is
    folded back onto state K, so every row still sums to one.
    """
    p, q, r, s = spec.p, spec.q, spec.r, spec.s
    P = np.zeros((K + 1, K + 1))

    if spec.discipline is Discipline.EAS:
        P[0, 0], P[0, 1] = p * r + q, p * s
        for i in range(1, K + 1):
            P[i, i - 1] = q * r
            P[i, i] = p * r + q * s
            if i < K:
                P[i, i + 1] = p * s
            else:
                P[i, i] += p * s
    elif spec.servers == 1:
        P[0, 0], P[0, 1] = q, p
        for i in range(1, K + 1):
            P[i, i - 1] = q * r
            P[i, i] = p * r + q * s
            if i < K:
                P[i, i + 1] = p * s
            else:
                P[i, i] += p * s
    else:
        P[0, 0], P[0, 1] = q, p
        P[1, 0], P[1, 1], P[1, 2] = q * r, p * r + q * s, p * s
        for i in range(2, K + 1):
            P[i, i - 2] = q * r * r
            P[i, i - 1] = p * r * r + 2 * q * r * s
            P[i, i] = 2 * p * r * s + q * s * s
            if i < K:
                P[i, i + 1] = p * s * s
            else:
                P[i, i] += p * s * s

    row_err = np.max(np.abs(P.sum(axis=1) - 1.0))
    if row_err > ROW_SUM_TOL:
        raise ToleranceNotMetError(f"transition rows sum to 1 only within {row_err:.3e}", row_err)
    return TruncatedChain(size=K + 1, rows=P)


def gth_solve(A):
    """
    Stationary distribution of an irreducible stochastic matrix by the
    Grassmann-Taksar-Heyman elimination, which only ever adds nonnegative
    numbers and so keeps full relative accuracy in the far tail.
    """
    A1 = np.array(A, dtype=float)
    if A1.ndim != 2 or A1.shape[0] != A1.shape[1]:
        raise ValueError("matrix must be square")
    n = A1.shape[0]
    x = np.zeros(n)

    for i in range(n - 1):
        scale = np.sum(A1[i, i + 1:n])
        if scale <= 0:
            # reducible truncation; only {0, …, i} is recurrent
            raise ToleranceNotMetError(f"truncated chain is reducible at state {i}")
        A1[i + 1:n, i] /= scale
        A1[i + 1:n, i + 1:n] += np.outer(A1[i + 1:n, i], A1[i, i + 1:n])

    x[n - 1] = 1.0
    for i in range(n - 2, -1, -1):
        x[i] = np.dot(x[i + 1:n], A1[i + 1:n, i])
        # unnormalised weights grow like omega^-(n-1-i); keep them finite
        if x[i] > RESCALE_AT:
            x[i:] /= x[i]

    return x / np.sum(x)


def truncated_stationary(spec, K=DEFAULT_TRUNCATION):
    """Solve πP = π, Σπ = 1 on the K-truncation of the spec's chain."""
    if K < 10:
        raise ParameterDomainError(f"truncation must satisfy K >= 10, got {K}")
    chain = build_truncated_chain(spec, K)
    return gth_solve(chain.rows)


# ── ν-recursions ──────────────────────────────────────────────────────────────

def increment_law(spec):
    """Step distribution of the two-server walk away from the boundary."""
    p, q, r, s = spec.p, spec.q, spec.r, spec.s
    return {
        -2: q * r * r,
        -1: p * r * r + 2 * q * r * s,
        0: 2 * p * r * s + q * s * s,
        1: p * s * s,
    }


def increment_drift(spec):
    """ps² − (pr² + 2qrs) − 2qr²; negative exactly when p < 2r."""
    law = increment_law(spec)
    return sum(step * prob for step, prob in law.items())


def _solve_hitting(spec, J):
    """
    h(x) = P{walker started at x ever hits 0}, x ∈ (−J, J) \\ {0},
    with h(0) = 1 inside the recursion, h(≤ −J) = 0 and h(≥ J) = 1.
    ν_j = h(−j).
    """
    law = increment_law(spec)
    positions = [x for x in range(-J + 1, J) if x != 0]
    index = {x: i for i, x in enumerate(positions)}

    A = lil_matrix((len(positions), len(positions)))
    b = np.zeros(len(positions))

    for x, i in index.items():
        A[i, i] += 1.0
        for step, prob in law.items():
            y = x + step
            if y in index:
                A[i, index[y]] -= prob
            elif y == 0 or y >= J:
                b[i] += prob
            # y <= −J contributes h = 0

    h = spsolve(A.tocsr(), b)

    def at(x):
        if x == 0 or x >= J:
            return 1.0
        if x <= -J:
            return 0.0
        return float(h[index[x]])

    nu0 = law[1] * at(1) + law[0] + law[-1] * at(-1) + law[-2] * at(-2)
    return nu0, at(-1), at(1)


def hitting_system(spec, J=DEFAULT_HALF_WIDTH):
    """
    (ν₀, ν₁, ν₋₁) from the truncated linear system, checked for stability
    against the same solve at 2J.
    """
    if spec.servers != 2:
        raise cu.UnsupportedModelError("the hitting system is defined for two servers only")
    if J < 50:
        raise ParameterDomainError(f"half-width must satisfy J >= 50, got {J}")

    first = _solve_hitting(spec, J)
    second = _solve_hitting(spec, 2 * J)
    shift = max(abs(u - v) for u, v in zip(first, second))
    if shift > STABILITY_TOL:
        logger.warning("hitting system moved by %.3e between J=%d and J=%d", shift, J, 2 * J)
        raise ToleranceNotMetError(
            f"hitting probabilities shift by {shift:.3e} between J={J} and 2J", shift
        )
    return first


# ── Monte-Carlo return probability ────────────────────────────────────────────

@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    reps: int

    def brackets(self, value, sigmas=3.0):
        return abs(self.estimate - value) <= sigmas * self.stderr


def return_prob_mc(spec, reps=10**5, horizon=10**4, seed=0):
    """
    Fraction of walks started at 0 that come back to 0 within `horizon`
    steps. Walkers deeper than log_ω(ESCAPE_PROB) below the origin are
    retired as non-returning; from −j the walk is upward skip-free, so
    their remaining chance is ω^j.
    """
    if spec.servers != 2:
        raise cu.UnsupportedModelError("return probability is defined for the two-server walk")
    law = increment_law(spec)
    steps = np.array(sorted(law))
    cum = np.cumsum([law[k] for k in steps])

    omega = cu.decay_ratio(spec)
    depth = max(1, math.ceil(math.log(ESCAPE_PROB) / math.log(omega)))

    rng = np.random.default_rng([seed, 0])
    pos = np.zeros(reps, dtype=np.int64)
    returned = np.zeros(reps, dtype=bool)
    active = np.arange(reps)

    for _ in range(horizon):
        if active.size == 0:
            break
        draw = np.minimum(np.searchsorted(cum, rng.random(active.size), side="right"), steps.size - 1)
        pos[active] += steps[draw]
        here = pos[active]
        hit = here == 0
        returned[active[hit]] = True
        active = active[~hit & (here > -depth)]

    estimate = float(returned.mean())
    stderr = math.sqrt(max(estimate * (1.0 - estimate), 0.0) / reps)
    logger.info("return probability %.5f ± %.5f from %d walks", estimate, stderr, reps)
    return MonteCarloEstimate(estimate=estimate, stderr=stderr, reps=reps)


# ── Verification grid ─────────────────────────────────────────────────────────

GRID_LOADS = (0.2, 0.4, 0.6, 0.75)
ONE_SERVER_RATES = (0.2, 0.35, 0.5, 0.65, 0.8)
TWO_SERVER_RATES = (0.1, 0.2, 0.3, 0.4, 0.45)
GRID_MODELS = ("geo1-lasda", "geo2-lasda", "geo1-eas")


def default_grid(model):
    """Twenty stable specs per model id, all with ω ≤ 0.75."""
    if model == "geo2-lasda":
        return [DiscreteQueueSpec(p=f * 2 * r, r=r, servers=2) for r in TWO_SERVER_RATES for f in GRID_LOADS]
    discipline = Discipline.EAS if model == "geo1-eas" else Discipline.LAS_DA
    return [
        DiscreteQueueSpec(p=f * r, r=r, servers=1, discipline=discipline)
        for r in ONE_SERVER_RATES
        for f in GRID_LOADS
    ]


def _row(model, spec, check, closed_form, oracle, tolerance):
    err = abs(closed_form - oracle)
    return {
        "model": model,
        "p": spec.p,
        "r": spec.r,
        "check": check,
        "closed_form": closed_form,
        "oracle": oracle,
        "abs_error": err,
        "tolerance": tolerance,
        "passed": bool(err < tolerance),
    }


def verify_spec(model, spec, K=DEFAULT_TRUNCATION, J=DEFAULT_HALF_WIDTH):
    """All oracle checks for one grid cell, as report rows."""
    rows = []
    omega = cu.decay_ratio(spec)
    profile = cu.stationary_profile(spec)

    rows.append(_row(model, spec, "omega_root_residual", cu.root_residual(spec, omega), 0.0, cu.RESIDUAL_TOL))
    rows.append(_row(model, spec, "normalization", profile.total(), 1.0, cu.NORMALIZATION_TOL))

    if omega ** K >= TAIL_NEGLIGIBLE:
        logger.warning("omega^K = %.3e; K=%d too small for %r", omega ** K, K, spec)
    pi_k = truncated_stationary(spec, K)
    pi_2k = truncated_stationary(spec, 2 * K)
    closed = np.array([profile.probability(j) for j in range(K + 1)])
    rows.append(_row(model, spec, "stationary_max_abs", float(np.max(np.abs(pi_k - closed))), 0.0, STATIONARY_TOL))
    rows.append(_row(model, spec, "stationary_K_vs_2K", float(np.max(np.abs(pi_k - pi_2k[:K + 1]))), 0.0, STABILITY_TOL))

    if spec.servers == 2:
        hp = cu.hitting_profile(spec)
        try:
            nu0, nu1, nu_minus1 = hitting_system(spec, J)
        except ToleranceNotMetError as e:
            nu0 = nu1 = nu_minus1 = float("nan")
            logger.warning("%s", e)
        rows.append(_row(model, spec, "nu0", hp.nu0, nu0, HITTING_TOL))
        rows.append(_row(model, spec, "nu1", hp.nu1, nu1, HITTING_TOL))
        rows.append(_row(model, spec, "nu_minus1", hp.nu_minus1, nu_minus1, HITTING_TOL))
        rows.append(_row(model, spec, "nu1_equals_omega", hp.nu1, omega, cu.RESIDUAL_TOL))
        rows.append(_row(model, spec, "z3_residual", cu.z3_residual(spec, hp.nu1), 0.0, 1e-10))
        rows.append(_row(model, spec, "increment_law_sum", sum(increment_law(spec).values()), 1.0, ROW_SUM_TOL))
        drift = increment_drift(spec)
        rows.append({**_row(model, spec, "drift_negative", drift, drift, 1.0), "passed": bool(drift < 0)})
    return rows


def _verify_cell(args):
    model, spec, K, J = args
    return verify_spec(model, spec, K, J)


def verification_report(models=GRID_MODELS, K=DEFAULT_TRUNCATION,
                        J=DEFAULT_HALF_WIDTH, jobs=1):
    """Run verify_spec over the default grid of each model; one row per check."""
    cells = [(m, spec, K, J) for m in models for spec in default_grid(m)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_verify_cell, cells))
    else:
        results = [_verify_cell(c) for c in cells]
    rows = [row for cell_rows in results for row in cell_rows]
    return pd.DataFrame(rows)


def worked_example_checks():
    """Closed forms against the printed worked-example digits (truncated to 10 places)."""
    tol = 1e-9
    rows = []

    def add(name, value, printed, tolerance=tol):
        err = abs(value - printed)
        rows.append({"check": name, "computed": value, "printed": printed,
                     "abs_error": err, "tolerance": tolerance, "passed": bool(err < tolerance)})

    for model, ex in cu.WORKED_EXAMPLES.items():
        spec = ex["spec"]
        asym = cu.asymptotics_for(spec)
        add(f"{model}.slope", asym.slope, ex["slope"])
        add(f"{model}.intercept", asym.intercept, ex["intercept"])
        add(f"{model}.mean", cu.mean_queue_length(spec), ex["mean"], 1e-5)
        if "omega" in ex:
            add(f"{model}.omega", asym.omega, ex["omega"])
        if "a" in ex:
            add(f"{model}.a", asym.a, ex["a"])
        if "pi2" in ex:
            add(f"{model}.pi2", cu.stationary_profile(spec).head[2], ex["pi2"])
        if "nu0" in ex:
            add(f"{model}.nu0", cu.hitting_profile(spec).nu0, ex["nu0"])
    return pd.DataFrame(rows)
