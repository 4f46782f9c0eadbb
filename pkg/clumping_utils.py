"""
Closed-form clumping predictions for the maximum line length of
Geo/Geo/1, Geo/Geo/2, M/M/1 and M/M/2 queues.

Every function here is a pure function of its arguments.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329
RESIDUAL_TOL = 1e-12       # |(qω+p)(rω+s)^c − ω|
NORMALIZATION_TOL = 1e-12  # |Σπ − 1|

# Printed as "REFERENCE-ONLY" next to every lazy-walk value in reports
LAZY_WALK_FLAG = "REFERENCE-ONLY"


# ── Errors ────────────────────────────────────────────────────────────────────

class QueueModelError(Exception):
    """Base class for every error raised by this package."""


class ParameterDomainError(QueueModelError, ValueError):
    """Parameters outside their open intervals, or an unstable queue."""


class UnsupportedModelError(QueueModelError, ValueError):
    """A model the analytic layer has no closed form for (e.g. c > 2)."""


class ToleranceNotMetError(QueueModelError, RuntimeError):
    """A truncated numerical solve did not reach its stated tolerance."""

    def __init__(self, message, discrepancy=None):
        super().__init__(message)
        self.discrepancy = discrepancy


# ── Queue parameters ──────────────────────────────────────────────────────────

class Discipline(str, Enum):
    LAS_DA = "LAS_DA"   # late arrival, delayed access
    EAS = "EAS"         # early arrival


@dataclass(frozen=True)
class DiscreteQueueSpec:
    """
    Geo/Geo/c queue in discrete time.

    p:          arrival probability per step
    r:          per-server departure probability per step
    servers:    1 or 2
    discipline: Discipline.LAS_DA or Discipline.EAS (EAS is one-server only)
    test_mode:  accept the degenerate values p=0 and r in {0, 1}; simulators
                only, the closed forms are undefined there
    """
    p: float
    r: float
    servers: int = 1
    discipline: Discipline = Discipline.LAS_DA
    test_mode: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "discipline", Discipline(self.discipline))

        if self.servers not in (1, 2):
            raise UnsupportedModelError(
                f"servers must be 1 or 2 for a Geo/Geo/c queue, got {self.servers}"
            )
        if self.discipline is Discipline.EAS and self.servers != 1:
            raise UnsupportedModelError("EAS is only defined for one server")

        if self.test_mode:
            if not (0.0 <= self.p < 1.0 and 0.0 <= self.r <= 1.0):
                raise ParameterDomainError(
                    f"test mode still requires 0 <= p < 1 and 0 <= r <= 1 (p={self.p}, r={self.r})"
                )
            if self.p > 0.0 and not self.p < self.servers * self.r:
                raise ParameterDomainError(
                    f"stability violated: p < {self.servers}*r (p={self.p}, r={self.r})"
                )
            return

        if not 0.0 < self.p < 1.0:
            raise ParameterDomainError(f"arrival probability must satisfy 0 < p < 1, got p={self.p}")
        if not 0.0 < self.r < 1.0:
            raise ParameterDomainError(f"departure probability must satisfy 0 < r < 1, got r={self.r}")
        if not self.p < self.servers * self.r:
            raise ParameterDomainError(
                f"stability violated: p < {self.servers}*r (p={self.p}, r={self.r})"
            )

    @property
    def q(self):
        return 1.0 - self.p

    @property
    def s(self):
        return 1.0 - self.r


@dataclass(frozen=True)
class ContinuousQueueSpec:
    """M/M/c queue: Poisson arrivals at rate lam, exponential service at rate mu."""
    lam: float
    mu: float
    c: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "mu", float(self.mu))
        if int(self.c) != self.c or self.c < 1:
            raise ParameterDomainError(f"server count must be an integer >= 1, got c={self.c}")
        object.__setattr__(self, "c", int(self.c))
        if not self.lam > 0.0:
            raise ParameterDomainError(f"arrival rate must satisfy lambda > 0, got {self.lam}")
        if not self.mu > 0.0:
            raise ParameterDomainError(f"service rate must satisfy mu > 0, got {self.mu}")
        if not self.lam < self.c * self.mu:
            raise ParameterDomainError(
                f"stability violated: lambda < c*mu (lambda={self.lam}, mu={self.mu}, c={self.c})"
            )


# ── Result types ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class StationaryProfile:
    """
    head:  [π₀ … π_c]; for EAS just [π₀]
    omega: tail ratio, π_j = ω^(j−c)·π_c for j > c
    """
    head: tuple
    omega: float

    @property
    def tail_start(self):
        return len(self.head) - 1

    def probability(self, j):
        """π_j for any j >= 0."""
        if j < 0:
            return 0.0
        c = self.tail_start
        if j <= c:
            return self.head[j]
        return self.head[c] * self.omega ** (j - c)

    def tail(self, k):
        """P{L >= k}."""
        c = self.tail_start
        if k <= 0:
            return 1.0
        if k <= c:
            return 1.0 - sum(self.head[:k])
        return self.head[c] * self.omega ** (k - c) / (1.0 - self.omega)

    def total(self):
        c = self.tail_start
        return sum(self.head[:c]) + self.head[c] / (1.0 - self.omega)

    def mean(self):
        c = self.tail_start
        w = self.omega
        head_part = sum(j * pj for j, pj in enumerate(self.head[:c]))
        return head_part + self.head[c] * (c / (1.0 - w) + w / (1.0 - w) ** 2)


@dataclass(frozen=True)
class HittingProfile:
    nu0: float        # return probability to 0
    nu1: float        # hit probability starting from −1
    nu_minus1: float  # hit probability starting from +1
    theta: float
    ec: float         # mean sojourn E(C) per clump


@dataclass(frozen=True)
class ExtremeAsymptotics:
    """P{M ≤ log_{1/ω}(n) + h} ~ exp(−a·ωʰ);  E(M) ≈ slope·ln(n) + intercept."""
    omega: float
    a: float
    slope: float
    intercept: float

    @classmethod
    def from_tail(cls, omega, a):
        log_inv = math.log(1.0 / omega)
        return cls(
            omega=omega,
            a=a,
            slope=1.0 / log_inv,
            intercept=(EULER_GAMMA + math.log(a)) / log_inv + 0.5,
        )

    def as_dict(self):
        return {"omega": self.omega, "a": self.a, "slope": self.slope, "intercept": self.intercept}


# ── Decay ratio and stationary distribution ───────────────────────────────────

def root_residual(spec, omega):
    """|(qω+p)(rω+s)^c − ω| for the quadratic (c=1) or cubic (c=2)."""
    return abs((spec.q * omega + spec.p) * (spec.r * omega + spec.s) ** spec.servers - omega)


def z3_residual(spec, z):
    """Residual of ps² − (2qs+r)r·z − qr²z² = 0, the factor whose small root is z₃."""
    p, q, r, s = spec.p, spec.q, spec.r, spec.s
    return abs(p * s * s - (2 * q * s + r) * r * z - q * r * r * z * z)


def _theta(spec):
    # r² + 4qs > 0 whenever 0 < r < 1 and 0 < p < 1
    return math.sqrt(spec.r * spec.r + 4.0 * spec.q * spec.s)


def _require_analytic(spec):
    if spec.test_mode and (spec.p == 0.0 or spec.r in (0.0, 1.0)):
        raise ParameterDomainError(
            "closed forms need 0 < p < 1 and 0 < r < 1; degenerate test-mode specs are simulation-only"
        )


def decay_ratio(spec):
    """
    Geometric tail ratio ω of the stationary distribution.

    One server:  ω = ps/(qr).
    Two servers: ω = (−r − 2qs + θ)/(2qr), θ = √(r² + 4qs), evaluated in the
    equivalent form 2ps²/(r(2qs + r + θ)) and polished by one Newton step on
    the cubic (qω+p)(rω+s)² = ω.
    """
    _require_analytic(spec)
    p, q, r, s = spec.p, spec.q, spec.r, spec.s

    if spec.servers == 1:
        return p * s / (q * r)

    theta = _theta(spec)
    omega = 2.0 * p * s * s / (r * (2.0 * q * s + r + theta))

    f = (q * omega + p) * (r * omega + s) ** 2 - omega
    df = q * (r * omega + s) ** 2 + 2.0 * r * (q * omega + p) * (r * omega + s) - 1.0
    if df != 0.0:
        omega -= f / df

    residual = root_residual(spec, omega)
    if residual >= RESIDUAL_TOL:
        logger.warning("decay ratio residual %.3e at p=%r r=%r", residual, p, r)
    return omega


def stationary_profile(spec):
    """
    Stationary distribution as head probabilities plus the geometric tail.

    LAS-DA, one server:  π₀ = (r−p)/r, π₁ = p(1−ω)/r.
    LAS-DA, two servers: π₂ closed form, π₁ = (r/(ps))(r+2qs+qrω)π₂,
                         π₀ = (qr²/(p²s))(1+qs+qrω)π₂.
    EAS:                 π_j = (1−ω)ωʲ.
    """
    omega = decay_ratio(spec)
    p, q, r, s = spec.p, spec.q, spec.r, spec.s

    if spec.discipline is Discipline.EAS:
        head = (1.0 - omega,)
    elif spec.servers == 1:
        head = ((r - p) / r, p * (1.0 - omega) / r)
    else:
        pi2 = p * p * s * (1.0 - omega) / (
            p * p * s + r * (r + p * q * s + q * (p + q * r) * (s + r * omega)) * (1.0 - omega)
        )
        pi1 = (r / (p * s)) * (r + 2.0 * q * s + q * r * omega) * pi2
        pi0 = (q * r * r / (p * p * s)) * (1.0 + q * s + q * r * omega) * pi2
        head = (pi0, pi1, pi2)

    profile = StationaryProfile(head=head, omega=omega)
    total = profile.total()
    if abs(total - 1.0) >= NORMALIZATION_TOL:
        logger.warning("stationary profile sums to %.15f at %r", total, spec)
    return profile


# ── Clump constants ───────────────────────────────────────────────────────────

def hitting_profile(spec):
    """
    Hitting probabilities of the two-server increment walk
    {−2: qr², −1: pr²+2qrs, 0: 2prs+qs², +1: ps²}.

    ν₀  = (6q − 4qr + r² − 2qθ − rθ)/(2q)
    ν₋₁ = (2qs + r − θ)(qr − θ)/(2pqs²)
    ν₁  = (−r − 2qs + θ)/(2qr) = ω

    1−ν₀ and ν₋₁ are evaluated in rationalised forms,
    1−ν₀ = 2θ(2r−p)/(2q+r+θ) and ν₋₁ = 2(θ−qr)/(2qs+r+θ),
    which stay accurate as p, r → 0 in the continuum sweep.
    """
    if spec.servers != 2:
        raise UnsupportedModelError(
            f"hitting profile is defined for two servers only, got servers={spec.servers}"
        )
    _require_analytic(spec)
    p, q, r, s = spec.p, spec.q, spec.r, spec.s
    theta = _theta(spec)

    one_minus_nu0 = 2.0 * theta * (2.0 * r - p) / (2.0 * q + r + theta)
    nu_minus1 = 2.0 * (theta - q * r) / (2.0 * q * s + r + theta)
    nu1 = 2.0 * p * s * s / (r * (2.0 * q * s + r + theta))

    return HittingProfile(
        nu0=1.0 - one_minus_nu0,
        nu1=nu1,
        nu_minus1=nu_minus1,
        theta=theta,
        ec=1.0 / one_minus_nu0,
    )


def clump_mean(spec):
    """E(C): 1/(r−p) for one server (both disciplines), 1/(1−ν₀) for two."""
    _require_analytic(spec)
    if spec.servers == 1:
        return 1.0 / (spec.r - spec.p)
    return hitting_profile(spec).ec


# ── Extreme-value asymptotics ─────────────────────────────────────────────────

def extreme_asymptotics(spec):
    """(ω, A, slope, intercept) of the maximum of a discrete queue."""
    omega = decay_ratio(spec)
    p, q, r, s = spec.p, spec.q, spec.r, spec.s

    if spec.discipline is Discipline.EAS:
        a = p * s * (r - p) ** 2 / (q * q * r * r)
    elif spec.servers == 1:
        a = p * (r - p) ** 2 / (q * r * r)
    else:
        pi2 = stationary_profile(spec).head[2]
        a = pi2 * (1.0 - hitting_profile(spec).nu0) / omega

    return ExtremeAsymptotics.from_tail(omega, a)


def continuous_asymptotics(spec):
    """
    M/M/1: ω = λ/μ,  A = (μ−λ)²/μ·ω²
    M/M/2: ω = λ/2μ, A = 2(2μ−λ)²/(2μ+λ)·ω²
    with the horizon read as elapsed time x instead of a step count.
    """
    lam, mu = spec.lam, spec.mu
    if spec.c == 1:
        omega = lam / mu
        a = (mu - lam) ** 2 / mu * omega ** 2
    elif spec.c == 2:
        omega = lam / (2.0 * mu)
        a = 2.0 * (2.0 * mu - lam) ** 2 / (2.0 * mu + lam) * omega ** 2
    else:
        raise UnsupportedModelError(
            f"continuous asymptotics are available for c in {{1, 2}}, got c={spec.c}"
        )
    return ExtremeAsymptotics.from_tail(omega, a)


def asymptotics_for(spec):
    """Dispatch on the spec type."""
    if isinstance(spec, ContinuousQueueSpec):
        return continuous_asymptotics(spec)
    return extreme_asymptotics(spec)


def max_cdf(asym, n, k):
    """
    P{M_n ≤ k} ≈ exp(−A·ω^h) with real h = k − log_{1/ω}(n),
    i.e. exp(−A·n·ω^k). Accepts a scalar or an array of levels.
    """
    if n < 1:
        raise ParameterDomainError(f"horizon must satisfy n >= 1, got {n}")
    h = np.asarray(k, dtype=float) - math.log(n) / math.log(1.0 / asym.omega)
    # log of A·ω^h, clipped so exp() neither overflows nor loses the 0/1 limits
    log_rate = np.clip(math.log(asym.a) + h * math.log(asym.omega), -745.0, 700.0)
    out = np.exp(-np.exp(log_rate))
    if out.ndim == 0:
        return float(out)
    return out


def max_quantile(asym, n, prob):
    """Real level k with max_cdf(asym, n, k) == prob, for 0 < prob < 1."""
    if not 0.0 < prob < 1.0:
        raise ParameterDomainError(f"quantile probability must satisfy 0 < prob < 1, got {prob}")
    log_inv = math.log(1.0 / asym.omega)
    h = math.log(-math.log(prob) / asym.a) / math.log(asym.omega)
    return math.log(n) / log_inv + h


def expected_max(asym, n):
    """E(M_n) ≈ slope·ln(n) + intercept; only meaningful for large n."""
    if n <= 0:
        raise ParameterDomainError(f"horizon must be positive, got {n}")
    return asym.slope * math.log(n) + asym.intercept


# ── Averages ──────────────────────────────────────────────────────────────────

def mean_queue_length(spec):
    """Long-run mean of the length process."""
    if isinstance(spec, ContinuousQueueSpec):
        lam, mu = spec.lam, spec.mu
        if spec.c == 1:
            return lam / (mu - lam)
        if spec.c == 2:
            return 4.0 * lam * mu / ((2.0 * mu - lam) * (2.0 * mu + lam))
        raise UnsupportedModelError(f"mean queue length is available for c in {{1, 2}}, got c={spec.c}")

    _require_analytic(spec)
    if spec.discipline is Discipline.EAS:
        return stationary_profile(spec).mean()
    if spec.servers == 1:
        return spec.p * spec.q / (spec.r - spec.p)

    profile = stationary_profile(spec)
    w = profile.omega
    return profile.head[1] + (2.0 - w) / (1.0 - w) ** 2 * profile.head[2]


# ── Continuum limit ───────────────────────────────────────────────────────────

def discretize(spec, delta):
    """Geo/Geo/c LAS-DA with p = λΔ, r = μΔ."""
    if not delta > 0.0:
        raise ParameterDomainError(f"time step must satisfy delta > 0, got {delta}")
    if spec.c > 2:
        raise UnsupportedModelError(f"discretisation is available for c in {{1, 2}}, got c={spec.c}")
    p, r = spec.lam * delta, spec.mu * delta
    if not (p < 1.0 and r < 1.0):
        raise ParameterDomainError(
            f"delta too large: need lambda*delta < 1 and mu*delta < 1 (delta={delta})"
        )
    return DiscreteQueueSpec(p=p, r=r, servers=spec.c, discipline=Discipline.LAS_DA)


def clump_rate(spec, delta):
    """1/(E(C)Δ): (r−p)/Δ for one server, (1−ν₀)/Δ for two."""
    if spec.servers == 1:
        return (spec.r - spec.p) / delta
    return (1.0 - hitting_profile(spec).nu0) / delta


def continuum_tail_coefficient(spec, delta):
    """
    Discrete tail coefficient on the continuous time scale: A·ω/Δ.

    Dividing by Δ converts a per-step rate to a per-unit-time rate; the
    factor ω moves the level convention to the arrival-epoch one used by the
    continuous law. Tends to continuous_asymptotics(...).a as Δ → 0.
    """
    asym = extreme_asymptotics(spec)
    return asym.a * asym.omega / delta


# ── Lazy random walk alternative (EAS) ────────────────────────────────────────

def eas_lazy_walk_expected_max(p, r, n):
    """
    E′(M_n) from reading EAS increments as a lazy reflected walk with
    up-probability a = ps and down-probability b = qr:

        ln((a+b)n)/ln(b/a) + (γ + ln(a(b−a)²/b²))/ln(b/a) + 1/2

    Differs from the EAS clumping value by ln(ps+qr)/ln(qr/ps) at every n.
    Simulation sides with the clumping value; reports flag this one
    LAZY_WALK_FLAG.
    """
    spec = DiscreteQueueSpec(p=p, r=r, servers=1, discipline=Discipline.EAS)
    if n <= 0:
        raise ParameterDomainError(f"horizon must be positive, got {n}")
    a = spec.p * spec.s
    b = spec.q * spec.r
    log_ratio = math.log(b / a)
    return (
        math.log((a + b) * n) / log_ratio
        + (EULER_GAMMA + math.log(a * (b - a) ** 2 / (b * b))) / log_ratio
        + 0.5
    )


# ── Worked examples ───────────────────────────────────────────────────────────

WORKED_EXAMPLES = {
    "geo1-lasda": {
        "spec": DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1),
        "omega": 0.5,
        "slope": 1.4426950408,
        "intercept": -2.8371788241,
        "mean": 1.33333,
    },
    "geo2-lasda": {
        "spec": DiscreteQueueSpec(p=1 / 3, r=1 / 4, servers=2),
        "omega": 0.5584219849,
        "pi2": 0.2270554252,
        "nu0": 0.8414579643,
        "a": 0.0644634887,
        "slope": 1.7163246381,
        "intercept": -3.2148827577,
        "mean": 1.98358,
    },
    "mm1": {
        "spec": ContinuousQueueSpec(lam=1 / 3, mu=1 / 2, c=1),
        "slope": 2.4663034623,
        "intercept": -7.2049448811,
        "mean": 2.0,
    },
    "mm2": {
        "spec": ContinuousQueueSpec(lam=1 / 3, mu=1 / 4, c=2),
        "slope": 2.4663034623,
        "intercept": -6.7552845943,
        "mean": 2.4,
    },
}
