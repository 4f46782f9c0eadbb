"""
Seeded simulators for the queue-length maximum:
Geo/Geo/1 and Geo/Geo/2 with LAS-DA, Geo/Geo/1 with EAS, and M/M/c.

Each replication draws from its own PCG64 stream seeded by (seed, replication),
so results do not depend on how replications are scheduled.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numba import njit

from clumping_utils import (
    ContinuousQueueSpec,
    Discipline,
    DiscreteQueueSpec,
    ParameterDomainError,
    UnsupportedModelError,
)

logger = logging.getLogger(__name__)

CHUNK_STEPS = 1 << 16   # uniform rows drawn per kernel call

_NO_PATH = np.empty(0, dtype=np.int64)


@dataclass(frozen=True)
class MaxRecord:
    max_level: int
    final_level: int
    steps: int


@dataclass(frozen=True)
class MmcRun:
    max_sys: int
    max_que: int
    k: int


def stream_rng(seed, replication=0):
    """Independent generator for one replication."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replication)]))


# ── Kernels ───────────────────────────────────────────────────────────────────
# One uniform per Bernoulli draw, consumed in program order: x, then y (or y1, y2).

@njit(cache=True)
def _lasda_kernel(uniforms, p, r, servers, u, m, path):
    total = 0.0
    record = path.size > 0
    for t in range(uniforms.shape[0]):
        x = 1 if uniforms[t, 0] < p else 0
        y1 = 1 if uniforms[t, 1] < r else 0
        if u == 0:
            u = x
        elif servers == 1 or u == 1:
            u = max(0, u + x - y1)
        else:
            y2 = 1 if uniforms[t, 2] < r else 0
            u = max(0, u + x - y1 - y2)
        if u > m:
            m = u
        total += u
        if record:
            path[t] = u
    return u, m, total


@njit(cache=True)
def _eas_kernel(uniforms, p, r, u, m, path):
    total = 0.0
    record = path.size > 0
    for t in range(uniforms.shape[0]):
        x = 1 if uniforms[t, 0] < p else 0
        y = 1 if uniforms[t, 1] < r else 0
        u = max(0, u + x - y)
        if u > m:
            m = u
        total += u
        if record:
            path[t] = u
    return u, m, total


@njit(cache=True)
def _assign_servers(arrivals, durations, c):
    # earliest-free server, ties to the lowest index
    free = np.zeros(c)
    starts = np.empty(arrivals.size)
    departs = np.empty(arrivals.size)
    for i in range(arrivals.size):
        j = 0
        for k in range(1, c):
            if free[k] < free[j]:
                j = k
        start = max(arrivals[i], free[j])
        starts[i] = start
        departs[i] = start + durations[i]
        free[j] = departs[i]
    return starts, departs


def _uniform_width(spec):
    if spec.discipline is Discipline.EAS:
        return 2
    return 1 + spec.servers


def _run_discrete(spec, n, rng, path=None):
    """Advance one path for n steps; returns (final, max, level_sum)."""
    if n < 1:
        raise ParameterDomainError(f"horizon must satisfy n >= 1, got {n}")
    width = _uniform_width(spec)
    u, m, total = 0, 0, 0.0
    done = 0
    while done < n:
        rows = min(CHUNK_STEPS, n - done)
        uniforms = rng.random((rows, width))
        chunk_path = _NO_PATH if path is None else path[done:done + rows]
        if spec.discipline is Discipline.EAS:
            u, m, part = _eas_kernel(uniforms, spec.p, spec.r, u, m, chunk_path)
        else:
            u, m, part = _lasda_kernel(uniforms, spec.p, spec.r, spec.servers, u, m, chunk_path)
        total += part
        done += rows
    return int(u), int(m), float(total)


# ── Simulators ────────────────────────────────────────────────────────────────

def sim_geo_lasda(spec, n, seed, replication=0):
    """Maximum of the Geo/Geo/c LAS-DA length process over n steps."""
    if spec.discipline is not Discipline.LAS_DA:
        raise UnsupportedModelError("sim_geo_lasda needs a LAS-DA spec; use sim_geo_eas for EAS")
    u, m, _ = _run_discrete(spec, int(n), stream_rng(seed, replication))
    return MaxRecord(max_level=m, final_level=u, steps=int(n))


def sim_geo_eas(p, r, n, seed, replication=0, test_mode=False):
    """Maximum of the EAS recursion u ← max(0, u + x − y) over n steps."""
    spec = DiscreteQueueSpec(p=p, r=r, servers=1, discipline=Discipline.EAS, test_mode=test_mode)
    u, m, _ = _run_discrete(spec, int(n), stream_rng(seed, replication))
    return MaxRecord(max_level=m, final_level=u, steps=int(n))


def _mmc_schedule(spec, x, rng):
    k = int(rng.poisson(x * spec.lam))
    if k == 0:
        empty = np.empty(0)
        return empty, empty, empty
    arrivals = np.sort(rng.uniform(0.0, x, k))
    durations = rng.exponential(1.0 / spec.mu, k)
    starts, departs = _assign_servers(arrivals, durations, spec.c)
    return arrivals, starts, departs


def arrival_epoch_lengths(arrivals, starts, departs):
    """
    L_sys and L_que seen by each arrival: earlier arrivals still in the
    system (departure after this arrival) and still waiting (service start
    after this arrival). Start times are nondecreasing under FCFS
    earliest-free assignment.
    """
    earlier = np.arange(arrivals.size)
    gone = np.searchsorted(np.sort(departs), arrivals, side="right")
    started = np.minimum(np.searchsorted(starts, arrivals, side="right"), earlier)
    return earlier - np.minimum(gone, earlier), earlier - started


def sim_mmc(spec, x, seed, replication=0):
    """Maxima of L_sys and L_que over the arrival epochs in [0, x]."""
    if not x > 0:
        raise ParameterDomainError(f"horizon must satisfy x > 0, got {x}")
    arrivals, starts, departs = _mmc_schedule(spec, float(x), stream_rng(seed, replication))
    if arrivals.size == 0:
        return MmcRun(max_sys=0, max_que=0, k=0)
    l_sys, l_que = arrival_epoch_lengths(arrivals, starts, departs)
    logger.debug("M/M/%d replication %d: %d arrivals, max L_sys %d", spec.c, replication, arrivals.size, l_sys.max())
    return MmcRun(max_sys=int(l_sys.max()), max_que=int(l_que.max()), k=int(arrivals.size))


def sim_time_average(spec, horizon, seed, replication=0):
    """
    Time average of the length process: the state u per step for a discrete
    spec, the number in system integrated over [0, horizon] for M/M/c.
    """
    rng = stream_rng(seed, replication)
    if isinstance(spec, ContinuousQueueSpec):
        arrivals, _, departs = _mmc_schedule(spec, float(horizon), rng)
        if arrivals.size == 0:
            return 0.0
        return float(np.sum(np.minimum(departs, horizon) - arrivals) / horizon)
    _, _, total = _run_discrete(spec, int(horizon), rng)
    return total / int(horizon)


# ── Traces and couplings ──────────────────────────────────────────────────────

def trace_path(spec, n, seed, replication=0):
    """(step, u) for one discrete path, for --trace dumps."""
    path = np.zeros(int(n), dtype=np.int64)
    _run_discrete(spec, int(n), stream_rng(seed, replication), path)
    logger.debug("traced %d steps of %r (seed %d)", int(n), spec, seed)
    return pd.DataFrame({"step": np.arange(1, int(n) + 1), "u": path})


def coupled_lasda_eas(p, r, n, seed):
    """
    One-server LAS-DA and EAS paths driven by the same (x, y) uniforms.
    Both updates are nondecreasing in u and agree for u ≥ 1, while at u = 0
    EAS gives max(0, x − y) ≤ x; so the LAS-DA path is never below EAS.
    """
    rng = stream_rng(seed)
    uniforms = rng.random((int(n), 2))
    lasda = np.zeros(int(n), dtype=np.int64)
    eas = np.zeros(int(n), dtype=np.int64)
    _lasda_kernel(uniforms, float(p), float(r), 1, 0, 0, lasda)
    _eas_kernel(uniforms, float(p), float(r), 0, 0, eas)
    return lasda, eas


def coupled_one_two_servers(p, r, n, seed):
    """
    One- and two-server LAS-DA paths sharing x and y1; the second server's
    extra departures only ever lower the two-server path.
    """
    rng = stream_rng(seed)
    uniforms = rng.random((int(n), 3))
    one = np.zeros(int(n), dtype=np.int64)
    two = np.zeros(int(n), dtype=np.int64)
    _lasda_kernel(uniforms, float(p), float(r), 1, 0, 0, one)
    _lasda_kernel(uniforms, float(p), float(r), 2, 0, 0, two)
    return one, two
