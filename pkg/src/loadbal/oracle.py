"""Offline ground truth: exact optimum at tiny scale, cheap lower bounds,
Chernoff tail bounds, and the per-step optimal increments used to audit the
softmax scheduler's potential inequality."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import Instance, machine_loads, makespan
from .exceptions import SizeLimitError
from .potential import PotentialParams, SchedulerState, grad_psi
from .validation import check_instance, check_permutation

SEARCH_LIMIT = 10 ** 8


class SearchSpaceTooLargeError(SizeLimitError):
    """Exhaustive search would visit more than the allowed number of leaves."""


def brute_force_opt(instance: Instance, *, limit: int = SEARCH_LIMIT) -> tuple[float, np.ndarray]:
    """Exact minimum makespan by branch and bound.

    Jobs are branched in order of decreasing cheapest load; a branch is cut
    once its partial makespan, or the average-load bound over what remains,
    reaches the incumbent.  Returns ``(opt, witness_assignment)``.
    """
    check_instance(instance)
    space = 1
    for job in instance.jobs:
        space *= len(job.loads)
        if space > limit:
            raise SearchSpaceTooLargeError(f"search space exceeds {limit} assignments")
    if instance.n_jobs == 0:
        return 0.0, np.empty(0, dtype=np.int64)

    m = instance.machine_count
    jobs = sorted(instance.jobs, key=lambda j: (-j.min_load, j.id))
    options = [sorted(j.loads.items(), key=lambda kv: (kv[1], kv[0])) for j in jobs]
    suffix = [0.0] * (len(jobs) + 1)
    for pos in range(len(jobs) - 1, -1, -1):
        suffix[pos] = suffix[pos + 1] + jobs[pos].min_load

    loads = [0.0] * m
    current = [0] * len(jobs)
    best = [math.inf, None]

    def search(pos: int, peak: float, placed: float) -> None:
        if pos == len(jobs):
            best[0] = peak
            best[1] = list(current)
            return
        if max(peak, (placed + suffix[pos]) / m) >= best[0]:
            return
        for machine, p in options[pos]:
            new = loads[machine] + p
            if new >= best[0]:
                continue
            loads[machine] = new
            current[pos] = machine
            search(pos + 1, max(peak, new), placed + p)
            loads[machine] = new - p

    search(0, 0.0, 0.0)
    witness = np.empty(instance.n_jobs, dtype=np.int64)
    for job, machine in zip(jobs, best[1]):
        witness[job.id] = machine
    return makespan(witness, instance), witness


def opt_lower_bound(jobs, m: int) -> float:
    """``max(max_j min_i p_ij, sum_j min_i p_ij / m)`` over the given jobs."""
    cheapest = [job.min_load for job in jobs]
    if not cheapest:
        return 0.0
    return max(max(cheapest), sum(cheapest) / m)


class ChernoffBound(NamedTuple):
    tight: float
    simplified: float


def chernoff_lower_tail(mu: float, delta: float) -> ChernoffBound:
    """Bounds on ``P[X < (1 - delta) mu]`` for a sum of independent Bernoullis.

    ``tight`` is ``(e^-delta / (1-delta)^(1-delta))^mu`` and ``simplified`` is
    ``e^(-mu delta^2 / 2)``; the first never exceeds the second.
    """
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not 0 <= delta < 1:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    tight = math.exp(mu * (-delta - (1 - delta) * math.log1p(-delta)))
    simplified = math.exp(-mu * delta * delta / 2)
    return ChernoffBound(tight, simplified)


def ledger_increments(sigma_star, order, instance: Instance) -> np.ndarray:
    """Per-step load vectors ``o^t`` of a fixed assignment along an arrival order.

    Row ``t`` has a single nonzero entry: the load of the ``t``-th arriving
    job on the machine ``sigma_star`` gives it.
    """
    sigma_star = np.asarray(sigma_star, dtype=np.int64)
    order = check_permutation(order, instance.n_jobs)
    out = np.zeros((instance.n_jobs, instance.machine_count))
    for t, j in enumerate(order.tolist()):
        machine = int(sigma_star[j])
        out[t, machine] = instance.jobs[j].loads[machine]
    return out


@dataclass
class TrialLedger:
    """A fixed reference assignment replayed along one arrival order."""

    instance: Instance
    sigma_star: np.ndarray
    order: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        return ledger_increments(self.sigma_star, self.order, self.instance)

    def reference_loads(self) -> np.ndarray:
        return machine_loads(self.sigma_star, self.instance)


def potential_bound_check(instance: Instance, order, sigma_star, params=None) -> tuple[float, float]:
    """Replay the softmax scheduler's first phase and evaluate both sides of

        max_i s_i  <=  e^{2a} * sum_t <v^t, o^t>  +  ln(m) / a

    where ``s`` is the load vector after ``floor(n/2)`` jobs, ``v^t`` the
    potential's gradient just before step ``t`` and ``o^t`` the increment of
    ``sigma_star``.  Loads must already be normalized to ``[0, 1]``.
    Returns ``(lhs, rhs)``.
    """
    check_instance(instance)
    order = check_permutation(order, instance.n_jobs)
    if not isinstance(params, PotentialParams):
        params = PotentialParams.for_machines(instance.machine_count, params)
    sigma_star = np.asarray(sigma_star, dtype=np.int64)
    state = SchedulerState(params, instance.n_jobs)
    inner = 0.0
    for j in order[: instance.n_jobs // 2].tolist():
        job = instance.jobs[j]
        v = grad_psi(state.virtual, params)
        ref = int(sigma_star[j])
        inner += v[ref] * job.loads[ref]
        state.arrive(job)
    a = params.a
    lhs = float(state.virtual.max()) if state.t else 0.0
    rhs = math.exp(2 * a) * inner + math.log(params.m) / a
    return lhs, rhs
