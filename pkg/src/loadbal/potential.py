"""Softmax-potential scheduler for unrelated machines.

Each arriving job goes to the machine whose selection increases the
log-sum-exp potential of the (normalized) load vector the least.  The
scheduler forgets its loads once half of the jobs have arrived, and can
optionally run under a doubling guess of the optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import Instance, Job, empty_assignment, zero_loads
from .exceptions import GuessTooSmallError, InfeasibleInstanceError
from .validation import check_instance, check_permutation

A_MIN = 0.01


@dataclass(frozen=True)
class PotentialParams:
    a: float
    m: int

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"potential sharpness must be positive, got {self.a}")
        if self.m < 1:
            raise ValueError(f"machine count must be positive, got {self.m}")

    @classmethod
    def for_machines(cls, m: int, a: float | None = None) -> "PotentialParams":
        return cls(choose_a(m) if a is None else float(a), int(m))


def _sharpness(params) -> float:
    return params.a if isinstance(params, PotentialParams) else float(params)


def choose_a(m: int) -> float:
    """Default sharpness ``ln ln m / 6``, clamped below at ``A_MIN``."""
    if m < 1:
        raise ValueError(f"machine count must be positive, got {m}")
    if m < 3:
        return A_MIN
    return max(math.log(math.log(m)) / 6, A_MIN)


def psi(x, params) -> float:
    """Log-sum-exp potential ``(1/a) ln sum_i exp(a x_i)``."""
    a = _sharpness(params)
    x = np.asarray(x, dtype=float)
    top = x.max()
    return float(top + np.log(np.exp(a * (x - top)).sum()) / a)


def grad_psi(x, params) -> np.ndarray:
    """Gradient of :func:`psi`, i.e. the softmax of ``a x``."""
    a = _sharpness(params)
    x = np.asarray(x, dtype=float)
    w = np.exp(a * (x - x.max()))
    return w / w.sum()


def delta_psi(x, machine: int, p: float, params) -> float:
    """Increase of :func:`psi` when ``p`` is added to coordinate ``machine``.

    Uses ``psi(x + p e_i) - psi(x) = ln(1 + (e^{ap} - 1) v_i) / a`` with ``v``
    the gradient at ``x``, which stays accurate when the increase is tiny.
    """
    a = _sharpness(params)
    v = grad_psi(x, a)[machine]
    return float(np.log1p(np.expm1(a * p) * v) / a)


@dataclass
class SchedulerState:
    """Mutable state of one softmax run.

    ``virtual`` holds the normalized loads the potential sees since the last
    reset; ``true_loads`` accumulates raw loads and is never reset.
    """

    params: PotentialParams
    n_jobs: int
    doubling: bool = False
    restart: bool = True
    virtual: np.ndarray = field(init=False)
    true_loads: np.ndarray = field(init=False)
    assignment: np.ndarray = field(init=False)
    t: int = 0
    guess: float = 1.0
    lower_bound: float = 0.0
    min_load_sum: float = 0.0
    resets: list = field(default_factory=list)

    def __post_init__(self):
        self.virtual = zero_loads(self.params.m)
        self.true_loads = zero_loads(self.params.m)
        self.assignment = empty_assignment(self.n_jobs)
        self._guess_set = False

    @property
    def phase_boundary(self) -> int:
        return self.n_jobs // 2

    def reset_virtual(self, reason: str) -> None:
        self.virtual = zero_loads(self.params.m)
        self.resets.append((self.t, reason))

    def _double(self) -> None:
        self.guess *= 2.0
        self.reset_virtual("doubling")

    def arrive(self, job: Job) -> int:
        """Process one arrival: phase restart, guess update, then placement."""
        if self.t >= self.n_jobs:
            raise ValueError(f"all {self.n_jobs} announced jobs have already arrived")
        if self.restart and self.t == self.phase_boundary and self.t > 0:
            self.reset_virtual("phase")
        if not self.doubling:
            return softmax_step(self, job)

        if not len(job.costs):
            raise InfeasibleInstanceError(f"job {job.id} has no finite load")
        cheapest = job.min_load
        self.lower_bound = max(self.lower_bound, cheapest)
        self.min_load_sum += cheapest
        bound = max(self.lower_bound, self.min_load_sum / self.params.m)
        if not self._guess_set:
            self.guess = cheapest if cheapest > 0 else 1.0
            self._guess_set = True
        while 2 * bound > self.guess:
            self._double()
        while True:
            try:
                return softmax_step(self, job)
            except GuessTooSmallError:
                self._double()


def softmax_step(state: SchedulerState, job: Job) -> int:
    """Place ``job`` on the machine that raises the potential least.

    Loads are divided by the state's guess; under doubling, raw loads at or
    above the guess count as infinite.  Ties go to the lowest machine index.

    Raises
    ------
    GuessTooSmallError
        If no machine is feasible for ``job`` under the current guess.
    """
    machines, raw = job.machines, job.costs
    if state.doubling:
        keep = raw < state.guess
        machines, raw = machines[keep], raw[keep]
    if not len(machines):
        raise GuessTooSmallError(f"job {job.id} fits no machine under guess {state.guess}")
    a = state.params.a
    scaled = raw / state.guess
    v = grad_psi(state.virtual, a)[machines]
    deltas = np.log1p(np.expm1(a * scaled) * v) / a
    best = int(np.argmin(deltas))
    machine = int(machines[best])
    state.virtual[machine] += scaled[best]
    state.true_loads[machine] += raw[best]
    state.assignment[job.id] = machine
    state.t += 1
    return machine


def _run(instance, order, params, doubling, restart) -> SchedulerState:
    check_instance(instance)
    order = check_permutation(order, instance.n_jobs)
    if params is None or not isinstance(params, PotentialParams):
        params = PotentialParams.for_machines(instance.machine_count, params)
    state = SchedulerState(params, instance.n_jobs, doubling=doubling, restart=restart)
    for j in order.tolist():
        state.arrive(instance.jobs[j])
    return state


def softmax_run(instance: Instance, order=None, params=None, *, restart: bool = True) -> np.ndarray:
    """Run the two-phase softmax scheduler on loads taken as already normalized.

    ``params`` is a :class:`PotentialParams`, a bare sharpness, or ``None``
    for :func:`choose_a`.  Returns the assignment array.
    """
    return _run(instance, order, params, doubling=False, restart=restart).assignment


def doubling_wrap(instance: Instance, order=None, params=None, *, restart: bool = True) -> np.ndarray:
    """Run the softmax scheduler under a doubling guess of the optimum."""
    return _run(instance, order, params, doubling=True, restart=restart).assignment


class SoftmaxScheduler(BaseEstimator):
    """Estimator wrapper around the softmax-potential scheduler.

    Parameters
    ----------
    a : float, optional
        Potential sharpness; ``None`` picks :func:`choose_a` of the machine count.
    doubling : bool, default False
        Normalize loads by a doubling guess of the optimum.
    restart : bool, default True
        Reset the potential's loads once half of the jobs have arrived.

    Attributes
    ----------
    assignment_ : ndarray of shape (n_jobs,)
    loads_ : ndarray of shape (machine_count,)
        True (never reset) machine loads.
    makespan_ : float
    a_ : float
    guess_ : float
    resets_ : list of (step, reason)
    """

    def __init__(self, a=None, doubling=False, restart=True):
        self.a = a
        self.doubling = doubling
        self.restart = restart

    def begin(self, machine_count: int, n_jobs: int) -> "SoftmaxScheduler":
        """Start an online run with ``n_jobs`` announced jobs."""
        params = PotentialParams.for_machines(machine_count, self.a)
        self.state_ = SchedulerState(params, n_jobs, doubling=self.doubling, restart=self.restart)
        self._sync()
        return self

    def assign(self, job: Job) -> int:
        """Place one arriving job and return the chosen machine."""
        check_is_fitted(self, "state_")
        machine = self.state_.arrive(job)
        self._sync()
        return machine

    def partial_fit(self, job: Job) -> "SoftmaxScheduler":
        self.assign(job)
        return self

    def fit(self, instance: Instance, order=None) -> "SoftmaxScheduler":
        self.state_ = _run(instance, order, self.a, self.doubling, self.restart)
        self._sync()
        return self

    def fit_predict(self, instance: Instance, order=None) -> np.ndarray:
        return self.fit(instance, order).assignment_

    def _sync(self):
        s = self.state_
        self.assignment_ = s.assignment
        self.loads_ = s.true_loads
        self.makespan_ = float(s.true_loads.max()) if s.t else 0.0
        self.a_ = s.params.a
        self.guess_ = s.guess
        self.resets_ = s.resets
