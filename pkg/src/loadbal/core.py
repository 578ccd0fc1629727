"""Jobs, machines, load vectors, assignments and makespan.

Infinite processing loads are never stored: a machine missing from a job's
``loads`` map is one the job cannot run on.  Assignments are integer arrays
indexed by job id, with ``-1`` marking a job that has not been placed yet.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .exceptions import IncompleteAssignmentError, InfeasibleAssignmentError

UNASSIGNED = -1


@dataclass(frozen=True)
class Job:
    """A job with finite loads on a subset of machines.

    Parameters
    ----------
    id : int
        Dense index in ``[0, n)``.
    loads : mapping of int to float
        Machine index -> processing load.  Absent machines mean infinity.
    """

    id: int
    loads: Mapping[int, float]
    machines: np.ndarray = field(init=False, repr=False, compare=False)
    costs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        items = sorted((int(i), float(p)) for i, p in dict(self.loads).items())
        object.__setattr__(self, "loads", dict(items))
        machines = np.array([i for i, _ in items], dtype=np.int64)
        costs = np.array([p for _, p in items], dtype=float)
        machines.flags.writeable = False
        costs.flags.writeable = False
        object.__setattr__(self, "machines", machines)
        object.__setattr__(self, "costs", costs)

    def load_on(self, machine: int) -> float:
        return self.loads.get(machine, math.inf)

    @property
    def min_load(self) -> float:
        return float(self.costs.min()) if len(self.costs) else math.inf


@dataclass(frozen=True)
class Instance:
    """An unrelated-machines instance: ``machine_count`` machines, dense jobs."""

    machine_count: int
    jobs: tuple[Job, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))

    @classmethod
    def from_loads(cls, machine_count: int, loads: Iterable[Mapping[int, float]]) -> "Instance":
        """Build an instance from per-job load maps, numbering jobs in order."""
        return cls(machine_count, tuple(Job(j, l) for j, l in enumerate(loads)))

    @property
    def n_jobs(self) -> int:
        return len(self.jobs)

    def __len__(self) -> int:
        return len(self.jobs)

    def subset(self, job_ids: Iterable[int]) -> "Instance":
        """Instance restricted to ``job_ids``, renumbered densely in the given order."""
        return Instance.from_loads(self.machine_count, [self.jobs[j].loads for j in job_ids])

    def to_dict(self) -> dict:
        return {
            "machines": self.machine_count,
            "jobs": [
                {"id": job.id, "loads": {str(i): p for i, p in job.loads.items()}}
                for job in self.jobs
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Instance":
        jobs = sorted(data["jobs"], key=lambda j: int(j["id"]))
        return cls(
            int(data["machines"]),
            tuple(Job(int(j["id"]), {int(k): float(v) for k, v in j["loads"].items()}) for j in jobs),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))


def empty_assignment(n_jobs: int) -> np.ndarray:
    return np.full(n_jobs, UNASSIGNED, dtype=np.int64)


def zero_loads(machine_count: int) -> np.ndarray:
    return np.zeros(machine_count, dtype=float)


def apply(load_vector: np.ndarray, job: Job, machine: int) -> np.ndarray:
    """Return a copy of ``load_vector`` with ``job`` added on ``machine``.

    Raises
    ------
    InfeasibleAssignmentError
        If ``job`` has infinite load on ``machine``.
    """
    if machine not in job.loads:
        raise InfeasibleAssignmentError(f"job {job.id} has infinite load on machine {machine}")
    out = np.array(load_vector, dtype=float, copy=True)
    out[machine] += job.loads[machine]
    return out


def machine_loads(assignment: np.ndarray, instance: Instance, *, partial: bool = False) -> np.ndarray:
    """Per-machine load induced by ``assignment``.

    With ``partial=True`` unassigned jobs are skipped instead of rejected.
    """
    assignment = np.asarray(assignment)
    if assignment.shape != (instance.n_jobs,):
        raise IncompleteAssignmentError(
            f"assignment covers {assignment.shape} jobs, instance has {instance.n_jobs}"
        )
    loads = zero_loads(instance.machine_count)
    for job, machine in zip(instance.jobs, assignment.tolist()):
        if machine == UNASSIGNED:
            if partial:
                continue
            raise IncompleteAssignmentError(f"job {job.id} is unassigned")
        p = job.loads.get(machine)
        if p is None:
            raise InfeasibleAssignmentError(f"job {job.id} has infinite load on machine {machine}")
        loads[machine] += p
    return loads


def makespan(assignment: np.ndarray, instance: Instance) -> float:
    """Maximum machine load of a total assignment (0 for an empty instance)."""
    loads = machine_loads(assignment, instance)
    return float(loads.max()) if instance.n_jobs else 0.0


def validate(instance: Instance) -> list[str]:
    """Check the instance invariants and return every violation found.

    An empty list means the instance is well formed.
    """
    problems = []
    m = instance.machine_count
    if not isinstance(m, (int, np.integer)) or m < 1:
        problems.append(f"machine count must be a positive integer, got {m!r}")
    for position, job in enumerate(instance.jobs):
        if job.id != position:
            problems.append(f"job at position {position} has id {job.id}; ids must be dense")
        if not job.loads:
            problems.append(f"job {job.id}: no feasible machine")
        for i, p in job.loads.items():
            if not 0 <= i < m:
                problems.append(f"job {job.id}: machine index out of range ({i} not in [0, {m}))")
            if not math.isfinite(p) or p < 0:
                problems.append(f"job {job.id}: load on machine {i} must be finite and nonnegative, got {p}")
    return problems
