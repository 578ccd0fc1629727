"""Lower-bound tree families, the classic adaptive adversary, planted instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Instance, Job
from .exceptions import ConfigError, ProtocolError, SizeLimitError
from .graphbal import NO_PARENT, Tree
from .validation import check_random_state

MAX_NODES = 50_000_000


def full_kary_tree(arity: int, height: int, *, allow_large: bool = False) -> Tree:
    """Complete ``arity``-ary tree whose leaves all sit at depth ``height``."""
    if arity < 1 or height < 0:
        raise ValueError(f"need arity >= 1 and height >= 0, got {arity}, {height}")
    n = sum(arity ** i for i in range(height + 1))
    if n > MAX_NODES and not allow_large:
        raise SizeLimitError(f"{n} nodes exceeds {MAX_NODES}; pass allow_large to override")
    parents = [np.array([NO_PARENT], dtype=np.int64)]
    start = 0
    for level in range(height):
        width = arity ** level
        parents.append(np.repeat(np.arange(start, start + width, dtype=np.int64), arity))
        start += width
    return Tree.from_parents(np.concatenate(parents))


def gen_fat_tree(k: int, *, allow_large: bool = False) -> Tree:
    """Complete tree of depth ``k`` in which every internal node has ``k**4`` children.

    ``k >= 4`` (over four billion nodes) is refused unless ``allow_large``.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k >= 4 and not allow_large:
        raise SizeLimitError(f"fat tree with k={k} is beyond desk scale; pass allow_large to override")
    return full_kary_tree(k ** 4, k, allow_large=allow_large)


def count_recursive_nodes(D: int) -> list[int]:
    """Node counts ``n(0..D)`` of the recursive trees ``T_0..T_D`` built for height ``D``.

    ``n(0) = 1`` and ``n(d) = 1 + sum_{d' < d} 2^(D-d') n(d')``.
    """
    if D < 0:
        raise ValueError(f"D must be nonnegative, got {D}")
    counts = [1]
    for d in range(1, D + 1):
        counts.append(1 + sum(2 ** (D - e) * counts[e] for e in range(d)))
    assert counts[D] <= 4 ** (D * D), "size bound n(D) <= 4^(D^2) violated"
    return counts


def gen_recursive_tree(D: int, *, allow_large: bool = False) -> Tree:
    """Labeled recursive lower-bound tree ``T_D``.

    A node labeled ``d`` gets ``2^(D-d')`` children labeled ``d'`` for every
    ``d' < d``, children ordered by label.  ``D >= 6`` needs ``allow_large``.
    """
    if D < 0:
        raise ValueError(f"D must be nonnegative, got {D}")
    if D >= 6 and not allow_large:
        raise SizeLimitError(f"T_D with D={D} is beyond desk scale; pass allow_large to override")
    if D > 12:
        raise SizeLimitError(f"T_D with D={D} cannot be materialized")
    n = count_recursive_nodes(D)[D]
    if n > MAX_NODES:
        raise SizeLimitError(f"T_{D} has {n} nodes, more than {MAX_NODES}")

    parents = [NO_PARENT]
    labels = [D]
    head = 0
    while head < len(parents):
        d = labels[head]
        for child_label in range(d):
            copies = 2 ** (D - child_label)
            parents.extend([head] * copies)
            labels.extend([child_label] * copies)
        head += 1
    return Tree.from_parents(parents, labels)


def random_recursive_tree(n: int, rng=None) -> Tree:
    """Uniform random recursive tree: node ``i`` attaches to a uniform earlier node."""
    rng = check_random_state(rng)
    parents = [NO_PARENT] + [int(rng.integers(i)) for i in range(1, n)]
    return Tree.from_parents(parents)


@dataclass
class AdaptiveAdversary:
    """Interactive classic Omega(log m) instance for adversarial arrival order.

    Every round pairs up the currently targeted machines with unit jobs; the
    machines the algorithm picks become the next round's targets.
    """

    m: int
    active_set: list = field(default_factory=list)
    round: int = 0
    offered: list = field(default_factory=list)
    next_id: int = 0

    def __post_init__(self):
        if self.m < 2 or self.m & (self.m - 1):
            raise ValueError(f"machine count must be a power of two >= 2, got {self.m}")
        if not self.active_set:
            self.active_set = list(range(self.m))

    @property
    def rounds(self) -> int:
        return self.m.bit_length() - 1

    @property
    def n_jobs(self) -> int:
        return self.m - 1


def adversary_next(adv: AdaptiveAdversary, previous_choices=None) -> list[Job] | None:
    """Emit the next round of jobs, or ``None`` once ``log2 m`` rounds are done.

    ``previous_choices`` are the machines the algorithm picked for the jobs of
    the last round, in the order the jobs were offered.

    Raises
    ------
    ProtocolError
        If a choice is not an endpoint of the corresponding offered job.
    """
    if adv.round > 0:
        choices = list(previous_choices or [])
        if len(choices) != len(adv.offered):
            raise ProtocolError(f"expected {len(adv.offered)} choices, got {len(choices)}")
        for pair, c in zip(adv.offered, choices):
            if c not in pair:
                raise ProtocolError(f"machine {c} was not offered for job {pair}")
        adv.active_set = choices
    if adv.round >= adv.rounds:
        adv.offered = []
        return None
    active = adv.active_set
    adv.offered = [(active[i], active[i + 1]) for i in range(0, len(active), 2)]
    jobs = []
    for u, v in adv.offered:
        jobs.append(Job(adv.next_id, {u: 1.0, v: 1.0}))
        adv.next_id += 1
    adv.round += 1
    return jobs


def run_adversary(scheduler, m: int):
    """Play the adaptive adversary against an online scheduler.

    ``scheduler`` needs ``begin(machine_count, n_jobs)`` and ``assign(job)``.
    Returns the generated instance and the scheduler's assignment.
    """
    adv = AdaptiveAdversary(m)
    scheduler.begin(m, adv.n_jobs)
    jobs, choices = [], None
    while True:
        batch = adversary_next(adv, choices)
        if batch is None:
            break
        choices = [scheduler.assign(job) for job in batch]
        jobs.extend(batch)
    return Instance(m, tuple(jobs)), np.array(scheduler.assignment_, copy=True)


@dataclass(frozen=True)
class PlantedSpec:
    """Parameters of a planted instance whose optimum is exactly ``opt_value``.

    ``n_feasible`` is the number of machines with finite load per job (the
    hidden machine plus decoys); ``min_size`` bounds hidden job sizes below.
    """

    m: int
    n: int
    opt_value: float = 1.0
    n_feasible: int = 2
    min_size: float = 0.0

    def __post_init__(self):
        if self.m < 1 or self.n < self.m:
            raise ConfigError(f"planted instance needs n >= m >= 1, got m={self.m}, n={self.n}")
        if not self.opt_value > 0:
            raise ConfigError(f"opt_value must be positive, got {self.opt_value}")
        if self.n_feasible < 1:
            raise ConfigError(f"n_feasible must be at least 1, got {self.n_feasible}")


def gen_planted(spec: PlantedSpec, rng=None, *, return_hidden: bool = False):
    """Random instance with a planted assignment of makespan ``opt_value``.

    Jobs are split evenly over machines; each machine's hidden jobs fill it
    to exactly ``opt_value`` (up to rounding down).  Decoy loads are drawn
    between a job's hidden size and ``opt_value``, so every job's cheapest
    machine is its hidden one and the optimum equals the hidden makespan.

    Raises
    ------
    ConfigError
        If ``ceil(n/m) * min_size > opt_value``.
    """
    rng = check_random_state(rng)
    m, n, opt = spec.m, spec.n, float(spec.opt_value)
    per_machine = -(-n // m)
    if per_machine * spec.min_size > opt:
        raise ConfigError(
            f"{n} jobs of size >= {spec.min_size} cannot fit {m} machines under makespan {opt}"
        )
    hidden = np.empty(n, dtype=np.int64)
    hidden[rng.permutation(n)] = np.arange(n) % m
    sizes = np.empty(n)
    for i in range(m):
        members = np.flatnonzero(hidden == i)
        c = members.shape[0]
        if c == 1:
            sizes[members] = opt
            continue
        share = rng.dirichlet(np.ones(c))
        part = spec.min_size + (opt - c * spec.min_size) * share
        while sum(part.tolist()) > opt:
            part *= opt / sum(part.tolist()) * (1 - 2 ** -52)
        sizes[members] = part

    k_decoy = min(spec.n_feasible, m) - 1
    loads = []
    for j in range(n):
        own = int(hidden[j])
        entry = {own: float(sizes[j])}
        if k_decoy:
            others = rng.choice(m - 1, size=k_decoy, replace=False)
            others = np.where(others >= own, others + 1, others)
            for i in others.tolist():
                entry[i] = float(rng.uniform(sizes[j], opt))
        loads.append(entry)
    instance = Instance.from_loads(m, loads)
    return (instance, hidden) if return_hidden else instance
