"""Arrival orders, seeded trials, and the event analyzers for tree experiments.

Tree schedules range over all node ids: edge ``v`` is the edge from ``v`` to
its parent, and the root's id stands for a phantom edge above the root.
Algorithms never see the phantom; the bad-permutation analyzer uses it as the
root's parent edge.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Instance, machine_loads
from .exceptions import ConfigError
from .generators import (
    PlantedSpec,
    full_kary_tree,
    gen_fat_tree,
    gen_planted,
    gen_recursive_tree,
    run_adversary,
)
from .graphbal import (
    NO_PARENT,
    GreedyScheduler,
    Orientation,
    Tree,
    graph_to_instance,
    greedy_assign,
    greedy_run,
    tree_opt_orientation,
)
from .oracle import brute_force_opt
from .potential import SoftmaxScheduler
from .validation import check_random_state

logger = logging.getLogger(__name__)

STREAM_ORDER = 0
STREAM_TIES = 1
STREAM_INSTANCE = 2
STREAM_SHUFFLE = 3

ALGORITHMS = ("softmax", "greedy", "opt")
ORDERS = ("permutation", "times", "bottom-up", "adversarial")
ANALYZERS = ("bad-nodes", "bad-subtree", "bad-permutation", "fully-loaded")


@dataclass(frozen=True)
class RngSpec:
    """Derivation rule for independent, reproducible random streams."""

    master: int
    trial: int = 0
    stream: int = 0

    @property
    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.master, self.trial, self.stream])

    @property
    def child_seed(self) -> int:
        return int(self.seed_sequence.generate_state(1, dtype=np.uint64)[0])

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed_sequence)


@dataclass(frozen=True, eq=False)
class ArrivalSchedule:
    """Arrival order of ``count`` items, optionally induced by arrival times."""

    permutation: np.ndarray
    times: np.ndarray | None = None

    @classmethod
    def from_times(cls, times) -> "ArrivalSchedule":
        times = np.asarray(times, dtype=float)
        return cls(np.argsort(times, kind="stable"), times)

    def __len__(self) -> int:
        return int(self.permutation.shape[0])

    def positions(self, size: int | None = None) -> np.ndarray:
        """Arrival position of every item id; ``-1`` for ids not scheduled."""
        size = len(self) if size is None else size
        pos = np.full(size, -1, dtype=np.int64)
        pos[self.permutation] = np.arange(len(self))
        return pos

    def without(self, item: int) -> "ArrivalSchedule":
        return ArrivalSchedule(self.permutation[self.permutation != item], self.times)


def sample_permutation(count: int, rng) -> ArrivalSchedule:
    return ArrivalSchedule(check_random_state(rng).permutation(count))


def sample_arrival_times(count: int, rng) -> ArrivalSchedule:
    """I.i.d. uniform arrival times in ``[0, 1)``, redrawn until distinct."""
    rng = check_random_state(rng)
    times = rng.random(count)
    while True:
        order = np.argsort(times)
        dup = times[order[1:]] == times[order[:-1]]
        if not dup.any():
            return ArrivalSchedule(order, times)
        times[order[1:][dup]] = rng.random(int(dup.sum()))


def bottom_up_order(tree: Tree, rng) -> ArrivalSchedule:
    """Edges by increasing height of their upper endpoint, shuffled within a height."""
    edges = check_random_state(rng).permutation(tree.edge_ids)
    level = tree.height[tree.parent[edges]]
    return ArrivalSchedule(edges[np.argsort(level, kind="stable")])


def shuffle_labels(tree: Tree, rng) -> tuple[Tree, np.ndarray]:
    """Relabel nodes by a uniform permutation.

    Returns the relabeled tree and ``mapping`` with ``mapping[old] = new``.
    """
    mapping = check_random_state(rng).permutation(tree.n)
    parent = np.full(tree.n, NO_PARENT, dtype=np.int64)
    nonroot = tree.edge_ids
    parent[mapping[nonroot]] = mapping[tree.parent[nonroot]]
    labels = None
    if tree.labels is not None:
        labels = np.empty(tree.n, dtype=np.int64)
        labels[mapping] = tree.labels
    return Tree.from_parents(parent, labels), mapping


def unshuffle_orientation(orientation: Orientation, mapping: np.ndarray) -> Orientation:
    """Map an orientation of a relabeled tree back to the original ids."""
    inverse = np.empty_like(mapping)
    inverse[mapping] = np.arange(mapping.shape[0])
    head_new = orientation.head[mapping]
    head = np.where(head_new >= 0, inverse[np.maximum(head_new, 0)], -1)
    return Orientation(head, orientation.in_degree[mapping])


def interval_index(times, k: int) -> np.ndarray:
    """1-based index ``h`` of the interval ``((h-1)/k, h/k]`` containing each time."""
    return np.clip(np.ceil(np.asarray(times) * k), 1, k).astype(np.int64)


def _bad_mask(tree: Tree, times, k: int) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    edges = tree.edge_ids
    upper = tree.parent[edges]
    hit = interval_index(times[edges], k) == tree.height[upper]
    counts = np.bincount(upper[hit], minlength=tree.n)
    return tree.is_internal() & (counts >= k * k)


def detect_bad_nodes(tree: Tree, times, k: int) -> np.ndarray:
    """Internal nodes of height ``h`` with at least ``k^2`` child edges arriving in ``I_h``.

    ``times`` is indexed by edge (child node) id; the root's entry is
    ignored.  Returns the sorted node ids.
    """
    return np.flatnonzero(_bad_mask(tree, times, k))


@dataclass
class BadSubtree:
    """Witness: a full ``k^2``-ary subtree whose internal nodes are all bad."""

    root: int
    children: dict = field(default_factory=dict)

    def nodes(self) -> list[int]:
        out, stack = [], [self.root]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(self.children.get(u, ()))
        return out


def find_bad_subtree(tree: Tree, times, k: int) -> BadSubtree | None:
    """Search for a bad subtree hanging from the root.

    A node of height ``h`` qualifies if it is bad and at least ``k^2`` of its
    children whose edges arrived during ``I_h`` qualify in turn; leaves
    always qualify.  The first ``k^2`` qualifying children are kept.
    """
    if tree.height[tree.root] != k:
        return None
    width = k * k
    bad = _bad_mask(tree, times, k)
    iv = interval_index(times, k)
    height = tree.height
    chosen = {}

    def build(u: int) -> bool:
        h = int(height[u])
        if h == 0:
            return True
        if not bad[u]:
            return False
        picked = []
        for v in tree.children(u).tolist():
            if iv[v] == h and height[v] == h - 1 and build(v):
                picked.append(v)
                if len(picked) == width:
                    chosen[u] = picked
                    return True
        return False

    if not build(tree.root):
        return None
    witness = BadSubtree(tree.root)
    stack = [tree.root]
    while stack:
        u = stack.pop()
        if u in chosen:
            witness.children[u] = chosen[u]
            stack.extend(chosen[u])
    return witness


def check_fully_loaded(tree: Tree, orientation: Orientation) -> np.ndarray:
    """Per node: is its in-degree at least its height?"""
    return np.asarray(orientation.in_degree) >= tree.height


def is_bad_permutation(tree: Tree, schedule, edge: int) -> bool:
    """Whether ``schedule`` is bad for edge ``edge`` (its child endpoint id).

    Bad means the parent edge of the upper endpoint ``u`` arrives after the
    edge, and so does every other child edge of ``u`` whose lower endpoint
    has a label at least as large.  If ``u`` is the root, the parent-edge
    condition is checked against the phantom root edge when the schedule
    contains the root's id, and holds vacuously otherwise.
    """
    if tree.labels is None:
        raise ValueError("bad permutations are defined on labeled trees")
    if not 0 <= edge < tree.n or edge == tree.root:
        raise ValueError(f"{edge} is not an edge of the tree")
    perm = np.asarray(getattr(schedule, "permutation", schedule), dtype=np.int64)
    pos = np.full(tree.n, -1, dtype=np.int64)
    pos[perm] = np.arange(perm.shape[0])
    at = pos[edge]
    if at < 0:
        raise ValueError(f"edge {edge} does not appear in the schedule")
    u = int(tree.parent[edge])
    if pos[u] >= 0 and pos[u] < at:
        return False
    siblings = tree.children(u)
    rivals = siblings[(siblings != edge) & (tree.labels[siblings] >= tree.labels[edge])]
    return bool((pos[rivals] > at).all())


def first_root_edge(tree: Tree, schedule, label: int) -> int:
    """Earliest-arriving edge between the root and a child labeled ``label``."""
    kids = tree.children(tree.root)
    kids = kids[tree.labels[kids] == label]
    if kids.size == 0:
        raise ValueError(f"the root has no child labeled {label}")
    perm = np.asarray(getattr(schedule, "permutation", schedule), dtype=np.int64)
    pos = np.full(tree.n, np.iinfo(np.int64).max, dtype=np.int64)
    pos[perm] = np.arange(perm.shape[0])
    return int(kids[np.argmin(pos[kids])])


@dataclass
class TrialReport:
    trial: int
    seed: int
    makespan: float
    opt: float
    ratio: float
    loads: np.ndarray
    flags: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """Resolved experiment description; ``seed`` is always explicit."""

    instance: dict
    algorithm: str = "greedy"
    trials: int = 1
    seed: int = 0
    order: str = "permutation"
    analyzers: list = field(default_factory=list)
    shuffle_labels: bool = False
    a: float | None = None
    doubling: bool = False
    tie_break: str = "random"
    allow_large: bool = False

    def __post_init__(self):
        if not isinstance(self.instance, dict) or "kind" not in self.instance:
            raise ConfigError("instance must be an object with a 'kind' key")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.order not in ORDERS:
            raise ConfigError(f"unknown order {self.order!r}; choose from {ORDERS}")
        unknown = set(self.analyzers) - set(ANALYZERS)
        if unknown:
            raise ConfigError(f"unknown analyzers {sorted(unknown)}")
        if self.tie_break not in ("random", "first"):
            raise ConfigError(f"unknown tie_break {self.tie_break!r}")
        try:
            self.trials = int(self.trials)
            self.seed = int(self.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.trials < 0 or self.seed < 0:
            raise ConfigError("trials and seed must be nonnegative")
        self.analyzers = list(self.analyzers)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "instance" not in data:
            raise ConfigError("config needs an 'instance'")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Source:
    """An experiment's fixed instance, resolved once before the trials."""

    kind: str
    tree: Tree | None = None
    instance: Instance | None = None
    opt: float = 1.0
    opt_assignment: np.ndarray | None = None
    k: int | None = None
    m: int | None = None


def _need(spec: dict, key: str):
    if key not in spec:
        raise ConfigError(f"instance kind {spec['kind']!r} needs {key!r}")
    return spec[key]


def resolve_source(config: ExperimentConfig) -> Source:
    """Build the instance named by ``config.instance``."""
    spec = config.instance
    kind = spec["kind"]
    big = config.allow_large
    if kind == "fat-tree":
        k = int(_need(spec, "k"))
        return Source("tree", tree=gen_fat_tree(k, allow_large=big), k=k)
    if kind == "recursive":
        return Source("tree", tree=gen_recursive_tree(int(_need(spec, "D")), allow_large=big))
    if kind == "full-tree":
        tree = full_kary_tree(int(_need(spec, "arity")), int(_need(spec, "height")), allow_large=big)
        return Source("tree", tree=tree, k=spec.get("k"))
    if kind == "planted":
        pspec = PlantedSpec(
            int(_need(spec, "m")), int(_need(spec, "n")), float(spec.get("opt", 1.0)),
            int(spec.get("n_feasible", 2)), float(spec.get("min_size", 0.0)),
        )
        rng = RngSpec(config.seed, 0, STREAM_INSTANCE).generator()
        instance, hidden = gen_planted(pspec, rng, return_hidden=True)
        return Source("instance", instance=instance, opt=pspec.opt_value, opt_assignment=hidden)
    if kind == "classic-pairs":
        return Source("adversary", m=int(_need(spec, "m")))
    if kind == "file":
        with open(_need(spec, "path")) as fh:
            data = json.load(fh)
        if "parents" in data:
            return Source("tree", tree=Tree.from_dict(data), k=spec.get("k"))
        instance = Instance.from_dict(data)
        opt, witness = brute_force_opt(instance)
        return Source("instance", instance=instance, opt=opt, opt_assignment=witness)
    raise ConfigError(f"unknown instance kind {kind!r}")


def _check_compatible(config: ExperimentConfig, source: Source) -> None:
    if source.kind == "adversary":
        if config.order != "adversarial":
            raise ConfigError("classic-pairs instances need order 'adversarial'")
        if config.algorithm == "opt":
            raise ConfigError("the adaptive adversary needs an online algorithm")
    elif config.order == "adversarial":
        raise ConfigError("order 'adversarial' is only defined for classic-pairs instances")
    if source.kind != "tree":
        if config.order == "bottom-up":
            raise ConfigError("bottom-up order needs a tree instance")
        if config.analyzers or config.shuffle_labels:
            raise ConfigError("analyzers and label shuffling need a tree instance")
        return
    if {"bad-nodes", "bad-subtree"} & set(config.analyzers):
        if config.order != "times":
            raise ConfigError("bad-node analyzers need order 'times'")
        if source.k is None:
            raise ConfigError("bad-node analyzers need the fat-tree parameter k")
    if "bad-permutation" in config.analyzers:
        if source.tree.labels is None:
            raise ConfigError("bad-permutation analyzer needs a labeled (recursive) tree")
        if config.order == "bottom-up":
            raise ConfigError("bad-permutation analyzer needs a random order")


def _orient(config: ExperimentConfig, tree: Tree, edge_order: np.ndarray, rng) -> Orientation:
    if config.algorithm == "opt":
        return tree_opt_orientation(tree)
    if config.algorithm == "greedy":
        return greedy_run(tree, edge_order, rng, tie_break=config.tie_break)
    instance = graph_to_instance(tree)
    edge_to_job = np.empty(tree.n, dtype=np.int64)
    edge_to_job[tree.edge_ids] = np.arange(tree.n_edges)
    sched = SoftmaxScheduler(a=config.a, doubling=config.doubling).fit(instance, edge_to_job[edge_order])
    head = np.full(tree.n, -1, dtype=np.int64)
    head[tree.edge_ids] = sched.assignment_
    deg = np.bincount(sched.assignment_, minlength=tree.n)
    return Orientation(head, deg)


def _tree_trial(config: ExperimentConfig, source: Source, trial: int) -> TrialReport:
    tree = source.tree
    order_rng = RngSpec(config.seed, trial, STREAM_ORDER).generator()
    if config.order == "permutation":
        schedule = sample_permutation(tree.n, order_rng)
    elif config.order == "times":
        schedule = sample_arrival_times(tree.n, order_rng)
    else:
        schedule = bottom_up_order(tree, order_rng)
    edge_order = schedule.without(tree.root).permutation
    tie_rng = RngSpec(config.seed, trial, STREAM_TIES).generator()

    if config.shuffle_labels:
        shuffled, mapping = shuffle_labels(tree, RngSpec(config.seed, trial, STREAM_SHUFFLE).generator())
        orientation = unshuffle_orientation(_orient(config, shuffled, mapping[edge_order], tie_rng), mapping)
    else:
        orientation = _orient(config, tree, edge_order, tie_rng)

    flags = {}
    if "bad-nodes" in config.analyzers:
        internal = int(tree.is_internal().sum())
        flags["bad_node_frac"] = detect_bad_nodes(tree, schedule.times, source.k).shape[0] / internal
    if "bad-subtree" in config.analyzers:
        flags["bad_subtree"] = float(find_bad_subtree(tree, schedule.times, source.k) is not None)
    if "bad-permutation" in config.analyzers:
        flags["root_load"] = float(orientation.in_degree[tree.root])
        present = set(tree.labels[tree.children(tree.root)].tolist())
        for d in range(int(tree.labels[tree.root])):
            if d not in present:
                continue
            e = first_root_edge(tree, schedule, d)
            flags[f"bad_perm_l{d}"] = float(is_bad_permutation(tree, schedule, e))
            flags[f"root_gets_l{d}"] = float(orientation.head[e] == tree.root)
    if "fully-loaded" in config.analyzers:
        full = check_fully_loaded(tree, orientation)
        flags["root_fully_loaded"] = float(full[tree.root])
        flags["fully_loaded_frac"] = float(full.mean())

    value = float(orientation.max_in_degree)
    opt = 1.0 if tree.n > 1 else 0.0
    return TrialReport(trial, RngSpec(config.seed, trial, STREAM_ORDER).child_seed, value, opt,
                       value / opt if opt else 1.0, orientation.in_degree.astype(float), flags)


def _instance_trial(config: ExperimentConfig, source: Source, trial: int) -> TrialReport:
    seed = RngSpec(config.seed, trial, STREAM_ORDER).child_seed
    tie_rng = RngSpec(config.seed, trial, STREAM_TIES).generator()
    if source.kind == "adversary":
        if config.algorithm == "softmax":
            sched = SoftmaxScheduler(a=config.a, doubling=config.doubling)
        else:
            sched = GreedyScheduler(tie_break=config.tie_break, random_state=tie_rng)
        run_adversary(sched, source.m)
        loads = np.asarray(sched.loads_, dtype=float)
        value = float(loads.max())
        return TrialReport(trial, seed, value, 1.0, value, loads, {})

    instance = source.instance
    order_rng = RngSpec(config.seed, trial, STREAM_ORDER).generator()
    if config.order == "permutation":
        order = sample_permutation(instance.n_jobs, order_rng).permutation
    else:
        order = sample_arrival_times(instance.n_jobs, order_rng).permutation
    if config.algorithm == "opt":
        assignment = source.opt_assignment
    elif config.algorithm == "greedy":
        assignment = greedy_assign(instance, order, tie_rng, tie_break=config.tie_break)
    else:
        assignment = SoftmaxScheduler(a=config.a, doubling=config.doubling).fit_predict(instance, order)
    loads = machine_loads(assignment, instance)
    value = float(loads.max()) if instance.n_jobs else 0.0
    return TrialReport(trial, seed, value, source.opt, value / source.opt if source.opt else 1.0, loads, {})


def run_trial(config: ExperimentConfig, source: Source, trial: int) -> TrialReport:
    if source.kind == "tree":
        return _tree_trial(config, source, trial)
    return _instance_trial(config, source, trial)


def aggregate(reports: list[TrialReport]) -> dict:
    """Summary statistics over the reports, independent of their input order."""
    reports = sorted(reports, key=lambda r: r.trial)
    out = {"trials": len(reports)}
    if not reports:
        return out
    for name in ("makespan", "ratio"):
        values = np.array([getattr(r, name) for r in reports], dtype=float)
        out[f"{name}_mean"] = float(values.mean())
        out[f"{name}_std"] = float(values.std(ddof=1)) if values.size > 1 else 0.0
        out[f"{name}_min"] = float(values.min())
        out[f"{name}_max"] = float(values.max())
        for q in (10, 50, 90):
            out[f"{name}_q{q}"] = float(np.percentile(values, q))
    keys = sorted({k for r in reports for k in r.flags})
    for key in keys:
        values = [r.flags[key] for r in reports if key in r.flags]
        out[f"{key}_mean"] = float(np.mean(values))
    return out


@dataclass
class TrialResults:
    config: ExperimentConfig
    reports: list
    aggregate: dict


def run_trials(config, threads: int = 1) -> TrialResults:
    """Run ``config.trials`` independent seeded trials.

    Trials may run on up to ``threads`` worker threads; every trial draws
    from its own derived streams, so results do not depend on ``threads``.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    source = resolve_source(config)
    _check_compatible(config, source)
    logger.info("running %d trials of %s on %s", config.trials, config.algorithm, config.instance)
    if threads > 1 and config.trials > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(lambda t: run_trial(config, source, t), range(config.trials)))
    else:
        reports = [run_trial(config, source, t) for t in range(config.trials)]
    return TrialResults(config, reports, aggregate(reports))
