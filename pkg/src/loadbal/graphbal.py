"""Trees, edge orientations and the greedy orienter.

A tree's edges are identified by their child node, so a tree on ``n`` nodes
has edge ids ``{0..n-1} - {root}``.  Orienting edge ``v`` means choosing its
head, either ``v`` itself or ``parent[v]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import Instance, Job, empty_assignment, zero_loads
from .exceptions import InfeasibleInstanceError, InvalidScheduleError
from .validation import check_instance, check_permutation, check_random_state

NO_PARENT = -1


def _gather_children(child_ptr, child_idx, nodes):
    starts, ends = child_ptr[nodes], child_ptr[nodes + 1]
    lens = ends - starts
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(total)
    return child_idx[offsets]


@dataclass(frozen=True, eq=False)
class Tree:
    """Rooted tree stored as a parent array plus a CSR child index.

    ``height`` is the distance to the closest leaf below a node, ``depth`` the
    distance from the root.  ``labels`` is only populated for recursive
    lower-bound trees.
    """

    parent: np.ndarray
    labels: np.ndarray | None
    root: int
    depth: np.ndarray
    height: np.ndarray
    child_ptr: np.ndarray
    child_idx: np.ndarray

    @classmethod
    def from_parents(cls, parents: Sequence, labels: Sequence | None = None) -> "Tree":
        parent = np.array([NO_PARENT if p is None else p for p in parents], dtype=np.int64)
        n = parent.shape[0]
        if n == 0:
            raise ValueError("a tree needs at least one node")
        roots = np.flatnonzero(parent == NO_PARENT)
        if roots.shape[0] != 1:
            raise ValueError(f"a tree needs exactly one root, found {roots.shape[0]}")
        root = int(roots[0])
        nonroot = np.flatnonzero(parent != NO_PARENT)
        if nonroot.size and (parent[nonroot].min() < 0 or parent[nonroot].max() >= n):
            raise ValueError("parent index out of range")

        by_parent = nonroot[np.argsort(parent[nonroot], kind="stable")]
        counts = np.bincount(parent[nonroot], minlength=n)
        child_ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

        depth = np.full(n, -1, dtype=np.int64)
        levels = [np.array([root], dtype=np.int64)]
        depth[root] = 0
        seen = 1
        while True:
            nxt = _gather_children(child_ptr, by_parent, levels[-1])
            if nxt.size == 0:
                break
            if (depth[nxt] >= 0).any():
                raise ValueError("parent array contains a cycle")
            depth[nxt] = len(levels)
            seen += nxt.size
            levels.append(nxt)
            if seen > n:
                raise ValueError("parent array contains a cycle")
        if seen != n:
            raise ValueError("parent array is not connected (cycle detached from the root)")

        height = np.where(counts == 0, 0, np.iinfo(np.int64).max).astype(np.int64)
        for level in reversed(levels[1:]):
            np.minimum.at(height, parent[level], height[level] + 1)

        lab = None
        if labels is not None:
            lab = np.array([-1 if x is None else x for x in labels], dtype=np.int64)
            if lab.shape != (n,):
                raise ValueError("labels must have one entry per node")
        for arr in (parent, depth, height, child_ptr, by_parent):
            arr.flags.writeable = False
        if lab is not None:
            lab.flags.writeable = False
        return cls(parent, lab, root, depth, height, child_ptr, by_parent)

    @classmethod
    def from_edges(cls, n: int, edges, root: int = 0) -> "Tree":
        """Root an undirected edge list on ``n`` nodes at ``root``."""
        adj = [[] for _ in range(n)]
        for u, v in edges:
            adj[u].append(v)
            adj[v].append(u)
        parents = [None] * n
        seen = [False] * n
        seen[root] = True
        stack = [root]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    parents[v] = u
                    stack.append(v)
        if len(edges) != n - 1 or not all(seen):
            raise ValueError("edge list is not a spanning tree")
        return cls.from_parents(parents)

    @property
    def n(self) -> int:
        return int(self.parent.shape[0])

    node_count = n

    @property
    def n_edges(self) -> int:
        return self.n - 1

    @property
    def edge_ids(self) -> np.ndarray:
        ids = np.arange(self.n, dtype=np.int64)
        return ids[ids != self.root]

    def children(self, u: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[u]:self.child_ptr[u + 1]]

    def n_children(self) -> np.ndarray:
        return np.diff(self.child_ptr)

    def is_internal(self) -> np.ndarray:
        return self.n_children() > 0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "root": self.root,
            "parents": [None if p == NO_PARENT else int(p) for p in self.parent.tolist()],
            "labels": [None] * self.n if self.labels is None
            else [None if x < 0 else int(x) for x in self.labels.tolist()],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Tree":
        labels = data.get("labels")
        if labels is not None and all(x is None for x in labels):
            labels = None
        tree = cls.from_parents(data["parents"], labels)
        if int(data.get("n", tree.n)) != tree.n or int(data.get("root", tree.root)) != tree.root:
            raise ValueError("tree header disagrees with its parent array")
        return tree

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class Orientation:
    """Chosen head of every tree edge, indexed by edge id (``-1`` for the root)."""

    head: np.ndarray
    in_degree: np.ndarray

    @property
    def max_in_degree(self) -> int:
        return int(self.in_degree.max()) if self.in_degree.size else 0

    def __post_init__(self):
        if int(self.in_degree.sum()) != int((self.head >= 0).sum()):
            raise ValueError("in-degrees disagree with the oriented edges")


def greedy_orient_step(in_degrees, edge, rng) -> int:
    """Orient ``edge = (u, v)`` toward its endpoint of smaller in-degree.

    Ties are broken by a fair coin from ``rng``.  ``in_degrees`` is updated
    in place and the chosen endpoint returned.
    """
    u, v = edge
    if in_degrees[u] < in_degrees[v]:
        w = u
    elif in_degrees[v] < in_degrees[u]:
        w = v
    else:
        w = u if check_random_state(rng).random() < 0.5 else v
    in_degrees[w] += 1
    return w


def greedy_orient_edges(n_nodes: int, tails: Sequence[int], heads: Sequence[int], order, coins) -> tuple[np.ndarray, np.ndarray]:
    """Greedy orientation of an arbitrary edge list.

    Edge ``e`` joins ``tails[e]`` and ``heads[e]``; only the edges listed in
    ``order`` arrive.  On a tie, ``coins[e] == 0`` picks ``tails[e]``.  No
    check is made that ``order`` covers every edge, which is what lets
    callers replay the same coins on a sub-instance.

    Returns the per-edge chosen endpoint (``-1`` for edges that never
    arrived) and the in-degree of every node.
    """
    deg = [0] * n_nodes
    chosen = [-1] * len(tails)
    tails = list(tails)
    heads = list(heads)
    coins = list(coins)
    for e in order:
        u = tails[e]
        v = heads[e]
        du = deg[u]
        dv = deg[v]
        w = u if du < dv or (du == dv and coins[e] == 0) else v
        deg[w] += 1
        chosen[e] = w
    return np.array(chosen, dtype=np.int64), np.array(deg, dtype=np.int64)


def check_edge_schedule(tree: Tree, schedule) -> np.ndarray:
    """Return ``schedule`` as an array after checking it lists every edge once."""
    order = np.asarray(getattr(schedule, "permutation", schedule), dtype=np.int64).ravel()
    if order.shape[0] != tree.n_edges:
        raise InvalidScheduleError(f"schedule has {order.shape[0]} edges, tree has {tree.n_edges}")
    if order.size and (order.min() < 0 or order.max() >= tree.n or (order == tree.root).any()):
        raise InvalidScheduleError("schedule lists an id that is not an edge of the tree")
    if np.unique(order).shape[0] != order.shape[0]:
        raise InvalidScheduleError("schedule lists an edge more than once")
    return order


def draw_coins(n: int, rng, tie_break: str = "random") -> np.ndarray:
    if tie_break == "random":
        return check_random_state(rng).integers(0, 2, size=n)
    if tie_break == "first":
        return np.zeros(n, dtype=np.int64)
    raise ValueError(f"unknown tie_break {tie_break!r}")


def greedy_run(tree: Tree, schedule, rng=None, *, tie_break: str = "random") -> Orientation:
    """Run the greedy orienter over ``tree`` with edges arriving per ``schedule``.

    One tie coin is drawn per edge up front, so the randomness is tied to
    edge identities rather than arrival positions.

    Raises
    ------
    InvalidScheduleError
        If ``schedule`` misses or repeats an edge.
    """
    order = check_edge_schedule(tree, schedule)
    coins = draw_coins(tree.n, rng, tie_break)
    tails = np.where(tree.parent == NO_PARENT, tree.root, tree.parent)
    chosen, deg = greedy_orient_edges(tree.n, tails.tolist(), range(tree.n), order.tolist(), coins)
    return Orientation(chosen, deg)


def tree_opt_orientation(tree: Tree) -> Orientation:
    """Orient every edge away from the root; max in-degree 1 for any edge."""
    head = np.arange(tree.n, dtype=np.int64)
    head[tree.root] = -1
    deg = np.ones(tree.n, dtype=np.int64)
    deg[tree.root] = 0
    return Orientation(head, deg)


def graph_to_instance(tree: Tree) -> Instance:
    """One machine per node, one unit job per edge on its two endpoints.

    Job ``j`` is the edge ``tree.edge_ids[j]``.
    """
    return Instance.from_loads(
        tree.n, [{int(tree.parent[v]): 1.0, int(v): 1.0} for v in tree.edge_ids.tolist()]
    )


def orientation_to_assignment(tree: Tree, orientation: Orientation) -> np.ndarray:
    return np.asarray(orientation.head)[tree.edge_ids].copy()


def greedy_assign(instance: Instance, order=None, rng=None, *, tie_break: str = "random") -> np.ndarray:
    """Least-loaded greedy for general instances.

    Each job goes to the feasible machine with the smallest current load;
    ties are uniform among the tied machines (or lowest index with
    ``tie_break="first"``).  On graph instances this is the greedy orienter.
    """
    sched = GreedyScheduler(tie_break=tie_break, random_state=rng)
    return sched.fit(instance, order).assignment_


class GreedyScheduler(BaseEstimator):
    """Greedy least-loaded scheduler / orienter.

    ``fit`` accepts either a :class:`Tree` (greedy orientation) or an
    :class:`~loadbal.core.Instance` (least-loaded assignment).

    Parameters
    ----------
    tie_break : {"random", "first"}
    random_state : int, Generator or None
    """

    def __init__(self, tie_break="random", random_state=None):
        self.tie_break = tie_break
        self.random_state = random_state

    def begin(self, machine_count: int, n_jobs: int) -> "GreedyScheduler":
        if self.tie_break not in ("random", "first"):
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        self.rng_ = check_random_state(self.random_state)
        self.loads_ = zero_loads(machine_count)
        self.assignment_ = empty_assignment(n_jobs)
        self.makespan_ = 0.0
        return self

    def assign(self, job: Job) -> int:
        check_is_fitted(self, "loads_")
        if not len(job.machines):
            raise InfeasibleInstanceError(f"job {job.id} has no finite load")
        current = self.loads_[job.machines]
        tied = job.machines[current == current.min()]
        if self.tie_break == "random" and tied.shape[0] > 1:
            machine = int(tied[self.rng_.integers(tied.shape[0])])
        else:
            machine = int(tied[0])
        self.loads_[machine] += job.loads[machine]
        self.assignment_[job.id] = machine
        self.makespan_ = float(self.loads_.max())
        return machine

    def fit(self, X, order=None) -> "GreedyScheduler":
        if isinstance(X, Tree):
            if order is None:
                order = X.edge_ids
            self.orientation_ = greedy_run(
                X, order, check_random_state(self.random_state), tie_break=self.tie_break
            )
            self.assignment_ = orientation_to_assignment(X, self.orientation_)
            self.loads_ = self.orientation_.in_degree.astype(float)
            self.makespan_ = float(self.orientation_.max_in_degree)
            return self
        check_instance(X)
        order = check_permutation(order, X.n_jobs)
        self.begin(X.machine_count, X.n_jobs)
        for j in order.tolist():
            self.assign(X.jobs[j])
        return self

    def fit_predict(self, X, order=None) -> np.ndarray:
        return self.fit(X, order).assignment_
