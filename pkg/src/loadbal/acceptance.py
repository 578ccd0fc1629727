"""Desk-scale acceptance suite.

Each criterion is a function returning ``(passed, measured, expected)``;
``run_all`` times it and fails it if it overruns its wall-clock budget.
Seeds are fixed so the report is reproducible.
"""

from __future__ import annotations

import contextlib
import io
import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import calibration
from .core import Instance, makespan
from .generators import (
    PlantedSpec,
    count_recursive_nodes,
    full_kary_tree,
    gen_fat_tree,
    gen_planted,
    gen_recursive_tree,
    random_recursive_tree,
    run_adversary,
)
from .graphbal import (
    GreedyScheduler,
    NO_PARENT,
    Tree,
    draw_coins,
    graph_to_instance,
    greedy_assign,
    greedy_orient_edges,
    greedy_run,
    tree_opt_orientation,
)
from .oracle import brute_force_opt, potential_bound_check
from .potential import SoftmaxScheduler, choose_a, grad_psi, psi, softmax_run
from .sim import (
    bottom_up_order,
    detect_bad_nodes,
    first_root_edge,
    is_bad_permutation,
    sample_arrival_times,
)

SUITE_SEED = 20240601


def _rng(index: int) -> np.random.Generator:
    return np.random.default_rng([SUITE_SEED, index])


@dataclass
class CriterionResult:
    index: int
    name: str
    passed: bool
    measured: str
    expected: str
    seconds: float
    limit: float

    def line(self, timings: bool = False) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.index:2d} {self.name}: measured {self.measured}; expected {self.expected}"
        if timings:
            text += f" ({self.seconds:.2f}s of {self.limit:g}s)"
        return text


def potential_sandwich():
    rng = _rng(1)
    worst_sandwich = worst_sum = worst_fd = 0.0
    h = 1e-4
    for _ in range(1000):
        m = int(rng.integers(2, 513))
        a = float(rng.uniform(0.01, 2.0))
        x = rng.uniform(0, 20, m)
        top = float(x.max())
        val = psi(x, a)
        worst_sandwich = max(worst_sandwich, top - val, val - top - math.log(m) / a)
        g = grad_psi(x, a)
        worst_sum = max(worst_sum, abs(float(g.sum()) - 1))
        # central differences on a few coordinates, always including the argmax
        for i in {int(x.argmax()), *rng.integers(0, m, 2).tolist()}:
            up, down = x.copy(), x.copy()
            up[i] += h
            down[i] -= h
            worst_fd = max(worst_fd, abs((psi(up, a) - psi(down, a)) / (2 * h) - g[i]))
    passed = worst_sandwich <= 1e-9 and worst_sum <= 1e-9 and worst_fd <= 1e-6
    measured = f"sandwich slack {worst_sandwich:.2e}, |sum grad - 1| {worst_sum:.2e}, fd error {worst_fd:.2e}"
    return passed, measured, "<= 1e-9, <= 1e-9, <= 1e-6"


def gradient_growth():
    rng = _rng(2)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(2, 513))
        a = float(rng.uniform(0.01, 2.0))
        x = rng.uniform(0, 20, m)
        before = grad_psi(x, a)
        y = x.copy()
        y[int(rng.integers(m))] += float(rng.uniform(0, 1))
        after = grad_psi(y, a)
        worst = max(worst, float((after / (math.exp(a) * before)).max()))
    return worst <= 1 + 1e-12, f"max ratio grad_after / (e^a grad_before) = {worst:.12f}", "<= 1 (+1e-12)"


def potential_inequality():
    rng = _rng(3)
    m, n = 50, 1000
    worst = -math.inf
    for _ in range(100):
        inst, hidden = gen_planted(PlantedSpec(m, n, 1.0), rng, return_hidden=True)
        lhs, rhs = potential_bound_check(inst, rng.permutation(n), hidden)
        worst = max(worst, lhs - rhs)
    return worst <= 1e-6, f"max (lhs - rhs) over 100 trials = {worst:.4f}", "<= 1e-6"


def planted_cap():
    rng = _rng(4)
    m, n = 100, 2000
    a = choose_a(m)
    cap = 2 * (2 * math.exp(2 * a) + math.log(m) / a)
    spans = []
    for _ in range(200):
        inst = gen_planted(PlantedSpec(m, n, 1.0), rng)
        spans.append(makespan(softmax_run(inst, rng.permutation(n), a), inst))
    mean = float(np.mean(spans))
    return mean <= cap, f"mean makespan {mean:.4f} (max {max(spans):.4f})", f"<= {cap:.4f}"


def classic_adversary():
    m = 64
    out = []
    for sched in (SoftmaxScheduler(), GreedyScheduler(tie_break="first")):
        inst, assignment = run_adversary(sched, m)
        tree = Tree.from_edges(m, [tuple(job.loads) for job in inst.jobs])
        out.append((makespan(assignment, inst), tree_opt_orientation(tree).max_in_degree))
    passed = all(span >= math.log2(m) and opt == 1 for span, opt in out)
    measured = ", ".join(f"{name} {span:g} (tree OPT {opt})" for name, (span, opt) in zip(("softmax", "greedy"), out))
    return passed, measured, ">= 6 with OPT 1"


def bad_node_frequency():
    rng = _rng(6)
    k = 3
    tree = gen_fat_tree(k)
    internal = int(tree.is_internal().sum())
    fracs = [detect_bad_nodes(tree, sample_arrival_times(tree.n, rng).times, k).shape[0] / internal
             for _ in range(20)]
    return min(fracs) >= 0.96, f"min per-trial fraction {min(fracs):.4f} (mean {np.mean(fracs):.4f})", ">= 0.96"


def chernoff_binomial():
    rng = _rng(7)
    samples = rng.binomial(81, 1 / 3, size=10 ** 6)
    freq = float((samples < 9).mean())
    bound = math.exp(-6)
    return freq <= bound, f"P[X < 9] = {freq:.3e}", f"<= e^-6 = {bound:.6f}"


def bad_permutation_frequency():
    rng = _rng(8)
    tree = gen_recursive_tree(4)
    trials = 20_000
    bad = 0
    ids = np.arange(tree.n)
    for _ in range(trials):
        # the root id stands for the phantom edge above the root
        perm = rng.permutation(ids)
        bad += is_bad_permutation(tree, perm, first_root_edge(tree, perm, 2))
    freq = bad / trials
    return abs(freq - 4 / 7) <= 0.02, f"frequency {freq:.4f}", f"4/7 = {4 / 7:.4f} +- 0.02"


def recursive_counts():
    expected = {0: [1], 1: [1, 3], 2: [1, 5, 15], 3: [1, 9, 45, 135], 4: [1, 17, 153, 765, 2295]}
    ok = all(count_recursive_nodes(D) == c and gen_recursive_tree(D).n == c[-1] for D, c in expected.items())
    bounds = [count_recursive_nodes(D)[-1] <= 4 ** (D * D) for D in range(7)]
    sizes = [count_recursive_nodes(D)[-1] for D in range(7)]
    return ok and all(bounds), f"n(D) for D=0..6 = {sizes}", "counts match generator; n(D) <= 4^(D^2)"


def bottom_up_loading():
    cal = calibration.BOTTOM_UP_ROOT_LOAD
    rng = _rng(10)
    tree = full_kary_tree(cal["arity"], cal["height"])
    trials = 1000
    hits = sum(
        greedy_run(tree, bottom_up_order(tree, rng), rng).in_degree[tree.root] >= cal["height"]
        for _ in range(trials)
    )
    freq = hits / trials
    return freq >= cal["threshold"], f"P[root in-degree >= 3] = {freq:.4f}", f">= {cal['threshold']} (pilot)"


def oracle_equivalence():
    rng = _rng(11)
    worst = -math.inf
    for _ in range(200):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(1, 9))
        jobs = []
        for _ in range(n):
            keys = rng.choice(m, int(rng.integers(1, m + 1)), replace=False)
            jobs.append({int(i): float(rng.uniform(0, 5)) for i in keys})
        inst = Instance.from_loads(m, jobs)
        opt, _ = brute_force_opt(inst)
        order = rng.permutation(n)
        for assignment in (softmax_run(inst, order), greedy_assign(inst, order, rng)):
            worst = max(worst, opt - makespan(assignment, inst))
    tree_opts = set()
    for _ in range(50):
        tree = random_recursive_tree(int(rng.integers(2, 10)), rng)
        tree_opts.add(brute_force_opt(graph_to_instance(tree))[0])
    passed = worst <= 1e-9 and tree_opts == {1.0}
    return passed, f"max (opt - alg) {worst:.3g}; tree optima {sorted(tree_opts)}", "<= 1e-9; {1.0}"


def run_determinism():
    from .cli import main

    config = ('{"instance": {"kind": "fat-tree", "k": 2}, "algorithm": "greedy", "trials": 40, '
              '"order": "times", "analyzers": ["bad-nodes", "fully-loaded"], "seed": 11}')
    blobs = {}
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "config.json")
        with open(cfg, "w") as fh:
            fh.write(config)
        for fmt in ("csv", "json"):
            for threads in (1, 8):
                for rep in range(2):
                    out = os.path.join(tmp, f"out-{fmt}-{threads}-{rep}")
                    with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(io.StringIO()):
                        code = main(["run", "--config", cfg, "--threads", str(threads), "--format", fmt,
                                     "--out", out])
                    if code != 0:
                        return False, f"exit code {code}", "0"
                    with open(out, "rb") as fh:
                        blobs[(fmt, threads, rep)] = fh.read()
    same = all(blobs[(f, t, 0)] == blobs[(f, t, 1)] for f in ("csv", "json") for t in (1, 8))
    across = all(blobs[(f, 1, 0)] == blobs[(f, 8, 0)] for f in ("csv", "json"))
    return same and across, f"repeat identical {same}; threads 1 vs 8 identical {across}", "both True"


def greedy_monotonicity():
    rng = _rng(13)
    violations = 0
    for _ in range(100):
        tree = random_recursive_tree(int(rng.integers(3, 80)), rng)
        order = rng.permutation(tree.edge_ids)
        coins = draw_coins(tree.n, rng)
        tails = np.where(tree.parent == NO_PARENT, tree.root, tree.parent).tolist()
        heads = list(range(tree.n))
        _, full = greedy_orient_edges(tree.n, tails, heads, order.tolist(), coins)
        leaves = np.flatnonzero(~tree.is_internal())
        leaf = int(rng.choice(leaves[leaves != tree.root]))
        _, reduced = greedy_orient_edges(tree.n, tails, heads, order[order != leaf].tolist(), coins)
        violations += int(reduced.max() > full.max())
    return violations == 0, f"{violations} increases in 100 deletions", "0"


CRITERIA = [
    (1, "potential sandwich and gradient", potential_sandwich, 5),
    (2, "coordinatewise gradient growth", gradient_growth, 5),
    (3, "first-phase potential inequality", potential_inequality, 30),
    (4, "planted makespan cap", planted_cap, 120),
    (5, "classic adaptive adversary", classic_adversary, 1),
    (6, "bad-node frequency on fat tree k=3", bad_node_frequency, 120),
    (7, "Chernoff bound on Binomial(81, 1/3)", chernoff_binomial, 30),
    (8, "bad-permutation frequency on T_4", bad_permutation_frequency, 120),
    (9, "recursive tree sizes", recursive_counts, 1),
    (10, "bottom-up greedy root load", bottom_up_loading, 30),
    (11, "brute-force oracle equivalence", oracle_equivalence, 60),
    (12, "run determinism across threads", run_determinism, 60),
    (13, "greedy monotonicity under leaf deletion", greedy_monotonicity, 30),
]


def run_criterion(index: int) -> CriterionResult:
    _, name, check, limit = next(c for c in CRITERIA if c[0] == index)
    start = time.perf_counter()
    passed, measured, expected = check()
    seconds = time.perf_counter() - start
    if seconds > limit:
        passed = False
        measured += f" [over budget: {seconds:.1f}s > {limit}s]"
    return CriterionResult(index, name, bool(passed), measured, expected, seconds, limit)


def run_all(only=None) -> list[CriterionResult]:
    return [run_criterion(i) for i, *_ in CRITERIA if only is None or i in only]
