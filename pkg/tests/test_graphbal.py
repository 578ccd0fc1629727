import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadbal.core import makespan
from loadbal.exceptions import InvalidScheduleError
from loadbal.generators import full_kary_tree, gen_fat_tree, random_recursive_tree
from loadbal.graphbal import (
    GreedyScheduler,
    Tree,
    graph_to_instance,
    greedy_assign,
    greedy_orient_edges,
    greedy_orient_step,
    greedy_run,
    orientation_to_assignment,
    tree_opt_orientation,
)
from loadbal.sim import bottom_up_order


def star(c):
    return Tree.from_parents([None] + [0] * c)


def test_tree_structure_and_heights():
    # 0 -> 1 -> 2 -> 3 and 0 -> 4: the root's closest leaf is 4
    t = Tree.from_parents([None, 0, 1, 2, 0])
    assert t.root == 0
    assert t.height.tolist() == [1, 2, 1, 0, 0]
    assert t.depth.tolist() == [0, 1, 2, 3, 1]
    assert sorted(t.children(0).tolist()) == [1, 4]
    assert t.edge_ids.tolist() == [1, 2, 3, 4]


@pytest.mark.parametrize(
    "parents",
    [[None, None], [1, 0], [None, 2, 1], [None, 5], []],
)
def test_tree_rejects_malformed(parents):
    with pytest.raises(ValueError):
        Tree.from_parents(parents)


def test_tree_json_roundtrip():
    t = Tree.from_parents([None, 0, 0, 1], labels=[2, 0, 1, 0])
    data = t.to_dict()
    assert data == {"n": 4, "root": 0, "parents": [None, 0, 0, 1], "labels": [2, 0, 1, 0]}
    back = Tree.from_dict(data)
    assert back.parent.tolist() == t.parent.tolist()
    assert back.labels.tolist() == [2, 0, 1, 0]
    plain = Tree.from_dict({"n": 2, "root": 1, "parents": [1, None], "labels": [None, None]})
    assert plain.labels is None and plain.root == 1


def test_orient_step_examples():
    deg = {"u": 2, "v": 1}
    assert greedy_orient_step(deg, ("u", "v"), np.random.default_rng(0)) == "v"
    assert deg == {"u": 2, "v": 2}


def test_orient_step_tie_is_fair():
    rng = np.random.default_rng(2024)
    wins = 0
    for _ in range(10_000):
        deg = [0, 0]
        wins += greedy_orient_step(deg, (0, 1), rng) == 0
    assert abs(wins - 5000) <= 300


def test_greedy_run_single_edge_tie_is_fair():
    t = Tree.from_parents([None, 0])
    rng = np.random.default_rng(99)
    to_root = sum(greedy_run(t, [1], rng).head[1] == 0 for _ in range(10_000))
    assert abs(to_root - 5000) <= 300


def test_path_trace():
    # a - b - c as 0 - 1 - 2 rooted at b; edge (a,b) is edge 0, (b,c) is edge 2
    t = Tree.from_parents([1, None, 1])
    for seed in range(40):
        o = greedy_run(t, [0, 2], np.random.default_rng(seed))
        if o.head[0] == 1:
            assert o.head[2] == 2
            assert o.max_in_degree == 1


def test_greedy_run_star_bounds():
    for c in (1, 3, 8):
        t = star(c)
        for seed in range(20):
            o = greedy_run(t, np.random.default_rng(seed).permutation(t.edge_ids), seed)
            assert 1 <= o.max_in_degree <= c


def test_greedy_run_schedule_errors():
    t = star(3)
    with pytest.raises(InvalidScheduleError):
        greedy_run(t, [1, 2], 0)
    with pytest.raises(InvalidScheduleError):
        greedy_run(t, [1, 1, 2], 0)
    with pytest.raises(InvalidScheduleError):
        greedy_run(t, [0, 1, 2], 0)


def test_tree_opt():
    assert tree_opt_orientation(Tree.from_parents([None])).max_in_degree == 0
    assert tree_opt_orientation(gen_fat_tree(2)).max_in_degree == 1
    t = random_recursive_tree(30, 1)
    assert tree_opt_orientation(t).max_in_degree == 1


def test_graph_to_instance():
    inst = graph_to_instance(Tree.from_parents([None, 0]))
    assert inst.machine_count == 2 and inst.n_jobs == 1
    assert inst.jobs[0].loads == {0: 1.0, 1: 1.0}
    inst = graph_to_instance(Tree.from_parents([None, 0, 1]))
    assert inst.machine_count == 3 and inst.n_jobs == 2
    assert all(sorted(j.loads.values()) == [1.0, 1.0] for j in inst.jobs)


def test_tree_opt_makespan_is_one():
    t = gen_fat_tree(2)
    inst = graph_to_instance(t)
    assert makespan(orientation_to_assignment(t, tree_opt_orientation(t)), inst) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2 ** 32 - 1))
def test_greedy_round_trip_and_invariants(n, seed):
    rng = np.random.default_rng(seed)
    t = random_recursive_tree(n, rng)
    order = rng.permutation(t.edge_ids)
    o = greedy_run(t, order, rng)
    assert o.max_in_degree >= 1
    assert o.in_degree.sum() == t.n_edges
    inst = graph_to_instance(t)
    assignment = orientation_to_assignment(t, o)
    assert makespan(assignment, inst) == o.max_in_degree


def test_greedy_never_picks_strictly_heavier_endpoint():
    rng = np.random.default_rng(8)
    for _ in range(200):
        deg = rng.integers(0, 4, size=2).tolist()
        before = list(deg)
        w = greedy_orient_step(deg, (0, 1), rng)
        assert before[w] <= before[1 - w]


def test_orient_edges_general_graph():
    # triangle plus pendant: 0-1, 1-2, 2-0, 2-3
    tails, heads = [0, 1, 2, 2], [1, 2, 0, 3]
    chosen, deg = greedy_orient_edges(4, tails, heads, [0, 1, 2, 3], [0, 0, 0, 0])
    assert chosen.tolist() == [0, 1, 2, 3]
    assert deg.tolist() == [1, 1, 1, 1]


def test_greedy_scheduler_on_instance_matches_orienter():
    t = full_kary_tree(3, 2)
    inst = graph_to_instance(t)
    order = bottom_up_order(t, 5).permutation
    edge_to_job = {int(e): j for j, e in enumerate(t.edge_ids)}
    assignment = greedy_assign(inst, [edge_to_job[e] for e in order.tolist()], tie_break="first")
    o = greedy_run(t, order, tie_break="first")
    assert makespan(assignment, inst) == o.max_in_degree


def test_greedy_scheduler_estimator_api():
    est = GreedyScheduler(tie_break="first", random_state=3)
    assert est.get_params() == {"random_state": 3, "tie_break": "first"}
    t = star(4)
    est.fit(t)
    assert est.makespan_ == 1.0
    assert est.orientation_.head[1] == 0
