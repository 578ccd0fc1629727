import numpy as np
import pytest

from loadbal.exceptions import ConfigError, ProtocolError, SizeLimitError
from loadbal.generators import (
    AdaptiveAdversary,
    PlantedSpec,
    adversary_next,
    count_recursive_nodes,
    full_kary_tree,
    gen_fat_tree,
    gen_planted,
    gen_recursive_tree,
    run_adversary,
)
from loadbal.graphbal import GreedyScheduler, Tree, tree_opt_orientation
from loadbal.oracle import brute_force_opt
from loadbal.potential import SoftmaxScheduler


def geometric(d, k):
    return sum(d ** i for i in range(k + 1))


@pytest.mark.parametrize("k, nodes", [(1, 2), (2, 273), (3, 538084)])
def test_fat_tree_sizes(k, nodes):
    assert geometric(k ** 4, k) == nodes
    t = gen_fat_tree(k)
    assert t.n == nodes
    internal = t.is_internal()
    assert (t.n_children()[internal] == k ** 4).all()
    assert (t.depth[~internal] == k).all()
    assert t.height[t.root] == k


def test_fat_tree_size_guard():
    with pytest.raises(SizeLimitError):
        gen_fat_tree(4)
    with pytest.raises(ValueError):
        gen_fat_tree(0)


def reference_counts(D):
    # node count by explicit recursion on subtrees, independent of the closed recurrence
    def size(d):
        return 1 + sum(2 ** (D - e) * size(e) for e in range(d))
    return [size(d) for d in range(D + 1)]


@pytest.mark.parametrize(
    "D, counts",
    [(0, [1]), (2, [1, 5, 15]), (3, [1, 9, 45, 135]), (4, [1, 17, 153, 765, 2295])],
)
def test_recursive_counts(D, counts):
    assert reference_counts(D) == counts
    assert count_recursive_nodes(D) == counts
    assert gen_recursive_tree(D).n == counts[-1]
    assert counts[-1] <= 4 ** (D * D)


def test_recursive_structure():
    D = 4
    t = gen_recursive_tree(D)
    assert t.labels[t.root] == D
    for u in range(t.n):
        kids = t.children(u)
        d = t.labels[u]
        if d == 0:
            assert kids.size == 0
        for e in range(d):
            assert int((t.labels[kids] == e).sum()) == 2 ** (D - e)
        assert (t.labels[kids] < d).all()


def test_recursive_d0_and_guard():
    t = gen_recursive_tree(0)
    assert t.n == 1 and t.labels.tolist() == [0]
    with pytest.raises(SizeLimitError):
        gen_recursive_tree(6)
    with pytest.raises(SizeLimitError):
        gen_recursive_tree(9999)


def test_full_kary_tree():
    t = full_kary_tree(9, 3)
    assert t.n == 1 + 9 + 81 + 729
    assert (t.height == 3 - t.depth).all()


def test_adversary_examples():
    adv = AdaptiveAdversary(4)
    jobs = adversary_next(adv)
    assert [sorted(j.loads) for j in jobs] == [[0, 1], [2, 3]]
    jobs = adversary_next(adv, [1, 3])
    assert [sorted(j.loads) for j in jobs] == [[1, 3]]
    assert adversary_next(adv, [3]) is None

    adv = AdaptiveAdversary(2)
    assert len(adversary_next(adv)) == 1
    assert adversary_next(adv, [0]) is None


def test_adversary_protocol_errors():
    adv = AdaptiveAdversary(4)
    adversary_next(adv)
    with pytest.raises(ProtocolError):
        adversary_next(adv, [2, 3])
    with pytest.raises(ProtocolError):
        adversary_next(adv, [0])
    with pytest.raises(ValueError):
        AdaptiveAdversary(6)


class RandomOnline:
    """An arbitrary online algorithm: uniform among the offered machines."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def begin(self, m, n):
        self.assignment_ = np.full(n, -1)

    def assign(self, job):
        machine = int(self.rng.choice(job.machines))
        self.assignment_[job.id] = machine
        return machine


@pytest.mark.parametrize("m", [2, 8, 32])
@pytest.mark.parametrize("make", [lambda: SoftmaxScheduler(), lambda: GreedyScheduler(random_state=1),
                                  lambda: RandomOnline(4)])
def test_adversary_forces_log_m(m, make):
    inst, assignment = run_adversary(make(), m)
    loads = np.bincount(assignment, minlength=m)
    assert loads.max() >= np.log2(m)
    tree = Tree.from_edges(m, [tuple(j.loads) for j in inst.jobs])
    assert tree_opt_orientation(tree).max_in_degree == 1


def test_planted_forced_and_small():
    inst, hidden = gen_planted(PlantedSpec(2, 2, 1.0, 2), np.random.default_rng(0), return_hidden=True)
    assert brute_force_opt(inst)[0] == 1.0
    inst, hidden = gen_planted(PlantedSpec(3, 7, 2.0, 1), np.random.default_rng(1), return_hidden=True)
    assert all(len(j.loads) == 1 for j in inst.jobs)
    assert [next(iter(j.loads)) for j in inst.jobs] == hidden.tolist()


def test_planted_brute_force_within_opt():
    for seed in range(5):
        inst, hidden = gen_planted(PlantedSpec(4, 8, 1.0, 3), np.random.default_rng(seed), return_hidden=True)
        opt, _ = brute_force_opt(inst)
        assert opt <= 1.0
        assert opt == pytest.approx(1.0, abs=1e-12)
        for j, job in enumerate(inst.jobs):
            assert max(job.loads.values()) <= 1.0
            assert job.min_load == job.loads[int(hidden[j])]


def test_planted_spec_errors():
    with pytest.raises(ConfigError):
        PlantedSpec(4, 3)
    with pytest.raises(ConfigError):
        gen_planted(PlantedSpec(2, 3, 1.0, 2, min_size=0.6))
