import math

import numpy as np
import pytest
from sklearn.base import clone

from loadbal.core import Instance, Job
from loadbal.exceptions import GuessTooSmallError
from loadbal.generators import PlantedSpec, gen_planted
from loadbal.potential import (
    A_MIN,
    PotentialParams,
    SchedulerState,
    SoftmaxScheduler,
    choose_a,
    delta_psi,
    doubling_wrap,
    grad_psi,
    psi,
    softmax_run,
    softmax_step,
)


def direct_psi(x, a):
    # naive evaluation, no stabilization
    return math.log(sum(math.exp(a * xi) for xi in x)) / a


def test_choose_a():
    assert choose_a(100) == pytest.approx(math.log(math.log(100)) / 6, abs=1e-12)
    assert choose_a(100) == pytest.approx(0.2545299, abs=1e-6)
    assert choose_a(16) == pytest.approx(0.1699636, abs=1e-6)
    assert choose_a(2) == A_MIN
    assert choose_a(1) == A_MIN
    with pytest.raises(ValueError):
        choose_a(0)


def test_psi_examples():
    assert psi(np.zeros(4), 1.0) == pytest.approx(math.log(4), abs=1e-12)
    assert psi([7.25], 0.3) == 7.25
    assert psi([2, 0, 0], 2.0) == pytest.approx(direct_psi([2, 0, 0], 2.0), abs=1e-12)
    assert psi([2, 0, 0], 2.0) == pytest.approx(2.0179881, abs=1e-6)


def test_psi_large_values_do_not_overflow():
    x = np.array([2000.0, 1999.0])
    assert psi(x, 1.0) == pytest.approx(2000 + math.log1p(math.exp(-1)), abs=1e-9)


def test_grad_examples():
    np.testing.assert_allclose(grad_psi(np.zeros(3), 1.0), [1 / 3] * 3)
    e = math.e
    np.testing.assert_allclose(grad_psi([1, 0], 1.0), [e / (e + 1), 1 / (e + 1)], atol=1e-12)


def test_delta_psi_examples():
    assert delta_psi([1, 0], 0, 0.2, 1.0) == pytest.approx(direct_psi([1.2, 0], 1) - direct_psi([1, 0], 1), abs=1e-12)
    assert delta_psi([1, 0], 0, 0.2, 1.0) == pytest.approx(0.1500208, abs=1e-6)
    assert delta_psi([1, 0], 1, 0.3, 1.0) == pytest.approx(0.0899244, abs=1e-6)
    assert delta_psi([3, 1, 2], 2, 0.0, 0.5) == 0.0


def test_potential_properties_random():
    rng = np.random.default_rng(5)
    for _ in range(300):
        m = int(rng.integers(1, 40))
        a = float(rng.uniform(0.05, 3))
        x = rng.uniform(0, 20, m)
        val = psi(x, a)
        assert x.max() - 1e-9 <= val <= x.max() + math.log(m) / a + 1e-9
        g = grad_psi(x, a)
        assert abs(g.sum() - 1) <= 1e-9
        assert ((g > 0) & (g <= 1)).all()
        i = int(rng.integers(m))
        w = float(rng.uniform(0, 1))
        y = x.copy()
        y[i] += w
        assert (grad_psi(y, a) <= math.exp(a) * g * (1 + 1e-12)).all()
        assert delta_psi(x, i, w, a) == pytest.approx(psi(y, a) - val, abs=1e-9)
        assert delta_psi(x, i, w, a) >= 0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    h = 1e-5
    for _ in range(100):
        m = int(rng.integers(2, 12))
        a = float(rng.uniform(0.1, 2))
        x = rng.uniform(0, 20, m)
        fd = np.empty(m)
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            fd[i] = (psi(x + e, a) - psi(x - e, a)) / (2 * h)
        np.testing.assert_allclose(grad_psi(x, a), fd, atol=1e-6)


def test_convexity_spot_check():
    rng = np.random.default_rng(12)
    for _ in range(100):
        m = int(rng.integers(1, 10))
        a = float(rng.uniform(0.1, 2))
        x, y = rng.uniform(0, 20, m), rng.uniform(0, 20, m)
        for lam in (0.25, 0.5, 0.75):
            assert psi(lam * x + (1 - lam) * y, a) <= lam * psi(x, a) + (1 - lam) * psi(y, a) + 1e-9


def _state(m, n=10, a=1.0, **kw):
    return SchedulerState(PotentialParams(a, m), n, **kw)


def test_softmax_step_examples():
    s = _state(3)
    assert softmax_step(s, Job(0, {2: 0.7})) == 2

    s = _state(2)
    s.virtual[:] = [1.0, 0.0]
    assert softmax_step(s, Job(0, {0: 0.2, 1: 0.3})) == 1

    s = _state(3)
    assert softmax_step(s, Job(0, {0: 0.5, 1: 0.5, 2: 0.5})) == 0
    np.testing.assert_array_equal(s.virtual, [0.5, 0, 0])
    np.testing.assert_array_equal(s.true_loads, [0.5, 0, 0])


def test_softmax_step_deterministic():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.uniform(0, 5, 6)
        job = Job(0, {int(i): float(rng.uniform(0, 1)) for i in rng.choice(6, 3, replace=False)})
        picks = set()
        for _ in range(3):
            s = _state(6)
            s.virtual[:] = x
            picks.add(softmax_step(s, job))
        assert len(picks) == 1


def test_softmax_step_guess_too_small():
    s = _state(2, doubling=True)
    s.guess = 2.0
    with pytest.raises(GuessTooSmallError):
        softmax_step(s, Job(0, {0: 5.0}))


def test_run_single_job_has_no_reset():
    sched = SoftmaxScheduler().fit(Instance.from_loads(2, [{0: 1.0, 1: 1.0}]))
    assert sched.resets_ == []
    assert sched.assignment_.tolist() == [0]


def test_run_resets_once_at_half():
    inst = Instance.from_loads(3, [{0: 1.0}, {1: 1.0}, {0: 0.5, 2: 0.5}, {1: 0.25}])
    sched = SoftmaxScheduler(a=1.0)
    sched.begin(3, 4)
    seen = []
    for job in inst.jobs:
        sched.assign(job)
        seen.append(sched.state_.virtual.copy())
    assert sched.resets_ == [(2, "phase")]
    # after the reset only job 2 (placed on machine 0) is in the virtual loads
    np.testing.assert_array_equal(seen[2], [0.5, 0, 0])
    np.testing.assert_array_equal(seen[3], [0.5, 0.25, 0])
    np.testing.assert_array_equal(sched.loads_, [1.5, 1.25, 0])


def test_virtual_loads_zero_right_after_reset():
    state = _state(3, n=4)
    for job in Instance.from_loads(3, [{0: 0.3, 1: 0.9}, {2: 0.4}]).jobs:
        state.arrive(job)
    state.reset_virtual("phase")
    np.testing.assert_array_equal(state.virtual, np.zeros(3))
    np.testing.assert_array_equal(state.true_loads, [0.3, 0, 0.4])


def test_planted_makespan_below_cap():
    m, a = 100, choose_a(100)
    inst = gen_planted(PlantedSpec(m, 600, 1.0, 3), np.random.default_rng(0))
    assignment = softmax_run(inst, np.random.default_rng(1).permutation(600), a)
    cap = 2 * (2 * math.exp(2 * a) + math.log(m) / a)
    assert cap == pytest.approx(42.84, abs=0.01)
    loads = np.zeros(m)
    for job, i in zip(inst.jobs, assignment):
        loads[i] += job.loads[i]
    assert loads.max() <= cap


def test_doubling_constant_min_load():
    inst = Instance.from_loads(3, [{0: 1.0}, {1: 1.0, 2: 1.0}, {2: 1.0}] * 3)
    sched = SoftmaxScheduler(doubling=True).fit(inst)
    assert sched.guess_ >= 1
    for job in inst.jobs:
        assert max(job.loads.values()) / sched.guess_ <= 1


def test_doubling_trace_min_load_one_then_ten():
    inst = Instance.from_loads(4, [{0: 1.0, 1: 2.0}, {2: 10.0, 3: 12.0}])
    sched = SoftmaxScheduler(doubling=True).fit(inst)
    # initial guess 1 -> 2 on the first arrival; then 4, 8, 16, 32 for LB = 10
    assert sched.guess_ == 32.0
    assert [r for r in sched.resets_ if r[1] == "doubling"] == [(0, "doubling")] + [(1, "doubling")] * 4
    assert sched.guess_ > 20


def test_doubling_too_small_guess_recovers():
    # first job min load 1 pins g = 2; second job's only finite load 5 >= g
    inst = Instance.from_loads(2, [{0: 1.0, 1: 1.0}, {1: 5.0}])
    assignment = doubling_wrap(inst)
    assert assignment.tolist() == [0, 1]
    sched = SoftmaxScheduler(doubling=True).fit(inst)
    assert sched.guess_ > 5


def test_doubling_rejects_job_without_finite_load():
    from loadbal.exceptions import InfeasibleInstanceError

    with pytest.raises(InfeasibleInstanceError):
        doubling_wrap(Instance.from_loads(2, [{}]))


def test_estimator_params_and_clone():
    est = SoftmaxScheduler(a=0.5, doubling=True)
    assert est.get_params() == {"a": 0.5, "doubling": True, "restart": True}
    other = clone(est).set_params(restart=False)
    assert other.restart is False and not hasattr(other, "assignment_")
    assert "SoftmaxScheduler" in repr(est)


def test_params_validation():
    with pytest.raises(ValueError):
        PotentialParams(0.0, 3)
