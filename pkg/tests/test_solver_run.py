import math

import numpy as np
import pytest

from proxsdca import (
    ConfigError,
    Dataset,
    ElasticNetRegularizer,
    HingeLoss,
    L2Regularizer,
    LogisticLoss,
    Problem,
    QNormRegularizer,
    SmoothedHingeLoss,
    SolverConfig,
    SquaredLoss,
    UpdateRule,
    run,
    schedule_from_step_bound,
    schedule_lipschitz,
    schedule_smooth,
)
from conftest import sparse_gaussian_dataset


def unit_problem(loss, lam=1.0):
    ds = Dataset.from_dense(np.array([[1.0]]), np.array([1.0]))
    return Problem(ds, loss, L2Regularizer(), lam)


# -- config validation ------------------------------------------------------------


def test_config_rejects_bad_windows():
    with pytest.raises(ConfigError):
        SolverConfig(rule=3, T=10, T0=10)
    with pytest.raises(ConfigError):
        SolverConfig(rule=3, T=0)
    with pytest.raises(ConfigError):
        SolverConfig(rule="nonsense", T=5)
    cfg = SolverConfig(rule="2", T=5)
    assert cfg.rule is UpdateRule.LINE_SEARCH


# -- tiny problems reach the optimum immediately ------------------------------------


@pytest.mark.parametrize("loss,rule", [(SquaredLoss(), 1), (SquaredLoss(), 5),
                                       (HingeLoss(), 1), (HingeLoss(), 3)])
def test_single_example_runs_close_the_gap(loss, rule):
    prob = unit_problem(loss)
    res = run(prob, SolverConfig(rule=rule, T=3, seed=0, gap_check_every=1))
    assert res.gap <= 1e-12
    assert res.reached_target


def test_run_executes_exactly_T_without_target(rng):
    ds = sparse_gaussian_dataset(10, 5, 3, rng)
    prob = Problem(ds, HingeLoss(), L2Regularizer(), 0.5)
    res = run(prob, SolverConfig(rule=3, T=37, seed=1))
    assert res.iterations == 37
    assert res.trace.final().t == 37


def test_early_stop_on_target_gap(rng):
    ds = sparse_gaussian_dataset(20, 5, 3, rng)
    prob = Problem(ds, SmoothedHingeLoss(1.0), L2Regularizer(), 0.5)
    res = run(prob, SolverConfig(rule=5, T=100000, seed=0, target_gap=1e-3))
    assert res.reached_target
    assert res.iterations < 100000
    assert res.trace.final().gap <= 1e-3


def test_reproducible_traces(rng):
    ds = sparse_gaussian_dataset(25, 6, 3, rng)
    prob = Problem(ds, HingeLoss(), ElasticNetRegularizer(0.3), 0.4)
    runs = [run(prob, SolverConfig(rule=4, T=200, seed=99)) for _ in range(2)]
    a, b = runs
    assert len(a.trace) == len(b.trace)
    for ca, cb in zip(a.trace, b.trace):
        assert (ca.t, ca.primal, ca.dual, ca.gap) == (cb.t, cb.primal, cb.dual, cb.gap)
    assert np.array_equal(a.w, b.w)
    assert np.array_equal(a.alpha, b.alpha)


def test_different_seeds_differ(rng):
    ds = sparse_gaussian_dataset(25, 6, 3, rng)
    prob = Problem(ds, HingeLoss(), L2Regularizer(), 0.4)
    a = run(prob, SolverConfig(rule=3, T=50, seed=1))
    b = run(prob, SolverConfig(rule=3, T=50, seed=2))
    assert not np.array_equal(a.w, b.w)


def test_gap_cadence_does_not_change_the_pick_sequence(rng):
    ds = sparse_gaussian_dataset(25, 6, 3, rng)
    prob = Problem(ds, HingeLoss(), L2Regularizer(), 0.4)
    a = run(prob, SolverConfig(rule=3, T=120, seed=7, gap_check_every=11))
    b = run(prob, SolverConfig(rule=3, T=120, seed=7, gap_check_every=25))
    assert np.array_equal(a.w, b.w)


@pytest.mark.parametrize("output", ["final", "average", "random"])
def test_output_modes_produce_valid_states(output, rng):
    ds = sparse_gaussian_dataset(30, 6, 3, rng)
    prob = Problem(ds, HingeLoss(), L2Regularizer(), 0.4)
    res = run(prob, SolverConfig(rule=3, T=150, T0=50, output=output, seed=5))
    assert res.gap >= -1e-9
    assert res.dual <= res.trace.final().dual + 1e-9 or output != "final"
    if output == "final":
        assert res.dual == pytest.approx(res.trace.final().dual, abs=1e-12)


def test_dual_monotone_along_checkpoints(rng):
    ds = sparse_gaussian_dataset(40, 8, 4, rng)
    for loss, rule in [(HingeLoss(), 2), (SmoothedHingeLoss(1.0), 5),
                       (LogisticLoss(), 3), (SquaredLoss(), 1)]:
        lab = "sign" if loss.lipschitz is not None else "real"
        ds2 = sparse_gaussian_dataset(40, 8, 4, rng, labels=lab)
        prob = Problem(ds2, loss, L2Regularizer(), 0.2)
        res = run(prob, SolverConfig(rule=rule, T=400, seed=3, gap_check_every=40))
        duals = [cp.dual for cp in res.trace]
        assert all(b >= a - 1e-9 for a, b in zip(duals, duals[1:]))
        assert res.min_step_increase >= -1e-9


def test_long_run_with_epoch_refresh_qnorm(rng):
    ds = sparse_gaussian_dataset(30, 12, 4, rng, normalize="linf")
    prob = Problem(ds, SmoothedHingeLoss(1.0), QNormRegularizer(12, 1.5), 0.3)
    res = run(prob, SolverConfig(rule=5, T=600, seed=11))
    assert res.gap >= -1e-9
    duals = [cp.dual for cp in res.trace]
    assert all(b >= a - 1e-9 for a, b in zip(duals, duals[1:]))


def test_average_output_uses_window(rng):
    # all-zero window average when T0 covers the whole run except one step
    ds = sparse_gaussian_dataset(10, 5, 3, rng)
    prob = Problem(ds, HingeLoss(), L2Regularizer(), 0.5)
    res = run(prob, SolverConfig(rule=3, T=50, T0=49, output="average", seed=0))
    # the averaging window contains exactly the iterate before step 50
    full = run(prob, SolverConfig(rule=3, T=49, seed=0))
    assert np.allclose(res.alpha, full.alpha)


def test_runs_handle_featureless_examples(rng):
    # a row with no features contributes a constant loss; steps on it must
    # stay in the conjugate domain and never decrease the dual
    rows = [(np.array([0]), np.array([1.0])), (np.array([], dtype=np.int64), np.array([]))]
    ds = Dataset.from_rows(2, rows, np.array([1.0, -1.0]))
    for loss in (HingeLoss(), SmoothedHingeLoss(1.0), SquaredLoss()):
        labels = np.array([1.0, -1.0]) if loss.lipschitz else np.array([1.0, -0.5])
        dsl = Dataset.from_rows(2, rows, labels)
        prob = Problem(dsl, loss, L2Regularizer(), 0.5)
        for rule in (1, 2, 3, 4):
            res = run(prob, SolverConfig(rule=rule, T=20, seed=0))
            assert res.min_step_increase >= -1e-9
            assert res.gap >= -1e-9


def test_average_output_meets_window_schedule(rng):
    # burn-in variant: T0 >= C log(C/(window*eps)) guarantees the averaged
    # iterate over the window reaches the target expected gap
    ds = sparse_gaussian_dataset(80, 10, 4, rng)
    prob = Problem(ds, SmoothedHingeLoss(1.0), L2Regularizer(), 0.05)
    eps = 1e-3
    sched = schedule_smooth(prob.n, prob.R, prob.lam, 1.0, eps, window=400)
    res = run(prob, SolverConfig(rule=5, T=sched.T, T0=sched.T0, output="average", seed=2))
    assert res.gap <= eps
    res_rand = run(prob, SolverConfig(rule=5, T=sched.T, T0=sched.T0, output="random", seed=2))
    assert res_rand.gap <= eps


def test_r_override_below_certified_bound_rejected(rng):
    ds = sparse_gaussian_dataset(10, 5, 3, rng)
    prob = Problem(ds, HingeLoss(), L2Regularizer(), 0.5)
    with pytest.raises(ConfigError):
        run(prob, SolverConfig(rule=4, T=10, R_override=prob.R / 2.0))
    res = run(prob, SolverConfig(rule=4, T=10, R_override=prob.R * 2.0))
    assert res.gap >= -1e-9


# -- iteration schedules -------------------------------------------------------------


def test_schedule_smooth_formula_values():
    sched = schedule_smooth(n=1000, R=1.0, lam=0.01, gamma=1.0, eps_P=1e-3)
    base = 1000 + 1.0 / 0.01
    assert sched.condition == pytest.approx(base)
    assert sched.T == math.ceil(base * math.log(base / 1e-3))
    assert sched.T == 15302
    assert sched.T0 == 0


def test_schedule_smooth_floors_at_one():
    sched = schedule_smooth(n=10, R=1.0, lam=1.0, gamma=1.0, eps_P=100.0)
    assert sched.T == 1


def test_schedule_smooth_window_variant():
    sched = schedule_smooth(n=100, R=1.0, lam=0.1, gamma=1.0, eps_P=1e-2, window=500)
    base = 100 + 10.0
    assert sched.T0 == max(0, math.ceil(base * math.log(base / (500 * 1e-2))))
    assert sched.T == sched.T0 + 500


def test_schedule_smooth_scales_with_n():
    a = schedule_smooth(n=1000, R=0.1, lam=1.0, gamma=1.0, eps_P=1e-3).T
    b = schedule_smooth(n=2000, R=0.1, lam=1.0, gamma=1.0, eps_P=1e-3).T
    assert 1.8 < b / a < 2.2


def test_schedule_lipschitz_formula_values():
    sched = schedule_lipschitz(n=100, R=1.0, L=1.0, lam=0.1, eps_P=0.1)
    assert sched.warmup == 161  # ceil(100 ln 5)
    assert sched.T == 161 + 100 + 2000
    assert sched.T0 == 161 + math.ceil(16.0 / (0.1 * 0.1) - 200.0)
    assert sched.T0 < sched.T


def test_schedule_lipschitz_warmup_floors_at_zero():
    sched = schedule_lipschitz(n=10, R=2.0, L=1.0, lam=0.01, eps_P=0.1)
    assert sched.warmup == 0


def test_schedule_lipschitz_scales_inversely_with_eps():
    a = schedule_lipschitz(n=100, R=1.0, L=1.0, lam=0.1, eps_P=0.1)
    b = schedule_lipschitz(n=100, R=1.0, L=1.0, lam=0.1, eps_P=0.05)
    ratio = (b.T - b.T0) / (a.T - a.T0)
    assert 1.5 < ratio < 2.5


def test_schedule_from_step_bound_satisfies_sufficient_conditions():
    for n, G, lam, eps in [(50, 4.0, 0.1, 0.05), (500, 16.0, 0.01, 0.2), (10, 1.0, 1.0, 0.5)]:
        sched = schedule_from_step_bound(n, G, lam, eps)
        assert sched.T0 >= sched.warmup
        assert sched.T0 >= 4.0 * G / (lam * eps) - 2 * n + sched.warmup - 1
        assert sched.T - sched.T0 >= max(n, G / (lam * eps)) - 1
