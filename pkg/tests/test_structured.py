import math

import numpy as np
import pytest

from proxsdca import (
    CostMatrix,
    Dataset,
    ExampleBlock,
    L2Regularizer,
    MulticlassHingeLoss,
    MulticlassState,
    Problem,
    SolverConfig,
    SparseVec,
    UnsupportedOption,
    class_blocked_dataset,
    dual_objective,
    duality_gap,
    feature_radius,
    multiclass_oracle,
    run,
    schedule_structured,
    structured_step,
    train_structured,
)


def two_class_instance():
    """d=2, psi(x, 0) = e0, psi(x, 1) = e1, true label 0, 0/1 cost."""
    cols = (
        SparseVec(2, np.array([0]), np.array([1.0])),
        SparseVec(2, np.array([1]), np.array([1.0])),
    )
    ds = Dataset((ExampleBlock(cols),), np.array([0]))
    return ds, CostMatrix.zero_one(2)


def random_multiclass_dataset(n, base_d, k, rng, nnz=3):
    rows = []
    for _ in range(n):
        idx = np.sort(rng.choice(base_d, size=nnz, replace=False))
        val = rng.normal(size=nnz)
        rows.append((idx, val / np.linalg.norm(val)))
    base = Dataset.from_rows(base_d, rows, rng.integers(0, k, size=n))
    return class_blocked_dataset(base, k)


# -- oracle ---------------------------------------------------------------------


def test_oracle_hand_trace_k3():
    cost = CostMatrix.zero_one(3)
    oracle = multiclass_oracle(cost)
    cols = tuple(SparseVec(3, np.array([j]), np.array([1.0])) for j in range(3))
    w = np.array([0.2, 0.5, 0.1])
    dec = oracle(w, cols, 1)
    assert dec.j == 0
    assert dec.loss_value == pytest.approx(0.7)
    assert dec.cost == 1.0


def test_oracle_needs_two_classes():
    with pytest.raises(ValueError):
        multiclass_oracle(CostMatrix(np.zeros((1, 1))))


def test_multiclass_single_step_api(rng):
    from proxsdca import DualState
    from proxsdca.structured import multiclass_coordinate_step

    ds = random_multiclass_dataset(8, 6, 3, rng)
    cost = CostMatrix.zero_one(3)
    loss = MulticlassHingeLoss(cost)
    prob = Problem(ds, loss, L2Regularizer(), 0.4)
    alpha = np.column_stack([loss.sample_dual_point(int(y), rng) for y in ds.labels])
    state = DualState.from_alpha(prob, alpha)
    before = dual_objective(prob, alpha)
    new_state, diag = multiclass_coordinate_step(prob, state, 2, 4, z_bound=4.0)
    after = dual_objective(prob, new_state.alpha)
    assert diag.dual_increase >= -1e-9
    assert after - before == pytest.approx(diag.dual_increase, abs=1e-9)


def test_oracle_zero_weights_zero_cost():
    cost = CostMatrix(np.zeros((3, 3)))
    oracle = multiclass_oracle(cost)
    cols = tuple(SparseVec(3, np.array([j]), np.array([1.0])) for j in range(3))
    dec = oracle(np.zeros(3), cols, 2)
    assert dec.j == 0 and dec.loss_value == 0.0


def test_oracle_two_class_instance():
    ds, cost = two_class_instance()
    dec = multiclass_oracle(cost)(np.zeros(2), ds.examples[0].columns, 0)
    assert dec.j == 1 and dec.loss_value == 1.0


# -- single steps ------------------------------------------------------------------


def test_structured_step_hand_trace():
    ds, cost = two_class_instance()
    state = MulticlassState(ds.examples, ds.labels, lam=1.0, R=1.0, cost=cost)
    oracle = multiclass_oracle(cost)
    _, dec, s, inc = structured_step(state, oracle, 0)
    assert s == pytest.approx(0.25)
    assert -state.conj_vals[0] == pytest.approx(0.25)  # maintained cost mass
    assert np.allclose(state.w, [0.25, -0.25])
    assert inc > 0.0


def test_structured_step_noop_at_zero_everything():
    cols = (
        SparseVec(2, np.array([0]), np.array([1.0])),
        SparseVec(2, np.array([1]), np.array([1.0])),
    )
    ds = Dataset((ExampleBlock(cols),), np.array([0]))
    cost = CostMatrix(np.zeros((2, 2)))  # zero cost: P_i = 0 at w = 0
    state = MulticlassState(ds.examples, ds.labels, lam=1.0, R=1.0, cost=cost)
    _, dec, s, inc = structured_step(state, multiclass_oracle(cost), 0)
    assert s == 0.0 and inc == 0.0
    assert np.all(state.w == 0.0)


def test_repeated_steps_increase_dual_to_fixed_point():
    ds, cost = two_class_instance()
    loss = MulticlassHingeLoss(cost)
    prob = Problem(ds, loss, L2Regularizer(), 1.0)
    state = MulticlassState(ds.examples, ds.labels, lam=1.0, R=1.0,
                            materialize_alpha=True, cost=cost)
    oracle = multiclass_oracle(cost)
    prev = dual_objective(prob, state.alpha)
    for step in range(200):
        _, dec, s, inc = structured_step(state, oracle, 0)
        now = dual_objective(prob, state.alpha)
        assert now >= prev - 1e-12
        assert now - prev == pytest.approx(inc, abs=1e-12)
        prev = now
    # fixed point of this instance: w = (1/2, -1/2), D = P = 1/4
    assert np.allclose(state.w, [0.5, -0.5], atol=1e-6)
    assert prev == pytest.approx(0.25, abs=1e-6)
    report = duality_gap(prob, state.alpha)
    assert report.gap <= 1e-5


def test_maintained_values_match_explicit_dual(rng):
    k, base_d, n = 4, 8, 12
    ds = random_multiclass_dataset(n, base_d, k, rng)
    cost = CostMatrix.zero_one(k)
    loss = MulticlassHingeLoss(cost)
    R = feature_radius(ds.examples)
    state = MulticlassState(ds.examples, ds.labels, lam=0.3, R=R,
                            materialize_alpha=True, cost=cost)
    oracle = multiclass_oracle(cost)
    lam_n = 0.3 * n
    for t in range(300):
        i = int(rng.integers(n))
        structured_step(state, oracle, i)
        y = int(ds.labels[i])
        a = state.alpha[:, i]
        # conjugate value of the implied dual column, fresh
        fresh = loss.conjugate(y, -a)
        assert math.isfinite(fresh)
        assert state.conj_vals[i] == pytest.approx(fresh, abs=1e-9)
        part = ds.examples[i].combine(a) / lam_n
        dense = np.zeros(ds.d)
        dense[state.support[i]] = state.parts[i]
        assert np.allclose(part, dense, atol=1e-12)
    state.refresh_epoch()  # runs the polytope feasibility and drift checks
    assert state.max_z_dsq <= 4.0  # ||z||_1 <= 2 exactly


# -- schedules and training ----------------------------------------------------------


def test_schedule_structured_uses_tight_bound():
    sched = schedule_structured(n=300, R=1.0, lam=0.1, eps_P=0.05)
    G = 4.0
    assert sched.G == G
    assert sched.warmup == max(0, math.ceil(300 * math.log(2.0 * 0.1 * 300 / G)))
    assert sched.T == sched.warmup + 300 + math.ceil(5.0 * G / (0.1 * 0.05))


def test_train_structured_single_instance_converges():
    ds, cost = two_class_instance()
    res = train_structured(ds, cost, lam=1.0, eps_P=0.05, seed=0)
    assert res.gap <= 0.05
    assert res.reached_target


def test_train_structured_deterministic(rng):
    ds = random_multiclass_dataset(20, 6, 3, rng)
    cost = CostMatrix.zero_one(3)
    a = train_structured(ds, cost, lam=0.2, eps_P=0.1, seed=42)
    b = train_structured(ds, cost, lam=0.2, eps_P=0.1, seed=42)
    assert np.array_equal(a.w, b.w)
    assert a.gap == b.gap


def test_generic_solver_matches_structured_bit_for_bit(rng):
    k, base_d, n = 3, 10, 25
    ds = random_multiclass_dataset(n, base_d, k, rng)
    cost = CostMatrix.zero_one(k)
    lam = 0.2
    tr = train_structured(ds, cost, lam, eps_P=0.2, seed=7, stop_early=False,
                          collect_steps=True)
    prob = Problem(ds, MulticlassHingeLoss(cost), L2Regularizer(), lam)
    cfg = SolverConfig(rule=4, T=tr.T, T0=tr.T0, output="random", seed=7,
                       z_bound=4.0, collect_diagnostics=True)
    res = run(prob, cfg)
    assert len(res.diagnostics) == len(tr.steps) == tr.T
    for diag, (i, j, s) in zip(res.diagnostics, tr.steps):
        assert diag.i == i and diag.j == j
        assert diag.s == s  # bitwise
    assert np.array_equal(res.w, tr.w)


def test_multiclass_generic_rules_2_and_3(rng):
    k, base_d, n = 3, 8, 15
    ds = random_multiclass_dataset(n, base_d, k, rng)
    cost = CostMatrix.zero_one(k)
    prob = Problem(ds, MulticlassHingeLoss(cost), L2Regularizer(), 0.3)
    for rule in (2, 3):
        res = run(prob, SolverConfig(rule=rule, T=6 * n, seed=1))
        duals = [cp.dual for cp in res.trace]
        assert all(b >= a - 1e-9 for a, b in zip(duals, duals[1:]))
        assert res.gap >= -1e-9
        assert res.min_step_increase >= -1e-9
    for rule in (1, 5):
        with pytest.raises(UnsupportedOption):
            run(prob, SolverConfig(rule=rule, T=10, seed=1))


def test_multiclass_conservative_without_bound(rng):
    ds = random_multiclass_dataset(12, 6, 3, rng)
    cost = CostMatrix.zero_one(3)
    prob = Problem(ds, MulticlassHingeLoss(cost), L2Regularizer(), 0.3)
    res = run(prob, SolverConfig(rule=4, T=120, seed=2))  # per-step ||z||_1^2
    assert res.min_step_increase >= -1e-9
    assert res.max_z_dsq <= 4.0
    from proxsdca import ConfigError

    with pytest.raises(ConfigError):
        run(prob, SolverConfig(rule=4, T=10, seed=2, z_bound=1.0))


def test_class_blocked_dataset_layout():
    base = Dataset.from_rows(3, [(np.array([0, 2]), np.array([1.0, -2.0]))], np.array([1]))
    lifted = class_blocked_dataset(base, 2)
    block = lifted.examples[0]
    assert lifted.d == 6 and block.width == 2
    assert np.array_equal(block.columns[0].indices, [0, 2])
    assert np.array_equal(block.columns[1].indices, [3, 5])
    assert np.array_equal(block.columns[1].values, [1.0, -2.0])


def test_part_vector_view():
    ds, cost = two_class_instance()
    state = MulticlassState(ds.examples, ds.labels, lam=1.0, R=1.0, cost=cost)
    structured_step(state, multiclass_oracle(cost), 0)
    part = state.part_vector(0)
    assert part.dim == 2
    assert np.array_equal(part.indices, [0, 1])
    assert np.allclose(part.values, [0.25, -0.25])
