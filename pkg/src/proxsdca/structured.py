"""Multiclass / structured hinge training without materializing the dual.

The trainer keeps, per example, only the aggregate column
``w_i = (lambda n)^(-1) X_i alpha_i`` and the running conjugate value
``D_i = phi_i*(-alpha_i)``; together with ``w = sum_i w_i`` that is all the
conservative update rule needs, so the per-iteration cost is one
loss-augmented decoding plus work on the support of the touched example.

``MulticlassState`` implements the update kernel once. The generic solver
reuses the same kernel (with the dual matrix materialized on top) when it is
asked to run a multiclass problem, so the two paths produce bit-identical
iterate sequences for the same seed; fresh recomputations from the explicit
dual are asserted against the maintained quantities at every epoch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TraceError, UnsupportedOption
from .losses import CostMatrix, MulticlassHingeLoss
from .problem import Checkpoint, Dataset, DualState, Problem, RunTrace
from .sparsevec import ExampleBlock, NormPair, SparseVec, op_norm
from .solver import (
    LipschitzSchedule,
    PickStream,
    RunResult,
    SolverConfig,
    StepDiagnostics,
    UpdateRule,
    _drive,
    _golden_max,
    schedule_from_step_bound,
    seeded_streams,
)

STEP_TOL = 1e-9
CONSISTENCY_TOL = 1e-9

# ||z||_1 never exceeds 2 for the multiclass polytope, so ||z||^2 <= 4 is a
# valid curvature bound (and tighter than the generic 4 L^2 = 16).
Z_SQ_BOUND = 4.0


@dataclass(frozen=True)
class DecodeResult:
    """One loss-augmented decoding: argmax_j of cost(j,y) - w@psi_y + w@psi_j."""

    j: int
    psi_true: SparseVec
    psi_pred: SparseVec
    cost: float
    loss_value: float


def multiclass_oracle(cost: CostMatrix):
    """Exact decoding oracle for an explicit per-class feature table.

    The returned callable takes ``(w, columns, y)`` where ``columns[j]`` is
    psi(x, j), and enumerates all classes, breaking ties toward the smallest
    index.
    """
    if cost.k < 2:
        raise ValueError("multiclass decoding needs at least two classes")

    def oracle(w: np.ndarray, columns, y: int) -> DecodeResult:
        scores = np.array([c.dot(w) for c in columns])
        vals = cost.column(y) - scores[y] + scores
        j = int(np.argmax(vals))
        return DecodeResult(j, columns[y], columns[j], float(cost.costs[j, y]), float(vals[j]))

    return oracle


def class_blocked_dataset(base: Dataset, k: int) -> Dataset:
    """Lift a width-1 dataset to k-column blocks psi(x, j) = x embedded in block j."""
    if base.k != 1:
        raise ValueError("expected a width-1 dataset")
    d0 = base.d
    blocks = []
    for b in base.examples:
        col = b.columns[0]
        cols = tuple(
            SparseVec(k * d0, col.indices + j * d0, col.values.copy()) for j in range(k)
        )
        blocks.append(ExampleBlock(cols))
    return Dataset(tuple(blocks), base.labels)


def feature_radius(blocks) -> float:
    """max_{i,j} ||psi(x_i, j)||_2, the operator-norm bound for these blocks."""
    pair = NormPair("linf", "l1", "l2")
    return max(op_norm(b, pair) for b in blocks)


class MulticlassState:
    """Per-example aggregates for multiclass training.

    Maintains ``w``, the per-example parts ``w_i`` (dense over the fixed
    union support of the example's columns), and the conjugate values
    ``D_i``. With ``materialize_alpha=True`` the dual matrix is carried
    along as well, updated through the identical arithmetic.
    """

    def __init__(self, blocks, labels, lam: float, R: float, *,
                 z_bound: float = Z_SQ_BOUND, materialize_alpha: bool = False,
                 cost: CostMatrix | None = None):
        blocks = tuple(blocks)
        self.blocks = blocks
        self.labels = np.asarray(labels)
        self.n = len(blocks)
        self.d = blocks[0].dim
        self.k = blocks[0].width
        self.lam = float(lam)
        self.R = float(R)
        self.lam_n = self.lam * self.n
        self.denom = z_bound * self.R * self.R / (self.lam * self.n)
        self.z_bound = z_bound
        self.cost = cost

        self.support = []
        self.positions = []
        self.parts = []
        for b in blocks:
            sup = np.unique(np.concatenate([c.indices for c in b.columns]))
            self.support.append(sup)
            self.positions.append([np.searchsorted(sup, c.indices) for c in b.columns])
            self.parts.append(np.zeros(sup.size))
        self.w = np.zeros(self.d)
        self.conj_vals = np.zeros(self.n)
        self.alpha = np.zeros((self.k, self.n)) if materialize_alpha else None

        self.min_increase = math.inf
        self.max_z_dsq = 0.0

    # -- views -----------------------------------------------------------

    def part_vector(self, i: int) -> SparseVec:
        """w_i as a sparse vector (zeros on the support are dropped)."""
        sup = self.support[i]
        arr = self.parts[i]
        nz = arr != 0.0
        return SparseVec(self.d, sup[nz], arr[nz].copy()) if np.any(nz) else SparseVec(
            self.d, np.zeros(0, dtype=np.int64), np.zeros(0)
        )

    def dual_value(self) -> float:
        """D(alpha) from the maintained decomposition (no dual matrix needed)."""
        return -float(np.mean(self.conj_vals)) - self.lam * float(self.w @ self.w) / 2.0

    def primal_value(self, oracle) -> float:
        total = 0.0
        for i, b in enumerate(self.blocks):
            total += oracle(self.w, b.columns, int(self.labels[i])).loss_value
        return total / self.n + self.lam * float(self.w @ self.w) / 2.0

    # -- the update kernel -------------------------------------------------

    def step(self, i: int, oracle, rule: UpdateRule = UpdateRule.CONSERVATIVE,
             opnorm_sq: float | None = None, use_z_bound: bool = True):
        """One coordinate update at example i; returns (DecodeResult, s, increase)."""
        y = int(self.labels[i])
        dec = oracle(self.w, self.blocks[i].columns, y)
        sup = self.support[i]
        part = self.parts[i]
        w_sup = self.w[sup]
        cross = self.lam_n * float(w_sup @ part)
        conj_i = self.conj_vals[i]

        if rule == UpdateRule.CONSERVATIVE and use_z_bound:
            num = dec.loss_value + conj_i + cross
            s_raw = num / self.denom
            s = 0.0 if s_raw < 0.0 else (1.0 if s_raw > 1.0 else s_raw)
            z1sq = self._track_z(i, dec, y)
            if z1sq is not None and self.z_bound < z1sq * (1.0 - 1e-12):
                raise ConfigError(
                    f"||z||^2 bound {self.z_bound} is below the observed {z1sq}"
                )
        else:
            if self.alpha is None:
                raise UnsupportedOption(
                    "rules other than the bounded conservative one need the dual matrix"
                )
            z1sq = self._track_z(i, dec, y)
            if rule == UpdateRule.ADAPTIVE or rule == UpdateRule.CONSERVATIVE:
                if z1sq == 0.0:
                    s = 0.0
                else:
                    num = dec.loss_value + conj_i + cross
                    den = z1sq * (opnorm_sq / self.lam_n)
                    s_raw = num / den if den > 0.0 else 0.0
                    s = 0.0 if s_raw < 0.0 else (1.0 if s_raw > 1.0 else s_raw)
            elif rule == UpdateRule.LINE_SEARCH:
                s = self._line_search(i, dec, y, conj_i)
            else:
                raise UnsupportedOption(f"rule {rule} is not available for multiclass losses")

        increase = self._apply(i, y, dec, s)
        if increase < self.min_increase:
            self.min_increase = increase
        if increase < -STEP_TOL:
            raise TraceError(
                f"dual objective decreased by {-increase:g} at example {i}"
            )
        return dec, s, increase

    def _track_z(self, i, dec, y):
        """||u - alpha_i||_1^2 when the dual matrix is available."""
        if self.alpha is None:
            return None
        z = -self.alpha[:, i].copy()
        z[y] += 1.0
        z[dec.j] -= 1.0
        z1sq = float(np.sum(np.abs(z))) ** 2
        if z1sq > self.max_z_dsq:
            self.max_z_dsq = z1sq
        return z1sq

    def _line_search(self, i, dec, y, conj_i):
        # X_i z = (psi_y - psi_j) - lambda n w_i; the conjugate is linear
        # along the segment, so the surrogate is an explicit quadratic, but
        # the shared golden-section keeps the rule uniform across losses.
        sup = self.support[i]
        xz = -self.lam_n * self.parts[i]
        xz[self.positions[i][y]] += dec.psi_true.values
        xz[self.positions[i][dec.j]] -= dec.psi_pred.values
        lin = float(self.w[sup] @ xz)
        q2 = float(xz @ xz) / self.lam_n
        delta = dec.cost

        def surrogate(t):
            return -((1.0 - t) * conj_i - t * delta) - t * lin - t * t * q2 / 2.0

        return _golden_max(surrogate)

    def _apply(self, i: int, y: int, dec: DecodeResult, s: float) -> float:
        """Shared tail: move D_i, w_i, w (and alpha when present) by step s."""
        part = self.parts[i]
        sup = self.support[i]
        w_sup = self.w[sup]
        one_minus = 1.0 - s
        coef = s / self.lam_n
        old = part.copy()
        part *= one_minus
        part[self.positions[i][y]] += coef * dec.psi_true.values
        part[self.positions[i][dec.j]] -= coef * dec.psi_pred.values
        dw = part - old
        self.w[sup] = w_sup + dw
        d_gstar = float(w_sup @ dw) + float(dw @ dw) / 2.0

        conj_new = one_minus * self.conj_vals[i] - s * dec.cost
        increase = (self.conj_vals[i] - conj_new) / self.n - self.lam * d_gstar
        self.conj_vals[i] = conj_new

        if self.alpha is not None:
            col = self.alpha[:, i]
            col *= one_minus
            col[y] += s
            col[dec.j] -= s
        return increase

    # -- epoch maintenance ---------------------------------------------------

    def refresh_epoch(self) -> None:
        """Rebuild w from the parts; verify the materialized dual if present."""
        fresh = np.zeros(self.d)
        for sup, part in zip(self.support, self.parts):
            fresh[sup] += part
        scale = max(1.0, float(np.linalg.norm(fresh)))
        drift = float(np.linalg.norm(self.w - fresh))
        if drift > CONSISTENCY_TOL * scale:
            raise TraceError(f"maintained w drifted by {drift:g} from sum of parts")
        self.w[:] = fresh
        if np.any(self.conj_vals > 1e-12):
            raise TraceError("a maintained conjugate value went positive")
        if self.alpha is not None:
            self._verify_alpha()

    def _verify_alpha(self) -> None:
        loss = MulticlassHingeLoss(self.cost) if self.cost is not None else None
        for i, b in enumerate(self.blocks):
            a = self.alpha[:, i]
            beta = -a
            y = int(self.labels[i])
            off = np.delete(beta, y)
            if (
                abs(float(np.sum(beta))) > CONSISTENCY_TOL
                or (off.size and float(np.min(off)) < -CONSISTENCY_TOL)
                or float(np.sum(off)) > 1.0 + CONSISTENCY_TOL
            ):
                raise TraceError(f"implied dual point {i} left the feasible polytope")
            fresh_part = b.combine(a) / self.lam_n
            sup = self.support[i]
            dense_part = np.zeros(self.d)
            dense_part[sup] = self.parts[i]
            err = float(np.max(np.abs(fresh_part - dense_part), initial=0.0))
            if err > CONSISTENCY_TOL * max(1.0, float(np.max(np.abs(fresh_part), initial=0.0))):
                raise TraceError(f"maintained w_{i} drifted {err:g} from its dual column")
            if loss is not None:
                fresh_conj = loss.conjugate(y, beta)
                if not math.isfinite(fresh_conj) or abs(fresh_conj - self.conj_vals[i]) > (
                    CONSISTENCY_TOL * max(1.0, abs(fresh_conj))
                ):
                    raise TraceError(
                        f"maintained conjugate value {self.conj_vals[i]!r} disagrees "
                        f"with the dual column ({fresh_conj!r}) at example {i}"
                    )


def structured_step(state: MulticlassState, oracle, i: int):
    """Public single-step entry point; mutates and returns the state.

    Returns (state, DecodeResult, s, dual_increase).
    """
    dec, s, inc = state.step(i, oracle)
    return state, dec, s, inc


@dataclass
class StructuredResult:
    w: np.ndarray
    trace: RunTrace
    primal: float
    dual: float
    gap: float
    iterations: int
    reached_target: bool
    T0: int
    T: int
    lam: float
    steps: list = field(default_factory=list)


def schedule_structured(n: int, R: float, lam: float, eps_P: float) -> LipschitzSchedule:
    """Iteration budget for the multiclass trainer.

    Uses the tightened curvature bound G = 4 R^2 (from ||z||_1 <= 2), i.e.
    the total warmup + n + 5 (2R)^2 / (lambda eps_P).
    """
    return schedule_from_step_bound(n, 4.0 * R * R, lam, eps_P)


def train_structured(dataset: Dataset, oracle, lam: float, eps_P: float, seed: int = 0, *,
                     cost: CostMatrix | None = None, R: float | None = None,
                     output: str = "random", stop_early: bool = True,
                     gap_check_every: int | None = None,
                     collect_steps: bool = False) -> StructuredResult:
    """Train a structured predictor with O(d) extra state per example.

    Runs the conservative update with the polytope step bound for the
    schedule returned by ``schedule_structured``, stopping early once the
    checkpointed duality gap (from the maintained decomposition) reaches
    ``eps_P``; the output follows the random-iterate rule with the
    schedule's burn-in unless ``output="final"``.
    """
    if isinstance(oracle, CostMatrix):
        cost = oracle
        oracle = multiclass_oracle(cost)
    blocks = dataset.examples
    n = dataset.n
    if R is None:
        R = feature_radius(blocks)
    sched = schedule_structured(n, R, lam, eps_P)
    T0, T = sched.T0, sched.T

    state = MulticlassState(blocks, dataset.labels, lam, R, cost=cost)
    pick_rng, out_rng = seeded_streams(seed)
    picks = PickStream(pick_rng, n)
    t_star = None
    snapshot = None
    if output == "random":
        t_star = T0 + 1 + int(out_rng.integers(T - T0))

    cadence = gap_check_every or n
    trace = RunTrace()
    clock0 = time.perf_counter()
    steps = []

    def checkpoint(t: int) -> float:
        primal = state.primal_value(oracle)
        dual = state.dual_value()
        gap = primal - dual
        if trace.checkpoints and dual < trace.final().dual - STEP_TOL * max(1.0, abs(dual)):
            raise TraceError("dual value decreased across checkpoints")
        if gap < -STEP_TOL * max(1.0, abs(primal)):
            raise TraceError(f"negative duality gap {gap!r} at t={t}")
        trace.append(Checkpoint(t, primal, dual, gap, time.perf_counter() - clock0))
        return gap

    checkpoint(0)
    reached = not stop_early
    t = 0
    while t < T:
        t += 1
        i = picks()
        dec, s, _ = state.step(i, oracle)
        if collect_steps:
            steps.append((i, dec.j, s))
        if t_star is not None and t == t_star:
            snapshot = (state.w.copy(), state.conj_vals.copy())
        if t % n == 0:
            state.refresh_epoch()
        if t % cadence == 0 or t == T:
            gap = checkpoint(t)
            if stop_early and gap <= eps_P:
                reached = True
                break

    if snapshot is not None:
        w_out, conj_out = snapshot
    else:
        w_out, conj_out = state.w.copy(), state.conj_vals.copy()
    primal = _primal_of(state, oracle, w_out)
    dual = -float(np.mean(conj_out)) - lam * float(w_out @ w_out) / 2.0
    gap = primal - dual
    if stop_early and gap <= eps_P:
        reached = True
    return StructuredResult(
        w=w_out, trace=trace, primal=primal, dual=dual, gap=gap, iterations=t,
        reached_target=reached, T0=T0, T=T, lam=lam, steps=steps,
    )


def _primal_of(state: MulticlassState, oracle, w: np.ndarray) -> float:
    total = 0.0
    for i, b in enumerate(state.blocks):
        total += oracle(w, b.columns, int(state.labels[i])).loss_value
    return total / state.n + state.lam * float(w @ w) / 2.0


# -- the generic-solver path over the same kernel ---------------------------


class _MulticlassEngine:
    """Adapter exposing MulticlassState to the generic run loop.

    Materializes the dual matrix and checks it against the maintained
    aggregates each epoch; the update arithmetic is shared with the
    dual-free trainer, so iterate sequences agree bit for bit.
    """

    def __init__(self, problem: Problem, rule: UpdateRule, R_override=None, z_bound=None):
        if problem.regularizer.kind != "l2":
            raise UnsupportedOption("multiclass runs support the l2 regularizer only")
        if rule in (UpdateRule.EXACT, UpdateRule.SMOOTH_FIXED):
            raise UnsupportedOption(f"rule {int(rule)} is unavailable for multiclass losses")
        if R_override is not None and R_override < problem.R * (1.0 - 1e-12):
            raise ConfigError(
                f"R override {R_override} is below the certified bound {problem.R}"
            )
        R = float(R_override) if R_override is not None else problem.R
        loss = problem.loss
        if not isinstance(loss, MulticlassHingeLoss):
            raise UnsupportedOption("multiclass runs need the multiclass hinge loss")
        if z_bound is not None and z_bound < Z_SQ_BOUND * (1.0 - 1e-12):
            # a looser-than-polytope bound is fine; a tighter one is unsound
            if z_bound < Z_SQ_BOUND:
                raise ConfigError(f"||z||^2 bound {z_bound} is below the polytope bound 4")
        self.rule = rule
        self.use_bound = rule == UpdateRule.CONSERVATIVE and z_bound is not None
        self.problem = problem
        self.oracle = multiclass_oracle(loss.cost)
        self.core = MulticlassState(
            problem.dataset.examples,
            problem.dataset.labels,
            problem.lam,
            R,
            z_bound=z_bound if z_bound is not None else Z_SQ_BOUND,
            materialize_alpha=True,
            cost=loss.cost,
        )
        self.R_sq = R * R
        self.opnorm_sq = problem.op_norms**2

    @property
    def alpha(self):
        return self.core.alpha

    @property
    def v(self):
        return self.core.w

    @property
    def min_increase(self):
        return self.core.min_increase

    @property
    def max_z_dsq(self):
        return self.core.max_z_dsq

    def alpha_matrix(self):
        return self.core.alpha.copy()

    def current_w(self):
        return self.core.w.copy()

    def refresh_epoch(self):
        self.core.refresh_epoch()

    def step(self, i: int, collect: bool = False):
        rule = self.rule
        if rule == UpdateRule.CONSERVATIVE and self.use_bound:
            dec, s, inc = self.core.step(i, self.oracle, rule)
        elif rule == UpdateRule.CONSERVATIVE:
            dec, s, inc = self.core.step(
                i, self.oracle, rule, opnorm_sq=self.R_sq, use_z_bound=False
            )
        elif rule == UpdateRule.ADAPTIVE:
            dec, s, inc = self.core.step(
                i, self.oracle, rule, opnorm_sq=float(self.opnorm_sq[i]), use_z_bound=False
            )
        else:
            dec, s, inc = self.core.step(i, self.oracle, rule, use_z_bound=False)
        if not collect:
            return inc, None
        return inc, StepDiagnostics(
            i=i, s=s, delta_alpha=None, dual_increase=inc, z_dsq=math.nan,
            opnorm_sq=math.nan, numerator=math.nan, denominator=math.nan,
            u=None, j=dec.j,
        )


def run_multiclass(problem: Problem, config: SolverConfig) -> RunResult:
    engine = _MulticlassEngine(
        problem, config.rule, R_override=config.R_override, z_bound=config.z_bound
    )
    return _drive(engine, problem, config)


def multiclass_coordinate_step(problem: Problem, state: DualState, i: int, rule,
                               R_override=None, z_bound=None):
    """Single multiclass update on a copy of an arbitrary dual state."""
    engine = _MulticlassEngine(problem, UpdateRule(int(rule)), R_override, z_bound)
    core = engine.core
    core.alpha[:, :] = state.alpha
    lam_n = core.lam_n
    for idx, b in enumerate(problem.dataset.examples):
        dense = b.combine(state.alpha[:, idx]) / lam_n
        core.parts[idx][:] = dense[core.support[idx]]
        y = int(core.labels[idx])
        core.conj_vals[idx] = problem.loss.conjugate(y, -state.alpha[:, idx])
    core.w[:] = np.zeros(problem.d)
    for sup, part in zip(core.support, core.parts):
        core.w[sup] += part
    inc, diag = engine.step(i, collect=True)
    new_state = DualState(core.alpha.copy(), core.w.copy(), state.epoch)
    return new_state, diag
