"""Stochastic dual coordinate ascent with a proximal handling of g*.

One iteration picks an example i uniformly at random and increases the dual
objective along the i-th dual vector. Five interchangeable update rules are
provided (the CLI numbers them 1-5):

1. ``exact``          exact maximizer of the proximal surrogate
                      -phi*(-(alpha_i+d)) - w^T X_i d - ||X_i d||^2/(2 lambda n)
                      (closed-form losses, l2 weight norm only)
2. ``line_search``    direction z = u - alpha_i with -u a loss subgradient,
                      step s in [0,1] by golden-section on the surrogate
3. ``adaptive``       same direction, closed-form s from per-example curvature
4. ``conservative``   rule 3 with the global bound R^2 in place of ||X_i||^2,
                      optionally replacing ||z||^2 by a configured bound
5. ``smooth_fixed``   fixed step lambda*n*gamma/(R^2 + lambda*n*gamma) toward
                      -grad phi_i (smooth losses only)

Iteration budgets for a target duality gap come from ``schedule_smooth`` and
``schedule_lipschitz``; ``run`` additionally supports gap-based early
stopping, averaged or randomly sampled outputs with burn-in, and per-epoch
recomputation of the maintained aggregate v to bound drift.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ConfigError, TraceError, UnsupportedOption
from .losses import ScalarLoss
from .problem import Checkpoint, DualState, GapReport, Problem, RunTrace, duality_gap
from .regularizers import Regularizer

PICK_BLOCK = 8192
LINE_SEARCH_ITERS = 64
STEP_TOL = 1e-9  # per-step dual decrease allowance
DRIFT_TOL = 1e-9


class UpdateRule(IntEnum):
    EXACT = 1
    LINE_SEARCH = 2
    ADAPTIVE = 3
    CONSERVATIVE = 4
    SMOOTH_FIXED = 5


_RULE_NAMES = {
    "exact": UpdateRule.EXACT,
    "line-search": UpdateRule.LINE_SEARCH,
    "line_search": UpdateRule.LINE_SEARCH,
    "adaptive": UpdateRule.ADAPTIVE,
    "conservative": UpdateRule.CONSERVATIVE,
    "smooth-fixed": UpdateRule.SMOOTH_FIXED,
    "smooth_fixed": UpdateRule.SMOOTH_FIXED,
}


def parse_rule(value) -> UpdateRule:
    if isinstance(value, UpdateRule):
        return value
    if isinstance(value, int):
        return UpdateRule(value)
    s = str(value).strip().lower()
    if s.isdigit():
        return UpdateRule(int(s))
    if s in _RULE_NAMES:
        return _RULE_NAMES[s]
    raise ConfigError(f"unknown update rule {value!r}")


def seeded_streams(seed: int):
    """Two independent PCG64 generators derived from one seed.

    Stream 0 drives the coordinate picks, stream 1 the output-iterate
    selection, so changing the output mode never perturbs the pick sequence.
    """
    children = np.random.SeedSequence(seed).spawn(2)
    return (
        np.random.Generator(np.random.PCG64(children[0])),
        np.random.Generator(np.random.PCG64(children[1])),
    )


class PickStream:
    """Uniform i.i.d. indices drawn in fixed-size blocks from a generator.

    The block size is a constant, so the sequence depends only on the seed,
    never on checkpoint cadence.
    """

    def __init__(self, rng, n: int):
        self._rng = rng
        self._n = n
        self._buf = np.zeros(0, dtype=np.int64)
        self._pos = 0

    def __call__(self) -> int:
        if self._pos >= self._buf.size:
            self._buf = self._rng.integers(0, self._n, size=PICK_BLOCK)
            self._pos = 0
        i = self._buf[self._pos]
        self._pos += 1
        return int(i)


@dataclass
class SolverConfig:
    """Run parameters; see ``run`` for semantics."""

    rule: UpdateRule | int | str
    T: int
    T0: int = 0
    output: str = "final"
    seed: int = 0
    gap_check_every: int | None = None
    target_gap: float | None = None
    R_override: float | None = None
    z_bound: float | None = None
    collect_diagnostics: bool = False

    def __post_init__(self):
        self.rule = parse_rule(self.rule)
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if not 0 <= self.T0 < self.T:
            raise ConfigError("need 0 <= T0 < T")
        if self.output not in ("final", "average", "random"):
            raise ConfigError(f"unknown output mode {self.output!r}")
        if self.gap_check_every is not None and self.gap_check_every < 1:
            raise ConfigError("gap_check_every must be >= 1")
        if self.target_gap is not None and not self.target_gap > 0.0:
            raise ConfigError("target_gap must be positive")
        if self.z_bound is not None and not self.z_bound > 0.0:
            raise ConfigError("z_bound must be positive")


@dataclass
class StepDiagnostics:
    """What one coordinate update did, for invariant checks and tests."""

    i: int
    s: float
    delta_alpha: object
    dual_increase: float
    z_dsq: float
    opnorm_sq: float
    numerator: float
    denominator: float
    u: object = None
    j: int = -1  # decoded class for multiclass steps


@dataclass
class RunResult:
    w: np.ndarray
    alpha: np.ndarray
    trace: RunTrace
    primal: float
    dual: float
    gap: float
    iterations: int
    reached_target: bool
    min_step_increase: float
    max_z_dsq: float
    diagnostics: list = field(default_factory=list)


class _ScalarEngine:
    """Mutable run state for width-1 blocks (all scalar losses)."""

    def __init__(self, problem: Problem, rule: UpdateRule, R_override=None, z_bound=None):
        if problem.dataset.k != 1:
            raise UnsupportedOption("scalar engine requires width-1 blocks")
        self.problem = problem
        self.rule = rule
        self.loss = problem.loss
        self.reg: Regularizer = problem.regularizer
        self.lam = problem.lam
        self.n = problem.n
        self.labels = problem.dataset.labels.astype(np.float64)
        self.indptr = problem.indptr
        self.indices = problem.indices
        self.data = problem.data
        self.weight_sq = problem.weight_norms_sq
        self.opnorm_sq = problem.op_norms**2

        if R_override is not None and R_override < problem.R * (1.0 - 1e-12):
            raise ConfigError(
                f"R override {R_override} is below the certified bound {problem.R}"
            )
        self.R = float(R_override) if R_override is not None else problem.R
        self.z_bound = z_bound
        gamma = self.loss.gamma

        if rule == UpdateRule.EXACT:
            if self.reg.weight_dual != "l2":
                raise UnsupportedOption(
                    "the exact rule needs an l2 weight norm; use rules 2-4 here"
                )
            if type(self.loss).exact_step is ScalarLoss.exact_step:
                raise UnsupportedOption(
                    f"no closed-form coordinate update for {self.loss.name} loss"
                )
        if rule == UpdateRule.SMOOTH_FIXED:
            if gamma is None:
                raise UnsupportedOption("the fixed-step rule requires a smooth loss")
            ln = self.lam * self.n
            self.kappa = ln * gamma / (self.R**2 + ln * gamma)
        if rule == UpdateRule.CONSERVATIVE and z_bound is not None and gamma:
            raise ConfigError(
                "replacing ||z||^2 by a bound is only sound for non-smooth losses"
            )

        self.alpha = np.zeros(self.n)
        self.v = np.zeros(problem.d)
        self.reg_state = self.reg.solver_state(self.v)
        self.max_z_dsq = 0.0
        self.min_increase = math.inf

    # -- state management ---------------------------------------------------

    def load(self, state: DualState) -> None:
        self.alpha = np.array(state.alpha[0], dtype=np.float64, copy=True)
        self.v = np.array(state.v, dtype=np.float64, copy=True)
        self.reg_state = self.reg.solver_state(self.v)

    def alpha_matrix(self) -> np.ndarray:
        return self.alpha[None, :].copy()

    def current_w(self) -> np.ndarray:
        return self.reg.conj_grad(self.v)

    def refresh_epoch(self) -> None:
        """Recompute v from alpha, bounding incremental drift."""
        fresh = self.problem.aggregate(self.alpha[None, :])
        scale = max(1.0, float(np.linalg.norm(fresh)))
        drift = float(np.linalg.norm(self.v - fresh))
        if drift > DRIFT_TOL * scale:
            raise TraceError(f"maintained v drifted by {drift:g} (relative tol {DRIFT_TOL:g})")
        self.v[:] = fresh
        self.reg_state.refresh(self.v)

    # -- one coordinate update ----------------------------------------------

    def step(self, i: int, collect: bool = False):
        loss = self.loss
        lam_n = self.lam * self.n
        lo = self.indptr[i]
        hi = self.indptr[i + 1]
        idx = self.indices[lo:hi]
        xv = self.data[lo:hi]
        if idx.size:
            w_sub = self.reg_state.w_at(self.v, idx)
            xtw = float(xv @ w_sub)
        else:
            xtw = 0.0
        y = self.labels[i]
        a_old = float(self.alpha[i])

        s = math.nan
        u = None
        z_dsq = math.nan
        num = math.nan
        den = math.nan
        opn_sq = math.nan
        rule = self.rule

        if rule == UpdateRule.EXACT:
            d_alpha = loss.exact_step(y, a_old, xtw, self.weight_sq[i] / lam_n)
        else:
            u = -loss.subgradient(y, xtw)
            z = u - a_old
            z_dsq = z * z
            if z_dsq > self.max_z_dsq:
                self.max_z_dsq = z_dsq
            if z == 0.0:
                s = 0.0
                d_alpha = 0.0
            elif rule == UpdateRule.LINE_SEARCH:
                q2 = self.weight_sq[i] * z_dsq / lam_n
                lin = xtw * z

                def surrogate(t):
                    return -loss.conjugate(y, -(a_old + t * z)) - t * lin - t * t * q2 / 2.0

                s = _golden_max(surrogate)
                d_alpha = s * z
            elif rule == UpdateRule.SMOOTH_FIXED:
                d_alpha = self.kappa * (u - a_old)
                s = self.kappa
            else:
                gamma = loss.gamma or 0.0
                if rule == UpdateRule.ADAPTIVE:
                    opn_sq = self.opnorm_sq[i]
                    zsq_used = z_dsq
                else:
                    opn_sq = self.R * self.R
                    if self.z_bound is not None:
                        if self.z_bound < z_dsq * (1.0 - 1e-12):
                            raise ConfigError(
                                f"configured ||z||^2 bound {self.z_bound} is below "
                                f"the observed value {z_dsq}"
                            )
                        zsq_used = self.z_bound
                    else:
                        zsq_used = z_dsq
                num = (
                    loss.value(y, xtw)
                    + loss.conjugate(y, -a_old)
                    + xtw * a_old
                    + gamma / 2.0 * zsq_used
                )
                den = zsq_used * (gamma + opn_sq / lam_n)
                s = num / den if den > 0.0 else 0.0
                s = min(max(s, 0.0), 1.0)
                d_alpha = s * z

        if d_alpha != 0.0:
            conj_old = loss.conjugate(y, -a_old)
            a_new = a_old + d_alpha
            conj_new = loss.conjugate(y, -a_new)
            if math.isinf(conj_new):
                raise TraceError(f"update left the conjugate domain at example {i}")
            self.alpha[i] = a_new
            if idx.size:
                d_gstar = self.reg_state.apply_update(self.v, idx, (d_alpha / lam_n) * xv)
            else:
                d_gstar = 0.0
            increase = (conj_old - conj_new) / self.n - self.lam * d_gstar
        else:
            increase = 0.0

        if increase < self.min_increase:
            self.min_increase = increase
        if increase < -STEP_TOL:
            raise TraceError(
                f"dual objective decreased by {-increase:g} at example {i} "
                f"(tolerance {STEP_TOL:g})"
            )
        if not collect:
            return increase, None
        return increase, StepDiagnostics(
            i=i,
            s=s,
            delta_alpha=d_alpha,
            dual_increase=increase,
            z_dsq=z_dsq,
            opnorm_sq=opn_sq,
            numerator=num,
            denominator=den,
            u=u,
        )


def _golden_max(f, lo: float = 0.0, hi: float = 1.0, iters: int = LINE_SEARCH_ITERS) -> float:
    """Argmax of a concave f over [lo, hi] by golden-section search.

    The best evaluated point (endpoints included) is returned, so the result
    never scores below f(lo).
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    invphi2 = (3.0 - math.sqrt(5.0)) / 2.0
    a, b = lo, hi
    h = b - a
    c = a + invphi2 * h
    d = a + invphi * h
    fc = f(c)
    fd = f(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + invphi2 * h
            fc = f(c)
            if fc > best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + invphi * h
            fd = f(d)
            if fd > best_f:
                best_x, best_f = d, fd
    # endpoint ties snap to the endpoints (exact boundary solutions)
    for x in (hi, lo):
        fx = f(x)
        if fx >= best_f:
            best_x, best_f = x, fx
    return _quadratic_polish(f, best_x, best_f, lo, hi)


def _quadratic_polish(f, s, fs, lo, hi, h: float = 1e-5):
    """One guarded Newton step from finite differences.

    Comparisons of f flatten out within ~sqrt(eps) of an interior maximum, so
    golden-section alone stalls around 1e-8; a single quadratic fit pushes the
    argmax error down to ~1e-13. Boundary maxima are left untouched.
    """
    if s - h <= lo or s + h >= hi:
        return s
    fp = f(s + h)
    fm = f(s - h)
    d1 = (fp - fm) / (2.0 * h)
    d2 = (fp - 2.0 * fs + fm) / (h * h)
    if not (math.isfinite(d1) and d2 < 0.0):
        return s
    step = d1 / d2
    cand = s - step
    if abs(step) > 0.1 or not lo <= cand <= hi:
        return s
    if f(cand) >= fs - 1e-12 * max(1.0, abs(fs)):
        return cand
    return s


def run(problem: Problem, config: SolverConfig) -> RunResult:
    """Run T coordinate updates with uniform seeded picks.

    Checkpoints (primal, dual, gap) are recorded at t=0, every
    ``gap_check_every`` iterations (default: one epoch of n), and at the
    final iterate; the run stops early once a checkpointed gap falls below
    ``target_gap``. Output follows ``config.output``:

    * ``final``   the state after the last executed iteration
    * ``average`` the mean of the pre-step iterates over t in (T0, T]
    * ``random``  the state after a uniformly drawn t in (T0, T]

    If an early stop lands before the drawn output iterate (or before any
    averaging window), the final state is returned instead.
    """
    if problem.dataset.k != 1:
        from .structured import run_multiclass

        return run_multiclass(problem, config)

    engine = _ScalarEngine(
        problem, config.rule, R_override=config.R_override, z_bound=config.z_bound
    )
    return _drive(engine, problem, config)


def _drive(engine, problem: Problem, config: SolverConfig) -> RunResult:
    n = problem.n
    cadence = config.gap_check_every or n
    pick_rng, out_rng = seeded_streams(config.seed)
    picks = PickStream(pick_rng, n)

    t_star = None
    snapshot = None
    if config.output == "random":
        t_star = config.T0 + 1 + int(out_rng.integers(config.T - config.T0))

    averaging = config.output == "average"
    if averaging:
        w_sum = np.zeros(problem.d)
        alpha_sum = np.zeros_like(engine.alpha)
        v_sum = np.zeros(problem.d)
        avg_count = 0

    trace = RunTrace()
    t0_clock = time.perf_counter()
    diagnostics = []

    def checkpoint(t: int) -> GapReport:
        report = duality_gap(problem, engine.alpha_matrix())
        seconds = time.perf_counter() - t0_clock
        if trace.checkpoints:
            prev = trace.final()
            if report.dual < prev.dual - STEP_TOL * max(1.0, abs(prev.dual)):
                raise TraceError(
                    f"dual value decreased across checkpoints: {prev.dual!r} -> {report.dual!r}"
                )
        if report.gap < -STEP_TOL * max(1.0, abs(report.primal)):
            raise TraceError(f"negative duality gap {report.gap!r} at t={t}")
        trace.append(Checkpoint(t, report.primal, report.dual, report.gap, seconds))
        return report

    checkpoint(0)
    reached = False
    t = 0
    while t < config.T:
        t += 1
        if averaging and t > config.T0:
            w_sum += engine.current_w()
            alpha_sum += engine.alpha
            v_sum += engine.v
            avg_count += 1
        i = picks()
        _, diag = engine.step(i, collect=config.collect_diagnostics)
        if diag is not None:
            diagnostics.append(diag)
        if t_star is not None and t == t_star:
            snapshot = (engine.alpha.copy(), engine.v.copy())
        if t % n == 0:
            engine.refresh_epoch()
        if t % cadence == 0 or t == config.T:
            report = checkpoint(t)
            if config.target_gap is not None and report.gap <= config.target_gap:
                reached = True
                break
    if config.target_gap is None:
        reached = True

    # assemble the configured output
    if config.output == "random" and snapshot is not None:
        alpha_out, v_out = snapshot
        w_out = problem.regularizer.conj_grad(v_out)
    elif averaging and avg_count > 0:
        alpha_out = alpha_sum / avg_count
        v_out = v_sum / avg_count
        w_out = w_sum / avg_count
    else:
        alpha_out = engine.alpha.copy()
        v_out = engine.v.copy()
        w_out = problem.regularizer.conj_grad(v_out)

    alpha_mat = alpha_out[None, :] if alpha_out.ndim == 1 else alpha_out
    from .problem import _conjugates, primal_objective

    primal = primal_objective(problem, w_out)
    conj = _conjugates(problem, alpha_mat)
    dual = -float(np.mean(conj)) - problem.lam * problem.regularizer.conj_value(v_out)

    return RunResult(
        w=w_out,
        alpha=alpha_mat,
        trace=trace,
        primal=primal,
        dual=dual,
        gap=primal - dual,
        iterations=t,
        reached_target=reached,
        min_step_increase=engine.min_increase if engine.min_increase != math.inf else 0.0,
        max_z_dsq=engine.max_z_dsq,
        diagnostics=diagnostics,
    )


# single-step API used by the invariant tests


def coordinate_step(problem, state: DualState, i: int, rule, R_override=None, z_bound=None):
    """Apply one update at example i to a copy of ``state``.

    Returns (new_state, diagnostics).
    """
    rule = parse_rule(rule)
    if problem.dataset.k != 1:
        from .structured import multiclass_coordinate_step

        return multiclass_coordinate_step(problem, state, i, rule, R_override, z_bound)
    engine = _ScalarEngine(problem, rule, R_override=R_override, z_bound=z_bound)
    engine.load(state)
    _, diag = engine.step(i, collect=True)
    return DualState(engine.alpha_matrix(), engine.v.copy(), state.epoch), diag


def step_exact(problem, state, i):
    return coordinate_step(problem, state, i, UpdateRule.EXACT)


def step_line_search(problem, state, i):
    return coordinate_step(problem, state, i, UpdateRule.LINE_SEARCH)


def step_adaptive(problem, state, i):
    return coordinate_step(problem, state, i, UpdateRule.ADAPTIVE)


def step_conservative(problem, state, i, R_override=None, z_bound=None):
    return coordinate_step(
        problem, state, i, UpdateRule.CONSERVATIVE, R_override=R_override, z_bound=z_bound
    )


def step_smooth_fixed(problem, state, i, R_override=None):
    return coordinate_step(problem, state, i, UpdateRule.SMOOTH_FIXED, R_override=R_override)


# iteration schedules


@dataclass(frozen=True)
class SmoothSchedule:
    T: int
    T0: int
    condition: float  # n + R^2/(lambda gamma)


@dataclass(frozen=True)
class LipschitzSchedule:
    T0: int
    T: int
    warmup: int  # the max(0, ceil(n log(lambda n / (2 G)))) part
    G: float


def schedule_smooth(n, R, lam, gamma, eps_P, window=None) -> SmoothSchedule:
    """Iterations sufficient for an expected duality gap of eps_P (smooth case).

    With no ``window``, returns T >= C log(C / eps_P) for the final iterate,
    where C = n + R^2/(lambda gamma). With ``window`` = T - T0, returns the
    burn-in T0 >= C log(C / (window * eps_P)) for averaged/random outputs.
    """
    if min(n, R, lam, gamma, eps_P) <= 0:
        raise ValueError("all schedule inputs must be positive")
    base = n + R * R / (lam * gamma)
    if window is None:
        T = max(1, math.ceil(base * math.log(base / eps_P)))
        return SmoothSchedule(T=T, T0=0, condition=base)
    t0 = max(0, math.ceil(base * math.log(base / (window * eps_P))))
    return SmoothSchedule(T=t0 + window, T0=t0, condition=base)


def schedule_from_step_bound(n, G, lam, eps_P) -> LipschitzSchedule:
    """Burn-in and total iterations from a bound G on the step curvature.

    G bounds (1/n) sum_i ||X_i||^2 ||u_i - alpha_i||^2. The returned pair
    satisfies the sufficient conditions T0 >= warmup + 4G/(lambda eps) - 2n
    and T - T0 >= max(n, G/(lambda eps)), with the warmup
    max(0, ceil(n log(2 lambda n / G))); the total equals the conservative
    closed form warmup + n + 5G/(lambda eps).
    """
    if min(n, G, lam, eps_P) <= 0:
        raise ValueError("all schedule inputs must be positive")
    warmup = max(0, math.ceil(n * math.log(2.0 * lam * n / G)))
    T0 = warmup + max(0, math.ceil(4.0 * G / (lam * eps_P) - 2.0 * n))
    T = warmup + n + math.ceil(5.0 * G / (lam * eps_P))
    return LipschitzSchedule(T0=T0, T=T, warmup=warmup, G=G)


def schedule_lipschitz(n, R, L, lam, eps_P) -> LipschitzSchedule:
    """Iterations sufficient for an expected gap of eps_P with an L-Lipschitz loss.

    Uses the generic curvature bound G = 4 (R L)^2, giving the total
    warmup + n + 20 (R L)^2 / (lambda eps_P).
    """
    if min(R, L) <= 0:
        raise ValueError("R and L must be positive")
    return schedule_from_step_bound(n, 4.0 * (R * L) ** 2, lam, eps_P)
