"""Solving l1-regularized loss minimization through a strongly convex proxy.

To minimize (1/n) sum_i phi_i(x_i @ w) + sigma ||w||_1 to accuracy eps, a
small strongly convex term is added and its weight lambda is tied to eps:

* instances bounded in l2: lambda = eps / B^2, g = ||w||^2/2 + (sigma/lambda)||w||_1
  with B >= ||w*||_2 (B = 1/sigma is always valid)
* instances bounded in sup norm: lambda = eps / (3 ln(d) B^2) and the q-norm
  composite regularizer, with B >= ||w*||_1

An (eps/2)-accurate solution of the proxy, certified by its duality gap, is
then an eps-accurate solution of the original problem. The solver stops on
the measured gap, with the worst-case schedule as a hard iteration cap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .problem import Dataset, Problem, RunTrace
from .regularizers import ElasticNetRegularizer, QNormRegularizer
from .solver import (
    RunResult,
    SolverConfig,
    UpdateRule,
    run,
    schedule_lipschitz,
    schedule_smooth,
)


@dataclass
class L1Config:
    """Accuracy-driven setup for the l1 front ends.

    ``B`` defaults to 1/sigma, which is always a valid norm bound on the
    optimum. ``rule`` defaults to the fixed smooth step for smooth losses
    and the conservative rule otherwise.
    """

    sigma: float
    eps: float
    B: float | None = None
    rule: UpdateRule | int | str | None = None
    seed: int = 0
    R: float | None = None
    gap_check_every: int | None = None

    def __post_init__(self):
        if self.sigma <= 0.0 or self.eps <= 0.0:
            raise ValueError("sigma and eps must be positive")
        if self.B is not None and self.B <= 0.0:
            raise ValueError("B must be positive")

    @property
    def bound(self) -> float:
        return self.B if self.B is not None else 1.0 / self.sigma


@dataclass
class L1Result:
    w: np.ndarray
    trace: RunTrace
    lam: float
    threshold: float  # sigma / lambda
    B: float
    R: float
    reached_target: bool
    run: RunResult
    problem: Problem


def _solve(dataset: Dataset, loss, config: L1Config, lam: float, reg,
           bound_norm) -> L1Result:
    problem = Problem(dataset, loss, reg, lam, R=config.R)
    n = dataset.n
    target = config.eps / 2.0
    smooth = loss.gamma is not None
    if smooth:
        sched = schedule_smooth(n, problem.R, lam, loss.gamma, target)
        T, T0 = sched.T, 0
        output = "final"
        default_rule = UpdateRule.SMOOTH_FIXED
    else:
        sched = schedule_lipschitz(n, problem.R, loss.lipschitz, lam, target)
        T, T0 = sched.T, sched.T0
        output = "random"
        default_rule = UpdateRule.CONSERVATIVE
    rule = config.rule if config.rule is not None else default_rule
    solver_cfg = SolverConfig(
        rule=rule,
        T=T,
        T0=T0,
        output=output,
        seed=config.seed,
        gap_check_every=config.gap_check_every,
        target_gap=target,
    )
    result = run(problem, solver_cfg)
    norm_hat = bound_norm(result.w)
    if norm_hat > config.bound:
        # the accuracy reduction assumed ||w*|| <= B; this is only a heuristic
        # signal since w* itself is unknown
        warnings.warn(
            f"the returned solution has norm {norm_hat:.4g} > B = {config.bound:.4g}; "
            "the assumed bound on the optimum may be too small",
            UserWarning,
            stacklevel=3,
        )
    return L1Result(
        w=result.w,
        trace=result.trace,
        lam=lam,
        threshold=reg.threshold,
        B=config.bound,
        R=problem.R,
        reached_target=result.reached_target,
        run=result,
        problem=problem,
    )


def solve_l1_l2(dataset: Dataset, loss, config: L1Config) -> L1Result:
    """l1 front end for instances of bounded l2 norm: lambda = eps / B^2."""
    B = config.bound
    lam = config.eps / (B * B)
    reg = ElasticNetRegularizer(config.sigma / lam)
    return _solve(dataset, loss, config, lam, reg,
                  lambda w: float(np.linalg.norm(w)))


def solve_l1_linf(dataset: Dataset, loss, config: L1Config) -> L1Result:
    """l1 front end for instances of bounded sup norm: lambda = eps/(3 ln(d) B^2)."""
    d = dataset.d
    if d < 3:
        raise DimensionError("the sup-norm variant requires dimension >= 3")
    B = config.bound
    lam = config.eps / (3.0 * math.log(d) * B * B)
    reg = QNormRegularizer(d, config.sigma / lam)
    return _solve(dataset, loss, config, lam, reg,
                  lambda w: float(np.sum(np.abs(w))))


def l1_objective(dataset: Dataset, loss, sigma: float, w: np.ndarray) -> float:
    """The original objective (1/n) sum_i phi_i(x_i @ w) + sigma ||w||_1."""
    if dataset.k != 1:
        raise ValueError("the l1 front ends handle scalar losses only")
    scores = np.array([b.columns[0].dot(w) for b in dataset.examples])
    return float(np.mean(loss.value_many(dataset.labels, scores))) + sigma * float(
        np.sum(np.abs(w))
    )


@dataclass(frozen=True)
class L1Certificate:
    value: float
    reference_value: float
    difference: float
    eps: float
    passed: bool


def certify_l1(dataset: Dataset, loss, sigma: float, w_hat: np.ndarray,
               w_ref: np.ndarray, eps: float) -> L1Certificate:
    """Compare the original objective at w_hat against a reference solution."""
    value = l1_objective(dataset, loss, sigma, w_hat)
    ref = l1_objective(dataset, loss, sigma, w_ref)
    diff = value - ref
    return L1Certificate(value, ref, diff, eps, diff <= eps)
