"""Slow, independent reference solvers and brute-force oracles.

Everything here exists to cross-check the coordinate solver from a different
code path: a batch proximal-(sub)gradient reference sharing only the loss
primitives and the regularizer's conjugate-gradient map, a grid-search
conjugate, and an exact-expectation check of the per-iteration improvement
inequality on small problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, UnsupportedOption
from .problem import Problem, _as_matrix, dual_objective, duality_gap, primal_objective
from .regularizers import soft_threshold


@dataclass
class OracleConfig:
    max_iters: int = 500_000
    target_gap: float = 1e-8
    check_every: int = 25
    stall_tol: float = 1e-6
    stall_window: int = 2000
    step_scale: float = 1.0

    def __post_init__(self):
        if min(self.max_iters, self.check_every, self.stall_window) < 1:
            raise ValueError("iteration fields must be positive")
        if min(self.target_gap, self.stall_tol, self.step_scale) <= 0.0:
            raise ValueError("tolerances must be positive")


def _loss_grad(problem: Problem, w: np.ndarray) -> np.ndarray:
    scores = problem.scores_all(w)
    g = problem.loss.subgradient_many(problem.dataset.labels, scores)
    return (problem.X.T @ g) / problem.n


def _prox(problem: Problem, u: np.ndarray, eta: float) -> np.ndarray:
    """argmin_w ||w - u||^2/2 + eta * lambda * g(w) for the closed-form kinds."""
    lam = problem.lam
    reg = problem.regularizer
    if reg.kind == "l2":
        return u / (1.0 + eta * lam)
    if reg.kind == "l1l2":
        return soft_threshold(u, eta * lam * reg.threshold) / (1.0 + eta * lam)
    raise UnsupportedOption(
        f"the batch reference has no proximal map for the {reg.kind!r} regularizer"
    )


def _spectral_bound(problem: Problem, iters: int = 60) -> float:
    """Power-iteration estimate of lambda_max(X^T X) / n, padded by 5%."""
    rng = np.random.Generator(np.random.PCG64(12345))
    x = rng.normal(size=problem.d)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = problem.X.T @ (problem.X @ x)
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 1e-12
        est = norm
        x = y / norm
    return 1.05 * est / problem.n


def prox_grad_reference(problem: Problem, config: OracleConfig | None = None) -> np.ndarray:
    """High-accuracy batch solution of the composite objective.

    Smooth losses: proximal gradient with a fixed safe step, certified by the
    duality gap at the gradient-induced dual point, run to ``target_gap``.
    Non-smooth losses: proximal subgradient with diminishing steps, stopped
    once the best objective stalls below ``stall_tol`` over a window.

    Deliberately shares no step logic with the coordinate solver.
    """
    if problem.dataset.k != 1:
        raise UnsupportedOption("the batch reference handles scalar losses only")
    cfg = config or OracleConfig()
    loss = problem.loss
    smooth = loss.gamma is not None

    w = np.zeros(problem.d)
    if smooth:
        lip = _spectral_bound(problem) / loss.gamma
        eta = cfg.step_scale / max(lip, 1e-12)
        for it in range(1, cfg.max_iters + 1):
            w = _prox(problem, w - eta * _loss_grad(problem, w), eta)
            if it % cfg.check_every == 0 or it == cfg.max_iters:
                gap = _certified_gap(problem, w)
                if gap <= cfg.target_gap:
                    return w
        raise NonConvergence(
            f"batch reference did not reach gap {cfg.target_gap:g} "
            f"in {cfg.max_iters} iterations (last {gap:g})"
        )

    best = math.inf
    best_w = w.copy()
    last_improve = 0
    base_step = cfg.step_scale
    for it in range(1, cfg.max_iters + 1):
        eta = base_step / math.sqrt(it)
        w = _prox(problem, w - eta * _loss_grad(problem, w), eta)
        p = primal_objective(problem, w)
        if p < best - cfg.stall_tol:
            best = p
            best_w = w.copy()
            last_improve = it
        elif p < best:
            best = p
            best_w = w.copy()
        if it - last_improve >= cfg.stall_window:
            return best_w
    raise NonConvergence(
        f"batch subgradient reference never stalled within {cfg.max_iters} iterations"
    )


def _certified_gap(problem: Problem, w: np.ndarray) -> float:
    """P(w) - D(alpha_w) with alpha_i = -phi_i'(x_i @ w), a feasible dual point."""
    scores = problem.scores_all(w)
    alpha = -problem.loss.subgradient_many(problem.dataset.labels, scores)
    return primal_objective(problem, w) - dual_objective(problem, alpha)


def brute_force_conjugate(loss, label, u: float, lo: float = -50.0, hi: float = 50.0,
                          step: float = 1e-4) -> float:
    """Grid maximum of z*u - phi(z); the anti-hallucination conjugate oracle."""
    grid = np.arange(lo, hi + step, step)
    vals = grid * u - loss.value_many(np.asarray(label, dtype=np.float64), grid)
    return float(np.max(vals))


def expected_improvement_check(problem: Problem, state_alpha, s: float):
    """Exact expectation of the dual improvement of an s-step, and its bound.

    For the current state and subgradient direction z_i = u_i - alpha_i,
    computes lhs = (1/n) sum_i [D(alpha + s z_i e_i) - D(alpha)] by full
    enumeration, and the guaranteed lower bound

        rhs = (s/n) (P - D) - (s/n)^2 G / (2 lambda),
        G = (1/n) sum_i (||X_i||^2 - gamma (1-s) lambda n / s) ||u_i - alpha_i||^2.

    Requires n <= 64; returns (lhs, rhs).
    """
    if problem.n > 64:
        raise ValueError("exact enumeration is limited to n <= 64")
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    alpha = _as_matrix(np.asarray(state_alpha, dtype=np.float64), problem.dataset.k)
    report = duality_gap(problem, alpha)
    if s == 0.0:
        return 0.0, 0.0

    lam = problem.lam
    n = problem.n
    lam_n = lam * n
    gamma = problem.loss.gamma or 0.0
    v = problem.aggregate(alpha)
    gstar_v = problem.regularizer.conj_value(v)
    w = problem.regularizer.conj_grad(v)
    labels = problem.dataset.labels

    lhs_total = 0.0
    g_total = 0.0
    for i, block in enumerate(problem.dataset.examples):
        a_i = alpha[:, i]
        scores = block.scores(w)
        if problem.dataset.k == 1:
            y = float(labels[i])
            u = -problem.loss.subgradient(y, float(scores[0]))
            z = np.array([u - a_i[0]])
            z_dsq = float(z[0]) ** 2
            conj_old = problem.loss.conjugate(y, -float(a_i[0]))
            conj_new = problem.loss.conjugate(y, -float(a_i[0] + s * z[0]))
        else:
            y = int(labels[i])
            u = -problem.loss.subgradient(y, scores)
            z = u - a_i
            z_dsq = float(np.sum(np.abs(z))) ** 2
            conj_old = problem.loss.conjugate(y, -a_i)
            conj_new = problem.loss.conjugate(y, -(a_i + s * z))
        v_new = v.copy()
        block.combine_into(s * z, v_new, 1.0 / lam_n)
        d_gstar = problem.regularizer.conj_value(v_new) - gstar_v
        lhs_total += (conj_old - conj_new) / n - lam * d_gstar
        g_total += (problem.op_norms[i] ** 2 - gamma * (1.0 - s) * lam_n / s) * z_dsq

    lhs = lhs_total / n
    G = g_total / n
    rhs = (s / n) * report.gap - (s / n) ** 2 * G / (2.0 * lam)
    return lhs, rhs
