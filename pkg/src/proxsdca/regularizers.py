"""Strongly convex regularizers with closed-form conjugate gradients.

Every regularizer here is 1-strongly convex w.r.t. some weight norm, so its
conjugate g* is 1-smooth w.r.t. the dual ``weight_dual`` norm. The solver
only ever touches g through three maps:

* ``value(w)``       g(w)
* ``conj_value(v)``  g*(v)
* ``conj_grad(v)``   nabla g*(v) = argmax_w (w @ v - g(w))

``solver_state(v)`` returns a mutable companion object that keeps g*(v) and
nabla g*(v) cheap under sparse updates of v; it is recomputed from scratch
once per epoch to bound floating-point drift.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


class Regularizer:
    kind = "base"
    weight_dual = "l2"

    def value(self, w: np.ndarray) -> float:
        raise NotImplementedError

    def conj_value(self, v: np.ndarray) -> float:
        raise NotImplementedError

    def conj_grad(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stationarity_residual(self, v: np.ndarray, w: np.ndarray) -> float:
        """Max violation of the first-order conditions for w = nabla g*(v).

        Exactly zero (up to rounding) iff w maximizes w @ v - g(w); used as
        an implementation-independent oracle on the conjugate gradient.
        """
        raise NotImplementedError

    def solver_state(self, v: np.ndarray) -> "_SolverState":
        raise NotImplementedError


class _SolverState:
    """Incremental view of (g*(v), nabla g*(v)) under sparse v updates."""

    def refresh(self, v: np.ndarray) -> None:
        raise NotImplementedError

    def conj_value(self) -> float:
        raise NotImplementedError

    def w_at(self, v: np.ndarray, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_update(self, v: np.ndarray, idx: np.ndarray, dv: np.ndarray) -> float:
        """v[idx] += dv; returns the change in g*(v)."""
        raise NotImplementedError


class L2Regularizer(Regularizer):
    """g(w) = ||w||_2^2 / 2; its conjugate gradient is the identity."""

    kind = "l2"
    weight_dual = "l2"

    def value(self, w):
        return float(w @ w) / 2.0

    def conj_value(self, v):
        return float(v @ v) / 2.0

    def conj_grad(self, v):
        return np.array(v, dtype=np.float64, copy=True)

    def stationarity_residual(self, v, w):
        if v.size == 0:
            return 0.0
        return float(np.max(np.abs(v - w)))

    def solver_state(self, v):
        return _L2State(self, v)

    # per-coordinate g* contribution, vectorized
    def _percoord(self, vs):
        return vs * vs / 2.0

    def _grad_coords(self, vs):
        return np.array(vs, copy=True)


class ElasticNetRegularizer(Regularizer):
    """g(w) = ||w||_2^2 / 2 + t ||w||_1 with t = sigma/lambda.

    nabla g*(v) is coordinate-wise soft thresholding at t, and
    g*(v) = sum_i [|v_i| - t]_+^2 / 2.
    """

    kind = "l1l2"
    weight_dual = "l2"

    def __init__(self, sigma_over_lambda: float):
        if sigma_over_lambda < 0.0:
            raise ValueError("sigma/lambda must be nonnegative")
        self.threshold = float(sigma_over_lambda)

    def value(self, w):
        return float(w @ w) / 2.0 + self.threshold * float(np.sum(np.abs(w)))

    def conj_value(self, v):
        r = np.maximum(np.abs(v) - self.threshold, 0.0)
        return float(r @ r) / 2.0

    def conj_grad(self, v):
        return soft_threshold(np.asarray(v, dtype=np.float64), self.threshold)

    def stationarity_residual(self, v, w):
        t = self.threshold
        active = w != 0.0
        res_active = np.abs(v[active] - w[active] - t * np.sign(w[active]))
        res_zero = np.maximum(np.abs(v[~active]) - t, 0.0)
        pieces = [res_active, res_zero]
        return float(max((p.max() for p in pieces if p.size), default=0.0))

    def solver_state(self, v):
        return _SeparableState(self, v)

    def _percoord(self, vs):
        r = np.maximum(np.abs(vs) - self.threshold, 0.0)
        return r * r / 2.0

    def _grad_coords(self, vs):
        return soft_threshold(vs, self.threshold)


class _SeparableState(_SolverState):
    def __init__(self, reg, v):
        self.reg = reg
        self.total = 0.0
        self.refresh(v)

    def refresh(self, v):
        self.total = float(self.reg._percoord(v).sum())

    def conj_value(self):
        return self.total

    def w_at(self, v, idx):
        return self.reg._grad_coords(v[idx])

    def apply_update(self, v, idx, dv):
        old = v[idx]
        new = old + dv
        delta = float(self.reg._percoord(new).sum() - self.reg._percoord(old).sum())
        v[idx] = new
        self.total += delta
        return delta


class _L2State(_SeparableState):
    # fancy indexing already copies, and the g* change telescopes to dots
    def w_at(self, v, idx):
        return v[idx]

    def apply_update(self, v, idx, dv):
        old = v[idx]
        v[idx] = old + dv
        delta = float(old @ dv) + 0.5 * float(dv @ dv)
        self.total += delta
        return delta


class QNormRegularizer(Regularizer):
    """g(w) = (3 ln d / 2) ||w||_q^2 + t ||w||_1 with q = ln(d)/(ln(d)-1).

    1-strongly convex w.r.t. ||.||_1, so g* is 1-smooth w.r.t. ||.||_inf.
    The conjugate gradient has the closed form

        w_i = sign(v_i) (a * r_i)^(1/(q-1)),   r_i = [|v_i| - t]_+,

    where the single global constant a depends on v only through
    S = sum_i r_i^p with p = q/(q-1) = ln d:

        a = ( S^((q-2)/q) / (3 ln d) )^(q-1).

    Because a is determined by S alone, sparse updates of v keep both
    nabla g*(v) and g*(v) cheap: the solver state maintains S.
    """

    kind = "l1qnorm"
    weight_dual = "linf"

    def __init__(self, dim: int, sigma_over_lambda: float):
        if dim < 3:
            raise DimensionError("the q-norm regularizer requires dimension >= 3")
        if sigma_over_lambda < 0.0:
            raise ValueError("sigma/lambda must be nonnegative")
        self.dim = int(dim)
        self.threshold = float(sigma_over_lambda)
        self.log_d = math.log(dim)
        self.q = self.log_d / (self.log_d - 1.0)
        self.p = self.log_d  # q / (q - 1)
        self.factor = 3.0 * self.log_d

    def value(self, w):
        absw = np.abs(w)
        nq = float(np.sum(absw**self.q)) ** (1.0 / self.q)
        return (self.factor / 2.0) * nq * nq + self.threshold * float(np.sum(absw))

    def conj_value(self, v):
        # Fenchel equality at the maximizer; avoids a second closed form.
        w = self.conj_grad(v)
        return float(w @ v) - self.value(w)

    def _a_from_s(self, s: float) -> float:
        return (s ** ((self.q - 2.0) / self.q) / self.factor) ** (self.q - 1.0)

    def _conj_from_s(self, s: float) -> float:
        if s <= 0.0:
            return 0.0
        a = self._a_from_s(s)
        wq_sq = (a**self.p * s) ** (2.0 / self.q)
        return a ** (self.p - 1.0) * s - (self.factor / 2.0) * wq_sq

    def conj_grad(self, v):
        v = np.asarray(v, dtype=np.float64)
        r = np.maximum(np.abs(v) - self.threshold, 0.0)
        s = float(np.sum(r**self.p))
        if s <= 0.0:
            return np.zeros_like(v)
        a = self._a_from_s(s)
        return np.sign(v) * (a * r) ** (1.0 / (self.q - 1.0))

    def stationarity_residual(self, v, w):
        t = self.threshold
        active = w != 0.0
        res_zero = np.maximum(np.abs(v[~active]) - t, 0.0)
        if np.any(active):
            nq = np.sum(np.abs(w) ** self.q) ** (1.0 / self.q)
            sgn = np.sign(w[active])
            grad = self.factor * sgn * np.abs(w[active]) ** (self.q - 1.0) / nq ** (self.q - 2.0)
            res_active = np.abs(v[active] - grad - t * sgn)
        else:
            res_active = np.zeros(0)
        pieces = [res_active, res_zero]
        return float(max((p.max() for p in pieces if p.size), default=0.0))

    def solver_state(self, v):
        return _QNormState(self, v)


class _QNormState(_SolverState):
    def __init__(self, reg: QNormRegularizer, v):
        self.reg = reg
        self.s = 0.0
        self.refresh(v)

    def refresh(self, v):
        r = np.maximum(np.abs(v) - self.reg.threshold, 0.0)
        self.s = float(np.sum(r**self.reg.p))

    def conj_value(self):
        return self.reg._conj_from_s(self.s)

    def w_at(self, v, idx):
        reg = self.reg
        vs = v[idx]
        r = np.maximum(np.abs(vs) - reg.threshold, 0.0)
        if self.s <= 0.0:
            return np.zeros_like(vs)
        a = reg._a_from_s(self.s)
        return np.sign(vs) * (a * r) ** (1.0 / (reg.q - 1.0))

    def apply_update(self, v, idx, dv):
        reg = self.reg
        old = v[idx]
        new = old + dv
        r_old = np.maximum(np.abs(old) - reg.threshold, 0.0)
        r_new = np.maximum(np.abs(new) - reg.threshold, 0.0)
        before = reg._conj_from_s(self.s)
        self.s += float(np.sum(r_new**reg.p) - np.sum(r_old**reg.p))
        if self.s < 0.0:  # rounding dust when the active set empties
            self.s = 0.0
        v[idx] = new
        return reg._conj_from_s(self.s) - before


REGULARIZER_KINDS = ("l2", "l1l2", "l1qnorm")


def make_regularizer(kind: str, sigma_over_lambda: float = 0.0, dim: int | None = None):
    if kind == "l2":
        return L2Regularizer()
    if kind == "l1l2":
        return ElasticNetRegularizer(sigma_over_lambda)
    if kind == "l1qnorm":
        if dim is None:
            raise ValueError("the q-norm regularizer needs the dimension")
        return QNormRegularizer(dim, sigma_over_lambda)
    raise ValueError(f"unknown regularizer kind {kind!r}")
