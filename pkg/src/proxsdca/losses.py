"""Loss families with exact conjugates, subgradients, and constants.

Scalar losses act on a single prediction ``a = x_i @ w`` (labels in {-1,+1}
for the margin losses, real for the squared loss). The multiclass
cost-augmented hinge acts on a score vector of length k.

Each loss exposes:

* ``value(y, a)``          phi(a)
* ``conjugate(y, u)``      phi*(u), returning ``math.inf`` outside the domain
* ``subgradient(y, a)``    one element of the subdifferential at a
* ``gamma``                phi is (1/gamma)-smooth, or None
* ``lipschitz``            global Lipschitz constant, or None

Margin losses are written as h(y*a) for a label-free base h, so their
conjugates satisfy phi*(u) = h*(y*u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedOption

# Absolute slack allowed when checking membership in a conjugate domain.
# Iterates stay inside by construction; this only absorbs rounding dust.
_DOM_TOL = 1e-12
_MC_DOM_TOL = 1e-9

INF = math.inf


class ScalarLoss:
    """Base class for losses of a single real prediction."""

    arity = 1
    gamma: float | None = None
    lipschitz: float | None = None
    name = "scalar"

    def value(self, y: float, a: float) -> float:
        raise NotImplementedError

    def conjugate(self, y: float, u: float) -> float:
        raise NotImplementedError

    def subgradient(self, y: float, a: float) -> float:
        raise NotImplementedError

    def conjugate_domain_radius(self) -> float | None:
        """Radius of the ball outside which the conjugate is infinite."""
        return self.lipschitz

    def exact_step(self, y: float, alpha: float, xtw: float, q: float) -> float:
        """Exact maximizer of -phi*(-(alpha+d)) - xtw*d - q*d^2/2 over d.

        ``q`` is the curvature ||x_i||_2^2 / (lambda n). Only losses with a
        closed-form solution implement this.
        """
        raise UnsupportedOption(f"no closed-form coordinate update for {self.name} loss")

    def sample_dual_point(self, y: float, rng) -> float:
        """A random alpha with -alpha inside the conjugate domain."""
        raise NotImplementedError

    def validate_labels(self, labels: np.ndarray) -> None:
        if not np.all(np.isfinite(labels)):
            raise ValueError("labels must be finite")

    # Vectorized forms used by objective sweeps; must match the scalar paths.

    def value_many(self, labels: np.ndarray, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def conjugate_many(self, labels: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def subgradient_many(self, labels: np.ndarray, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _MarginLoss(ScalarLoss):
    """Common plumbing for losses of the margin b = y*a with labels +-1."""

    def validate_labels(self, labels):
        super().validate_labels(labels)
        if not np.all(np.abs(labels) == 1.0):
            raise ValueError(f"{self.name} loss expects labels in {{-1,+1}}")

    def sample_dual_point(self, y, rng):
        # -alpha must land in the base domain [-1, 0] after label folding.
        return y * float(rng.uniform(0.0, 1.0))


class HingeLoss(_MarginLoss):
    """phi(a) = max(0, 1 - y*a); 1-Lipschitz, not smooth."""

    name = "hinge"
    lipschitz = 1.0

    def value(self, y, a):
        b = y * a
        return 1.0 - b if b < 1.0 else 0.0

    def conjugate(self, y, u):
        v = y * u
        if v < -1.0 - _DOM_TOL or v > _DOM_TOL:
            return INF
        return min(max(v, -1.0), 0.0)

    def subgradient(self, y, a):
        # At the kink b == 1 the flat side is chosen.
        return -y if y * a < 1.0 else 0.0

    def exact_step(self, y, alpha, xtw, q):
        beta = y * alpha
        slack = 1.0 - y * xtw
        if q == 0.0:
            beta_new = 1.0 if slack > 0.0 else (0.0 if slack < 0.0 else beta)
        else:
            beta_new = min(max(beta + slack / q, 0.0), 1.0)
        return y * (beta_new - beta)

    def value_many(self, labels, a):
        return np.maximum(0.0, 1.0 - labels * a)

    def conjugate_many(self, labels, u):
        v = labels * u
        out = np.where((v >= -1.0 - _DOM_TOL) & (v <= _DOM_TOL), np.clip(v, -1.0, 0.0), INF)
        return out

    def subgradient_many(self, labels, a):
        return np.where(labels * a < 1.0, -labels, 0.0)


class SmoothedHingeLoss(_MarginLoss):
    """Hinge with a quadratic cap of width ``gamma`` around the kink.

    phi(a) = 0 for b >= 1, 1 - b - gamma/2 for b <= 1 - gamma, and
    (1-b)^2 / (2 gamma) in between, with b = y*a. Both 1-Lipschitz and
    (1/gamma)-smooth.
    """

    name = "smoothed-hinge"
    lipschitz = 1.0

    def __init__(self, gamma: float = 1.0):
        if not gamma > 0.0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)

    def value(self, y, a):
        b = y * a
        if b >= 1.0:
            return 0.0
        if b <= 1.0 - self.gamma:
            return 1.0 - b - self.gamma / 2.0
        r = 1.0 - b
        return r * r / (2.0 * self.gamma)

    def conjugate(self, y, u):
        v = y * u
        if v < -1.0 - _DOM_TOL or v > _DOM_TOL:
            return INF
        v = min(max(v, -1.0), 0.0)
        return v + self.gamma * v * v / 2.0

    def subgradient(self, y, a):
        b = y * a
        if b >= 1.0:
            return 0.0
        if b <= 1.0 - self.gamma:
            return -y
        return y * (b - 1.0) / self.gamma

    def exact_step(self, y, alpha, xtw, q):
        beta = y * alpha
        beta_new = (1.0 - y * xtw + q * beta) / (self.gamma + q)
        beta_new = min(max(beta_new, 0.0), 1.0)
        return y * (beta_new - beta)

    def value_many(self, labels, a):
        b = labels * a
        r = 1.0 - b
        return np.where(
            b >= 1.0,
            0.0,
            np.where(b <= 1.0 - self.gamma, r - self.gamma / 2.0, r * r / (2.0 * self.gamma)),
        )

    def conjugate_many(self, labels, u):
        v = labels * u
        ok = (v >= -1.0 - _DOM_TOL) & (v <= _DOM_TOL)
        vc = np.clip(v, -1.0, 0.0)
        return np.where(ok, vc + self.gamma * vc * vc / 2.0, INF)

    def subgradient_many(self, labels, a):
        b = labels * a
        return np.where(
            b >= 1.0, 0.0, np.where(b <= 1.0 - self.gamma, -labels, labels * (b - 1.0) / self.gamma)
        )


class LogisticLoss(_MarginLoss):
    """phi(a) = log(1 + exp(-y*a)); 1-Lipschitz and (1/4)-smooth."""

    name = "logistic"
    gamma = 4.0
    lipschitz = 1.0

    def value(self, y, a):
        b = y * a
        if b >= 0.0:
            return math.log1p(math.exp(-b))
        return -b + math.log1p(math.exp(b))

    def conjugate(self, y, u):
        v = y * u
        if v < -1.0 - _DOM_TOL or v > _DOM_TOL:
            return INF
        v = min(max(v, -1.0), 0.0)
        # (-v) log(-v) + (1+v) log(1+v), with 0 log 0 = 0 at both endpoints
        t = -v
        out = 0.0
        if t > 0.0:
            out += t * math.log(t)
        if t < 1.0:
            out += (1.0 - t) * math.log(1.0 - t)
        return out

    def subgradient(self, y, a):
        b = y * a
        if b >= 0.0:
            e = math.exp(-b)
            return -y * e / (1.0 + e)
        return -y / (1.0 + math.exp(b))

    def value_many(self, labels, a):
        b = labels * a
        return np.where(b >= 0.0, np.log1p(np.exp(-np.abs(b))), -b + np.log1p(np.exp(-np.abs(b))))

    def conjugate_many(self, labels, u):
        v = labels * u
        ok = (v >= -1.0 - _DOM_TOL) & (v <= _DOM_TOL)
        t = np.clip(-v, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(t > 0.0, t * np.log(t), 0.0) + np.where(
                t < 1.0, (1.0 - t) * np.log(1.0 - t), 0.0
            )
        return np.where(ok, ent, INF)

    def subgradient_many(self, labels, a):
        b = labels * a
        e = np.exp(-np.abs(b))
        return np.where(b >= 0.0, -labels * e / (1.0 + e), -labels / (1.0 + e))


class SquaredLoss(ScalarLoss):
    """phi(a) = (a - y)^2 / 2 with real labels; 1-smooth, not Lipschitz."""

    name = "squared"
    gamma = 1.0

    def value(self, y, a):
        r = a - y
        return r * r / 2.0

    def conjugate(self, y, u):
        return u * u / 2.0 + u * y

    def subgradient(self, y, a):
        return a - y

    def exact_step(self, y, alpha, xtw, q):
        return (y - xtw - alpha) / (1.0 + q)

    def sample_dual_point(self, y, rng):
        return float(rng.normal())

    def value_many(self, labels, a):
        r = a - labels
        return r * r / 2.0

    def conjugate_many(self, labels, u):
        return u * u / 2.0 + u * labels

    def subgradient_many(self, labels, a):
        return a - labels


@dataclass(frozen=True)
class CostMatrix:
    """Nonnegative prediction costs delta(pred, truth) with a zero diagonal."""

    costs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=np.float64)
        object.__setattr__(self, "costs", c)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("cost matrix must be square")
        if not np.all(np.isfinite(c)) or np.any(c < 0.0):
            raise ValueError("costs must be finite and nonnegative")
        if np.any(np.diag(c) != 0.0):
            raise ValueError("cost of a correct prediction must be zero")

    @property
    def k(self) -> int:
        return int(self.costs.shape[0])

    def column(self, truth: int) -> np.ndarray:
        """Costs of predicting each class when the truth is ``truth``."""
        return self.costs[:, truth]

    @staticmethod
    def zero_one(k: int) -> "CostMatrix":
        return CostMatrix(1.0 - np.eye(k))


class MulticlassHingeLoss:
    """Cost-augmented multiclass hinge phi(v) = max_j (delta(j,y) - v_y + v_j).

    2-Lipschitz w.r.t. the sup norm; its conjugate is the linear function
    -sum_j beta_j delta(j,y) on the polytope {beta : sum_j beta_j = 0,
    beta_j >= 0 for j != y, sum_{j != y} beta_j <= 1} and infinite elsewhere.
    (At a vertex beta = e_j - e_y the value is -delta(j,y), which is exactly
    the Fenchel-Young equality value for the subgradient at the decoded j.)
    """

    name = "multiclass-hinge"
    gamma = None
    lipschitz = 2.0

    def __init__(self, cost: CostMatrix):
        self.cost = cost
        self.arity = cost.k

    def _augmented(self, y: int, a: np.ndarray) -> np.ndarray:
        return self.cost.column(y) - a[y] + a

    def value(self, y: int, a: np.ndarray) -> float:
        return float(np.max(self._augmented(y, a)))

    def decode(self, y: int, a: np.ndarray) -> tuple[int, float]:
        """Loss-augmented argmax (smallest index on ties) and its value."""
        vals = self._augmented(y, a)
        j = int(np.argmax(vals))
        return j, float(vals[j])

    def subgradient(self, y: int, a: np.ndarray) -> np.ndarray:
        j, _ = self.decode(y, a)
        g = np.zeros(self.arity)
        g[j] += 1.0
        g[y] -= 1.0
        return g

    def conjugate(self, y: int, beta: np.ndarray) -> float:
        beta = np.asarray(beta, dtype=np.float64)
        off = np.delete(beta, y)
        mass = float(np.sum(off))
        if abs(float(np.sum(beta))) > _MC_DOM_TOL:
            return INF
        if off.size and float(np.min(off)) < -_MC_DOM_TOL:
            return INF
        if mass > 1.0 + _MC_DOM_TOL:
            return INF
        return -float(beta @ self.cost.column(y))

    def conjugate_domain_radius(self) -> float:
        return self.lipschitz

    def sample_dual_point(self, y: int, rng) -> np.ndarray:
        # Random convex combination of the vertices e_y - e_j of the polytope.
        k = self.arity
        r = rng.uniform(size=k)
        r[y] = 0.0
        total = float(np.sum(r))
        mass = float(rng.uniform(0.0, 1.0))
        c = r * (mass / total) if total > 0.0 else np.zeros(k)
        alpha = -c
        alpha[y] = float(np.sum(c))
        return alpha

    def validate_labels(self, labels: np.ndarray) -> None:
        lab = np.asarray(labels)
        if lab.dtype.kind not in "iu":
            raise ValueError("multiclass labels must be integers")
        if np.any(lab < 0) or np.any(lab >= self.arity):
            raise ValueError(f"labels must lie in [0, {self.arity})")


SCALAR_LOSSES = ("hinge", "smoothed-hinge", "logistic", "squared")


def make_loss(name: str, gamma: float = 1.0):
    """Construct a scalar loss by CLI name."""
    if name == "hinge":
        return HingeLoss()
    if name == "smoothed-hinge":
        return SmoothedHingeLoss(gamma)
    if name == "logistic":
        return LogisticLoss()
    if name == "squared":
        return SquaredLoss()
    raise ValueError(f"unknown loss {name!r}")
