"""Problem definition and exact primal/dual objective evaluation.

The primal objective over linear predictors is

    P(w) = (1/n) sum_i phi_i(X_i^T w) + lambda * g(w)

and its dual, with one dual vector per example, is

    D(alpha) = (1/n) sum_i -phi_i*(-alpha_i) - lambda * g*(v(alpha)),
    v(alpha) = (lambda n)^(-1) sum_i X_i alpha_i,   w(alpha) = nabla g*(v).

Weak duality makes P(w(alpha)) - D(alpha) a computable certificate that
upper-bounds the primal sub-optimality of w(alpha).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, TraceError
from .sparsevec import ExampleBlock, NormPair, SparseVec, op_norm

GAP_REL_TOL = 1e-9


@dataclass(frozen=True)
class Dataset:
    """n feature blocks with matching dimensions plus per-example labels."""

    examples: tuple[ExampleBlock, ...]
    labels: np.ndarray

    def __post_init__(self):
        examples = tuple(self.examples)
        labels = np.asarray(self.labels)
        object.__setattr__(self, "examples", examples)
        object.__setattr__(self, "labels", labels)
        if not examples:
            raise ValueError("a dataset needs at least one example")
        if labels.shape != (len(examples),):
            raise ValueError("need exactly one label per example")
        d = examples[0].dim
        k = examples[0].width
        for b in examples:
            if b.dim != d or b.width != k:
                raise ValueError("all blocks must share dim and width")

    @property
    def n(self) -> int:
        return len(self.examples)

    @property
    def d(self) -> int:
        return self.examples[0].dim

    @property
    def k(self) -> int:
        return self.examples[0].width

    @staticmethod
    def from_dense(X: np.ndarray, labels) -> "Dataset":
        X = np.asarray(X, dtype=np.float64)
        blocks = []
        for row in X:
            idx = np.nonzero(row)[0]
            blocks.append(ExampleBlock((SparseVec(X.shape[1], idx, row[idx]),)))
        return Dataset(tuple(blocks), np.asarray(labels))

    @staticmethod
    def from_rows(d: int, rows, labels) -> "Dataset":
        """rows: iterable of (indices, values) pairs for single-column blocks."""
        blocks = tuple(
            ExampleBlock((SparseVec(d, np.asarray(i), np.asarray(v)),)) for i, v in rows
        )
        return Dataset(blocks, np.asarray(labels))


class Problem:
    """Immutable bundle of data, loss, regularizer, and lambda.

    Construction validates the norm machinery, computes per-example operator
    norms and their maximum R, and checks the objective normalization
    (mean phi_i(0) <= 1 and phi_i >= 0) under which the iteration schedules
    are calibrated; a failed check is a warning, not an error.
    """

    def __init__(self, dataset: Dataset, loss, regularizer, lam: float, R: float | None = None):
        if not lam > 0.0:
            raise ValueError("lambda must be positive")
        if loss.arity != dataset.k:
            raise ValueError(
                f"loss arity {loss.arity} does not match block width {dataset.k}"
            )
        loss.validate_labels(dataset.labels)

        self.dataset = dataset
        self.loss = loss
        self.regularizer = regularizer
        self.lam = float(lam)

        loss_dual = "abs" if dataset.k == 1 else "l1"
        loss_primal = "abs" if dataset.k == 1 else "linf"
        self.norms = NormPair(loss_primal, loss_dual, regularizer.weight_dual)

        self.op_norms = np.array([op_norm(b, self.norms) for b in dataset.examples])
        max_norm = float(np.max(self.op_norms)) if dataset.n else 0.0
        if R is None:
            self.R = max_norm
        else:
            if R < max_norm * (1.0 - 1e-12):
                raise ValueError(
                    f"R={R} is below the observed operator-norm bound {max_norm}"
                )
            self.R = float(R)

        self._build_flat()
        self._check_normalization()

    # -- flat storage for the scalar (k = 1) fast paths --------------------

    def _build_flat(self):
        ds = self.dataset
        if ds.k != 1:
            self.X = None
            return
        indptr = np.zeros(ds.n + 1, dtype=np.int64)
        chunks_i, chunks_v = [], []
        for j, b in enumerate(ds.examples):
            col = b.columns[0]
            indptr[j + 1] = indptr[j] + col.nnz
            chunks_i.append(col.indices)
            chunks_v.append(col.values)
        indices = np.concatenate(chunks_i) if chunks_i else np.zeros(0, dtype=np.int64)
        data = np.concatenate(chunks_v) if chunks_v else np.zeros(0)
        self.indptr = indptr
        self.indices = indices
        self.data = data
        self.X = sp.csr_matrix((data, indices, indptr), shape=(ds.n, ds.d))
        # squared weight-space norms ||x_i||_{D'}^2 used by the step rules
        if self.norms.weight_dual == "l2":
            self.weight_norms_sq = np.asarray(self.X.multiply(self.X).sum(axis=1)).ravel()
        else:
            self.weight_norms_sq = self.op_norms**2

    def _check_normalization(self):
        ds = self.dataset
        if ds.k == 1:
            at_zero = self.loss.value_many(ds.labels, np.zeros(ds.n))
            mean0 = float(np.mean(at_zero))
        else:
            mean0 = float(
                np.mean([self.loss.value(int(y), np.zeros(ds.k)) for y in ds.labels])
            )
        self.normalization_ok = mean0 <= 1.0 + 1e-12
        if not self.normalization_ok:
            warnings.warn(
                f"mean loss at w=0 is {mean0:.6g} > 1; iteration schedules are "
                "calibrated for normalized objectives and may be unreliable",
                UserWarning,
                stacklevel=3,
            )

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d

    def scores_all(self, w: np.ndarray) -> np.ndarray:
        """X_i^T w for every example; shape (n,) for k=1, else (k, n)."""
        if self.X is not None:
            return self.X @ w
        return np.column_stack([b.scores(w) for b in self.dataset.examples])

    def aggregate(self, alpha: np.ndarray) -> np.ndarray:
        """v(alpha) = (lambda n)^(-1) sum_i X_i alpha_i."""
        alpha = _as_matrix(alpha, self.dataset.k)
        if self.X is not None:
            v = self.X.T @ alpha[0]
        else:
            v = np.zeros(self.d)
            for i, b in enumerate(self.dataset.examples):
                b.combine_into(alpha[:, i], v)
        return v / (self.lam * self.n)


def _as_matrix(alpha, k: int) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim == 1:
        if k != 1:
            raise ValueError("alpha must be a (k, n) matrix for k > 1")
        alpha = alpha[None, :]
    if alpha.ndim != 2 or alpha.shape[0] != k:
        raise ValueError(f"alpha must have shape ({k}, n)")
    return alpha


@dataclass
class DualState:
    """Dual matrix alpha with its maintained aggregate v(alpha)."""

    alpha: np.ndarray
    v: np.ndarray
    epoch: int = 0

    @staticmethod
    def zeros(problem: Problem) -> "DualState":
        return DualState(np.zeros((problem.dataset.k, problem.n)), np.zeros(problem.d))

    @staticmethod
    def from_alpha(problem: Problem, alpha) -> "DualState":
        alpha = _as_matrix(alpha, problem.dataset.k)
        return DualState(alpha.copy(), problem.aggregate(alpha))

    def w(self, problem: Problem) -> np.ndarray:
        return problem.regularizer.conj_grad(self.v)


def primal_objective(problem: Problem, w: np.ndarray) -> float:
    """(1/n) sum_i phi_i(X_i^T w) + lambda g(w)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (problem.d,):
        raise ValueError(f"w must have length {problem.d}")
    ds = problem.dataset
    if ds.k == 1:
        scores = problem.scores_all(w)
        loss_term = float(np.mean(problem.loss.value_many(ds.labels, scores)))
    else:
        loss_term = float(
            np.mean([problem.loss.value(int(y), b.scores(w)) for y, b in zip(ds.labels, ds.examples)])
        )
    return loss_term + problem.lam * problem.regularizer.value(w)


def dual_objective(problem: Problem, alpha) -> float:
    """(1/n) sum_i -phi_i*(-alpha_i) - lambda g*(v(alpha)).

    Raises DomainError when any -alpha_i falls outside the domain of the
    corresponding conjugate (an infeasible dual point).
    """
    alpha = _as_matrix(alpha, problem.dataset.k)
    conj = _conjugates(problem, alpha)
    v = problem.aggregate(alpha)
    return -float(np.mean(conj)) - problem.lam * problem.regularizer.conj_value(v)


def _conjugates(problem: Problem, alpha: np.ndarray) -> np.ndarray:
    ds = problem.dataset
    if ds.k == 1:
        conj = problem.loss.conjugate_many(ds.labels, -alpha[0])
    else:
        conj = np.array(
            [problem.loss.conjugate(int(y), -alpha[:, i]) for i, y in enumerate(ds.labels)]
        )
    if np.any(np.isinf(conj)):
        bad = int(np.flatnonzero(np.isinf(conj))[0])
        raise DomainError(f"-alpha_{bad} lies outside the conjugate domain")
    return conj


def dual_to_primal(problem: Problem, alpha) -> tuple[np.ndarray, np.ndarray]:
    """Map a dual matrix to (v, w) with w = nabla g*(v)."""
    alpha = _as_matrix(alpha, problem.dataset.k)
    v = problem.aggregate(alpha)
    return v, problem.regularizer.conj_grad(v)


@dataclass(frozen=True)
class GapReport:
    primal: float
    dual: float
    gap: float
    per_example: np.ndarray


def duality_gap(problem: Problem, state) -> GapReport:
    """Duality gap of a state, cross-checked against its Fenchel decomposition.

    The gap P(w) - D(alpha) equals (1/n) sum_i [phi_i(X_i^T w) +
    phi_i*(-alpha_i) + w^T X_i alpha_i] whenever w = nabla g*(v(alpha));
    both are computed and must agree to 1e-9 relative.
    """
    if isinstance(state, DualState):
        alpha = state.alpha
    else:
        alpha = state
    alpha = _as_matrix(alpha, problem.dataset.k)
    v = problem.aggregate(alpha)
    w = problem.regularizer.conj_grad(v)

    ds = problem.dataset
    conj = _conjugates(problem, alpha)
    if ds.k == 1:
        scores = problem.scores_all(w)
        values = problem.loss.value_many(ds.labels, scores)
        bilinear = alpha[0] * scores
    else:
        scores = [b.scores(w) for b in ds.examples]
        values = np.array([problem.loss.value(int(y), s) for y, s in zip(ds.labels, scores)])
        bilinear = np.array([float(alpha[:, i] @ s) for i, s in enumerate(scores)])

    per_example = values + conj + bilinear
    primal = float(np.mean(values)) + problem.lam * problem.regularizer.value(w)
    dual = -float(np.mean(conj)) - problem.lam * problem.regularizer.conj_value(v)
    gap = primal - dual

    decomposed = float(np.mean(per_example))
    scale = max(1.0, abs(primal), abs(dual))
    if abs(gap - decomposed) > GAP_REL_TOL * scale:
        raise TraceError(
            f"gap decomposition mismatch: objectives give {gap!r}, "
            f"per-example sum gives {decomposed!r}"
        )
    return GapReport(primal, dual, gap, per_example)


@dataclass(frozen=True)
class Checkpoint:
    t: int
    primal: float
    dual: float
    gap: float
    seconds: float


@dataclass
class RunTrace:
    """Per-checkpoint progress record of a solver run."""

    checkpoints: list[Checkpoint] = field(default_factory=list)

    def append(self, cp: Checkpoint) -> None:
        self.checkpoints.append(cp)

    def final(self) -> Checkpoint:
        return self.checkpoints[-1]

    def __iter__(self):
        return iter(self.checkpoints)

    def __len__(self):
        return len(self.checkpoints)
