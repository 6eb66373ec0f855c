"""Sparse vectors, per-example feature blocks, and operator norms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedNormPair

_DUAL_OF = {"abs": "abs", "l1": "linf", "linf": "l1", "l2": "l2"}


@dataclass(frozen=True)
class SparseVec:
    """Immutable sparse vector with strictly increasing 0-based indices.

    Stored zeros are rejected so that nnz counts and norms are exact.
    """

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if idx.ndim != 1 or val.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError("indices out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
        if np.any(~np.isfinite(val)):
            raise ValueError("values must be finite")
        if np.any(val == 0.0):
            raise ValueError("stored zero values are not allowed")

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def dot(self, w: np.ndarray) -> float:
        """Inner product with a dense vector."""
        if self.indices.size == 0:
            return 0.0
        return float(self.values @ w[self.indices])

    def add_into(self, out: np.ndarray, coeff: float = 1.0) -> None:
        """out += coeff * self, in place."""
        if self.indices.size:
            out[self.indices] += coeff * self.values

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        self.add_into(out)
        return out

    def norm2(self) -> float:
        return float(np.sqrt(np.sum(self.values**2)))

    def norm_inf(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.abs(self.values)))


def sparse_from_dense(x, tol: float = 0.0) -> SparseVec:
    x = np.asarray(x, dtype=np.float64)
    idx = np.nonzero(np.abs(x) > tol)[0]
    return SparseVec(x.size, idx, x[idx])


@dataclass(frozen=True)
class ExampleBlock:
    """One example's feature matrix, held as k sparse columns of shared dim."""

    columns: tuple[SparseVec, ...]

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        if not cols:
            raise ValueError("a block needs at least one column")
        dims = {c.dim for c in cols}
        if len(dims) != 1:
            raise ValueError("all columns must share the same dim")

    @property
    def dim(self) -> int:
        return self.columns[0].dim

    @property
    def width(self) -> int:
        return len(self.columns)

    def scores(self, w: np.ndarray) -> np.ndarray:
        """Column-wise inner products with w (the k loss arguments)."""
        return np.array([c.dot(w) for c in self.columns])

    def combine_into(self, coeffs, out: np.ndarray, scale: float = 1.0) -> None:
        """out += scale * sum_j coeffs[j] * column_j, in place."""
        for c, col in zip(coeffs, self.columns):
            if c != 0.0:
                col.add_into(out, scale * c)

    def combine(self, coeffs) -> np.ndarray:
        out = np.zeros(self.dim)
        self.combine_into(coeffs, out)
        return out


@dataclass(frozen=True)
class NormPair:
    """The three norms a run is certified against.

    ``primal``/``dual`` are the loss-argument norm and its dual (the norm in
    which conjugates of Lipschitz losses have bounded domain); ``weight_dual``
    is the norm measuring feature-space steps ``X_i @ delta_alpha``.
    """

    primal: str
    dual: str
    weight_dual: str

    def __post_init__(self):
        for name in (self.primal, self.dual, self.weight_dual):
            if name not in _DUAL_OF:
                raise ValueError(f"unknown norm id {name!r}")
        if _DUAL_OF[self.primal] != self.dual:
            raise ValueError(
                f"dual norm {self.dual!r} is not the dual of {self.primal!r}"
            )


def op_norm(block: ExampleBlock, norms: NormPair) -> float:
    """Operator norm sup_u ||X u||_weight_dual / ||u||_dual of one block.

    Exact closed forms are implemented for the three supported pairs:

    * dual = abs, weight = l2  ->  ||x||_2 of the single column
    * dual = abs, weight = linf -> ||x||_inf of the single column
    * dual = l1, weight = l2   ->  max_j ||column_j||_2
    """
    key = (norms.dual, norms.weight_dual)
    if key == ("abs", "l2"):
        _require_single_column(block, norms)
        return block.columns[0].norm2()
    if key == ("abs", "linf"):
        _require_single_column(block, norms)
        return block.columns[0].norm_inf()
    if key == ("l1", "l2"):
        return max(c.norm2() for c in block.columns)
    raise UnsupportedNormPair(f"no operator-norm rule for (dual={key[0]}, weight={key[1]})")


def _require_single_column(block: ExampleBlock, norms: NormPair) -> None:
    if block.width != 1:
        raise UnsupportedNormPair(
            f"norm pair (dual={norms.dual}, weight={norms.weight_dual}) "
            "applies to single-column blocks only"
        )
