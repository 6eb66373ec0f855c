"""File formats: svmlight datasets, cost matrices, model files, trace CSVs.

The model file is a line-oriented, version-tagged text format whose float
payloads are written with ``repr`` so they round-trip bit-exactly. Non-
structured models carry the dual matrix so a gap report can recompute the
dual value from scratch; structured models are dual-free and store the
maintained dual decomposition instead.
"""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .losses import CostMatrix
from .problem import Dataset, RunTrace
from .sparsevec import ExampleBlock, SparseVec

MODEL_MAGIC = "proxsdca-model v1"


def parse_svmlight(source, d: int | None = None, multiclass: bool = False) -> Dataset:
    """Read 'label idx:val ...' lines with 1-based, strictly increasing indices.

    ``#`` starts a comment. Labels are floats in binary mode and 1-based
    integers in multiclass mode (stored 0-based). The dimension is the
    largest seen index unless ``d`` is given.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rt") as fh:
            return parse_svmlight(fh, d=d, multiclass=multiclass)

    labels = []
    rows = []
    max_index = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label_tok = tokens[0]
        try:
            if multiclass:
                label = int(label_tok)
                if label < 1:
                    raise ValueError
            else:
                label = float(label_tok)
                if not np.isfinite(label):
                    raise ValueError
        except ValueError:
            raise ParseError(f"bad label {label_tok!r}", line=lineno) from None

        idx = []
        val = []
        prev = 0
        for tok in tokens[1:]:
            try:
                pos_s, val_s = tok.split(":", 1)
                pos = int(pos_s)
                value = float(val_s)
            except ValueError:
                raise ParseError(f"bad feature token {tok!r}", line=lineno) from None
            if pos < 1:
                raise ParseError(f"index {pos} is not 1-based", line=lineno)
            if pos <= prev:
                raise ParseError(
                    f"indices must be strictly increasing ({prev} then {pos})", line=lineno
                )
            if not np.isfinite(value):
                raise ParseError(f"non-finite value in {tok!r}", line=lineno)
            prev = pos
            if value != 0.0:
                idx.append(pos - 1)
                val.append(value)
        if prev > max_index:
            max_index = prev
        labels.append(label)
        rows.append((np.array(idx, dtype=np.int64), np.array(val)))

    if not rows:
        raise ParseError("no examples found")
    if d is None:
        if max_index == 0:
            raise ParseError("cannot infer the dimension from featureless data")
        d = max_index
    elif d < max_index:
        raise ParseError(f"explicit dimension {d} is below the largest index {max_index}")

    if multiclass:
        label_arr = np.array(labels, dtype=np.int64) - 1
    else:
        label_arr = np.array(labels, dtype=np.float64)
    blocks = tuple(
        ExampleBlock((SparseVec(d, i, v),)) for i, v in rows
    )
    return Dataset(blocks, label_arr)


def write_svmlight(path, dataset: Dataset, multiclass: bool = False) -> None:
    """Inverse of ``parse_svmlight`` for width-1 datasets (1-based indices)."""
    if dataset.k != 1:
        raise ValueError("svmlight serialization handles width-1 datasets only")
    buf = io.StringIO()
    for label, block in zip(dataset.labels, dataset.examples):
        col = block.columns[0]
        lab = f"{int(label) + 1}" if multiclass else repr(float(label))
        feats = " ".join(f"{i + 1}:{float(v)!r}" for i, v in zip(col.indices, col.values))
        buf.write(lab + (" " + feats if feats else "") + "\n")
    _atomic_write(path, buf.getvalue())


def read_cost_matrix(path) -> CostMatrix:
    """k lines of k reals; entry (row r, column c) is the cost of predicting
    class r+1 when the truth is c+1."""
    rows = []
    with open(path, "rt") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError:
                raise ParseError("bad cost entry", line=lineno) from None
    if not rows:
        raise ParseError("empty cost matrix")
    k = len(rows)
    if any(len(r) != k for r in rows):
        raise ParseError("cost matrix must be square")
    return CostMatrix(np.array(rows))


def _atomic_write(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "wt") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace_csv(path, trace: RunTrace) -> None:
    """Columns t,P,D,gap,seconds; all but seconds reproduce bit-exactly."""
    buf = io.StringIO()
    buf.write("t,P,D,gap,seconds\n")
    for cp in trace:
        buf.write(
            f"{cp.t},{float(cp.primal)!r},{float(cp.dual)!r},{float(cp.gap)!r},"
            f"{cp.seconds:.6f}\n"
        )
    _atomic_write(path, buf.getvalue())


@dataclass
class ModelFile:
    """On-disk model: header metadata, weights, optional dual matrix, finals."""

    d: int
    k: int
    loss: str
    loss_gamma: float | None
    regularizer: str
    threshold: float
    lam: float
    sigma: float | None
    seed: int
    rule: int
    task: str
    iterations: int
    final_primal: float
    final_dual: float
    final_gap: float
    w: np.ndarray
    alpha: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def alpha_free(self) -> bool:
        return self.alpha is None


def save_model(path, model: ModelFile) -> None:
    buf = io.StringIO()
    buf.write(MODEL_MAGIC + "\n")
    fields = [
        ("d", model.d),
        ("k", model.k),
        ("loss", model.loss),
        ("loss_gamma", "-" if model.loss_gamma is None else repr(float(model.loss_gamma))),
        ("regularizer", model.regularizer),
        ("threshold", repr(float(model.threshold))),
        ("lambda", repr(float(model.lam))),
        ("sigma", "-" if model.sigma is None else repr(float(model.sigma))),
        ("seed", model.seed),
        ("rule", model.rule),
        ("task", model.task),
        ("iterations", model.iterations),
        ("final_primal", repr(float(model.final_primal))),
        ("final_dual", repr(float(model.final_dual))),
        ("final_gap", repr(float(model.final_gap))),
    ]
    for key, value in fields:
        buf.write(f"{key} {value}\n")
    nz = np.nonzero(model.w)[0]
    buf.write(f"w {model.w.size} {nz.size}\n")
    for i in nz:
        buf.write(f"{i} {float(model.w[i])!r}\n")
    if model.alpha is not None:
        a = model.alpha
        buf.write(f"alpha {a.shape[0]} {a.shape[1]}\n")
        for row in a:
            buf.write(" ".join(repr(float(x)) for x in row) + "\n")
    buf.write("end\n")
    _atomic_write(path, buf.getvalue())


def load_model(path) -> ModelFile:
    with open(path, "rt") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ParseError(f"not a model file (expected header {MODEL_MAGIC!r})")
    header: dict[str, str] = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("w "):
        key, _, value = lines[pos].partition(" ")
        header[key] = value
        pos += 1
    if pos >= len(lines):
        raise ParseError("model file has no weight section")

    try:
        _, d_str, nnz_str = lines[pos].split()
        size, nnz = int(d_str), int(nnz_str)
        pos += 1
        w = np.zeros(size)
        for _ in range(nnz):
            i_str, v_str = lines[pos].split()
            w[int(i_str)] = float(v_str)
            pos += 1
        alpha = None
        if pos < len(lines) and lines[pos].startswith("alpha "):
            _, k_str, n_str = lines[pos].split()
            k, n = int(k_str), int(n_str)
            pos += 1
            alpha = np.empty((k, n))
            for r in range(k):
                alpha[r] = np.fromstring(lines[pos], sep=" ")
                if alpha[r].size != n:
                    raise ParseError(f"dual row {r} has the wrong length")
                pos += 1
        if pos >= len(lines) or lines[pos] != "end":
            raise ParseError("model file is truncated (missing end marker)")

        def _opt_float(key):
            v = header[key]
            return None if v == "-" else float(v)

        return ModelFile(
            d=int(header["d"]),
            k=int(header["k"]),
            loss=header["loss"],
            loss_gamma=_opt_float("loss_gamma"),
            regularizer=header["regularizer"],
            threshold=float(header["threshold"]),
            lam=float(header["lambda"]),
            sigma=_opt_float("sigma"),
            seed=int(header["seed"]),
            rule=int(header["rule"]),
            task=header["task"],
            iterations=int(header["iterations"]),
            final_primal=float(header["final_primal"]),
            final_dual=float(header["final_dual"]),
            final_gap=float(header["final_gap"]),
            w=w,
            alpha=alpha,
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise ParseError(f"malformed model file: {exc}") from None
