import numpy as np
import pytest

from proxsdca import Dataset


def sparse_gaussian_dataset(n, d, nnz, rng, labels="sign", normalize="l2"):
    """Random sparse rows with +-1 labels from a planted sparse direction."""
    truth = np.zeros(d)
    support = rng.choice(d, size=min(10, d), replace=False)
    truth[support] = rng.normal(size=support.size)
    rows = []
    raw_labels = np.empty(n)
    for i in range(n):
        k = min(nnz, d)
        idx = np.sort(rng.choice(d, size=k, replace=False))
        val = rng.normal(size=k)
        if normalize == "l2":
            norm = np.linalg.norm(val)
        elif normalize == "linf":
            norm = np.max(np.abs(val))
        else:
            norm = 1.0
        if norm > 0:
            val = val / norm
        rows.append((idx, val))
        margin = float(val @ truth[idx])
        if labels == "sign":
            raw_labels[i] = 1.0 if margin + 0.1 * rng.normal() >= 0 else -1.0
        else:
            # keep mean loss at zero within the normalized range
            raw_labels[i] = float(np.clip(margin + 0.1 * rng.normal(), -1.2, 1.2))
    return Dataset.from_rows(d, rows, raw_labels)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
