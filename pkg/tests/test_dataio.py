import io

import numpy as np
import pytest

from proxsdca import (
    ModelFile,
    ParseError,
    RunTrace,
    load_model,
    parse_svmlight,
    read_cost_matrix,
    save_model,
    write_trace_csv,
)
from proxsdca.dataio import write_svmlight
from proxsdca.problem import Checkpoint
from conftest import sparse_gaussian_dataset


def test_parse_basic_line():
    ds = parse_svmlight(io.StringIO("+1 3:0.5 7:1.25\n"))
    assert ds.d == 7 and ds.n == 1
    col = ds.examples[0].columns[0]
    assert np.array_equal(col.indices, [2, 6])
    assert np.array_equal(col.values, [0.5, 1.25])
    assert ds.labels[0] == 1.0


def test_parse_rejects_non_increasing_indices():
    with pytest.raises(ParseError) as exc:
        parse_svmlight(io.StringIO("1 5:2 3:1\n"))
    assert exc.value.line == 1


def test_parse_empty_feature_list_is_valid():
    ds = parse_svmlight(io.StringIO("-1\n+1 2:1.0\n"))
    assert ds.n == 2
    assert ds.examples[0].columns[0].nnz == 0


def test_parse_comments_and_blank_lines():
    text = "# header\n+1 1:2.0  # trailing\n\n-1 2:0.5\n"
    ds = parse_svmlight(io.StringIO(text))
    assert ds.n == 2 and ds.d == 2


def test_parse_error_cases():
    with pytest.raises(ParseError):
        parse_svmlight(io.StringIO("abc 1:2\n"))
    with pytest.raises(ParseError):
        parse_svmlight(io.StringIO("1 0:2\n"))  # not 1-based
    with pytest.raises(ParseError):
        parse_svmlight(io.StringIO("1 1:nanx\n"))
    with pytest.raises(ParseError):
        parse_svmlight(io.StringIO("1 1:inf\n"))
    with pytest.raises(ParseError):
        parse_svmlight(io.StringIO(""))
    with pytest.raises(ParseError):
        parse_svmlight(io.StringIO("1 4:1\n"), d=3)
    with pytest.raises(ParseError):
        parse_svmlight(io.StringIO("0 1:1\n"), multiclass=True)


def test_parse_multiclass_labels_to_zero_based():
    ds = parse_svmlight(io.StringIO("3 1:1\n1 2:1\n"), multiclass=True)
    assert np.array_equal(ds.labels, [2, 0])


def test_parse_explicit_dimension():
    ds = parse_svmlight(io.StringIO("1 2:1\n"), d=10)
    assert ds.d == 10


def test_svmlight_round_trip(tmp_path, rng):
    ds = sparse_gaussian_dataset(25, 9, 4, rng)
    path = tmp_path / "data.txt"
    write_svmlight(path, ds)
    back = parse_svmlight(path, d=9)
    assert back.n == ds.n and back.d == ds.d
    assert np.array_equal(back.labels, ds.labels)
    for a, b in zip(ds.examples, back.examples):
        assert np.array_equal(a.columns[0].indices, b.columns[0].indices)
        assert np.array_equal(a.columns[0].values, b.columns[0].values)


def test_cost_matrix_io(tmp_path):
    path = tmp_path / "cost.txt"
    path.write_text("0 1.5\n0.5 0\n")
    cost = read_cost_matrix(path)
    assert cost.k == 2
    assert cost.costs[0, 1] == 1.5
    bad = tmp_path / "bad.txt"
    bad.write_text("0 1\n1\n")
    with pytest.raises(ParseError):
        read_cost_matrix(bad)


def _model(rng, with_alpha=True):
    w = rng.normal(size=7)
    w[rng.uniform(size=7) < 0.4] = 0.0
    alpha = rng.normal(size=(1, 5)) if with_alpha else None
    return ModelFile(
        d=7, k=1, loss="smoothed-hinge", loss_gamma=1.0, regularizer="l1l2",
        threshold=12.5, lam=1e-4, sigma=0.05, seed=9, rule=5, task="l1l2",
        iterations=321, final_primal=0.123456789123456789,
        final_dual=0.1234567, final_gap=2.1e-8, w=w, alpha=alpha,
    )


@pytest.mark.parametrize("with_alpha", [True, False])
def test_model_file_round_trip_bit_exact(tmp_path, rng, with_alpha):
    model = _model(rng, with_alpha)
    path = tmp_path / "model.txt"
    save_model(path, model)
    back = load_model(path)
    assert back.d == model.d and back.k == model.k
    assert back.loss == model.loss and back.loss_gamma == model.loss_gamma
    assert back.regularizer == model.regularizer
    assert back.threshold == model.threshold
    assert back.lam == model.lam and back.sigma == model.sigma
    assert back.final_primal == model.final_primal  # bit-exact floats
    assert back.final_gap == model.final_gap
    assert np.array_equal(back.w, model.w)
    if with_alpha:
        assert np.array_equal(back.alpha, model.alpha)
    else:
        assert back.alpha is None and back.alpha_free
    # a second save of the loaded model is byte-identical
    path2 = tmp_path / "model2.txt"
    save_model(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_model_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a model\n")
    with pytest.raises(ParseError):
        load_model(path)
    path.write_text("proxsdca-model v1\nd 3\n")
    with pytest.raises(ParseError):
        load_model(path)


def test_trace_csv_format(tmp_path):
    trace = RunTrace()
    trace.append(Checkpoint(0, 1.0, 0.0, 1.0, 0.001))
    trace.append(Checkpoint(10, 0.5, 0.25, 0.25, 0.123456))
    path = tmp_path / "trace.csv"
    write_trace_csv(path, trace)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,P,D,gap,seconds"
    assert lines[1].startswith("0,1.0,0.0,1.0,")
    assert lines[2].startswith("10,0.5,0.25,0.25,")
    assert len(lines) == 3
