"""Tests for SVMlight ranking files and synthetic contextual data."""

from __future__ import annotations
from pathlib import Path

import numpy as np
import pytest

from topkrank.core import DomainError, InputError, ParseError, argsort_desc, make_rng
from topkrank.datasets import (
    Dataset,
    load_svmlight_ranking,
    synthesize_contextual,
    truncate_or_pad,
    write_svmlight_ranking,
)
from topkrank.measures import ndcg_at_n

def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "data.txt"
    path.write_text(text, encoding="utf-8")
    return path

def test_load_groups_by_qid_in_file_order(svmlight_file: Path):
    data = load_svmlight_ranking(svmlight_file)
    assert [r.qid for r in data] == ["10", "7"]
    assert data.d == 3
    first = data.records[0]
    assert first.R.grades.tolist() == [2, 0, 1]
    np.testing.assert_array_equal(first.X, [[0.5, 0.0, 1.0], [0.0, 0.25, 0.0], [1.0, 1.0, 0.0]])
    assert data.records[1].R.grades.tolist() == [4, 0]

def test_two_line_file(tmp_path: Path):
    data = load_svmlight_ranking(_write(tmp_path, "1 qid:1 1:0.5\n0 qid:1 1:0.1\n"))
    assert len(data) == 1
    assert data.records[0].m == 2

def test_grade_domain(tmp_path: Path):
    assert load_svmlight_ranking(_write(tmp_path, "4 qid:1 1:1\n")).records[0].R.grades.tolist() == [4]
    with pytest.raises(DomainError):
        load_svmlight_ranking(_write(tmp_path, "5 qid:1 1:1\n"))

@pytest.mark.parametrize(
    "line",
    ["1 1:0.5", "x qid:1 1:0.5", "1 qid:1 1:abc", "1 qid:1 0:0.5", "1 qid:1 3"],
)
def test_malformed_lines_report_line_number(tmp_path: Path, line: str):
    path = _write(tmp_path, "0 qid:1 1:0.5\n" + line + "\n")
    with pytest.raises(ParseError) as exc:
        load_svmlight_ranking(path)
    assert exc.value.line_no == 2

def test_empty_file(tmp_path: Path):
    with pytest.raises(InputError):
        load_svmlight_ranking(_write(tmp_path, "# nothing\n"))

def test_write_then_load_is_exact(tmp_path: Path):
    data = synthesize_contextual(5, 4, 3, seed=2)
    loaded = load_svmlight_ranking(write_svmlight_ranking(data, tmp_path / "out" / "synthetic.txt"))
    for a, b in zip(data, loaded):
        assert a.qid == b.qid
        np.testing.assert_array_equal(a.X, b.X)
        assert a.R == b.R

def test_synthetic_noise_free_data_is_linearly_rankable(rng):
    data = synthesize_contextual(50, 12, 4, noise=0.0, seed=1)
    w_star = np.array(data.metadata["w_star"])
    for rec in data:
        assert ndcg_at_n(argsort_desc(rec.X @ w_star, rng), rec.R, 10) == pytest.approx(1.0)

def test_synthetic_data_properties():
    a = synthesize_contextual(200, 10, 5, seed=3)
    b = synthesize_contextual(200, 10, 5, seed=3)
    np.testing.assert_array_equal(a.records[0].X, b.records[0].X)
    grades = np.concatenate([r.R.grades for r in a])
    assert set(np.unique(grades)) == {0, 1, 2, 3, 4}
    assert a.r_d == pytest.approx(1.0)
    with pytest.raises(InputError):
        synthesize_contextual(0, 10, 5)

def test_truncate_or_pad():
    rec = synthesize_contextual(1, 3, 2, seed=0).records[0]
    assert truncate_or_pad(rec, 3) is rec
    padded = truncate_or_pad(rec, 5)
    assert padded.m == 5 and padded.padded == 2
    np.testing.assert_array_equal(padded.X[3:], np.zeros((2, 2)))
    assert padded.R.grades[3:].tolist() == [0, 0]
    cut = truncate_or_pad(rec, 2)
    assert cut.m == 2 and cut.truncated == 1
    np.testing.assert_array_equal(cut.X, rec.X[:2])

def test_padding_keeps_ndcg_when_padding_ranks_last(rng):
    rec = synthesize_contextual(1, 4, 3, seed=5).records[0]
    padded = truncate_or_pad(rec, 7)
    scores = np.concatenate([np.arange(4, 0, -1), [-1.0, -2.0, -3.0]])
    short = ndcg_at_n(argsort_desc(scores[:4], rng), rec.R, 3)
    assert ndcg_at_n(argsort_desc(scores, rng), padded.R, 3) == pytest.approx(short)

def test_iter_rounds_requires_fixed_length(svmlight_file: Path):
    data = load_svmlight_ranking(svmlight_file)
    with pytest.raises(InputError):
        next(data.iter_rounds(5, make_rng(0)))
    fixed = data.fixed_length(3)
    rounds = list(fixed.iter_rounds(5, make_rng(0)))
    assert len(rounds) == 5
    assert all(X.shape == (3, 3) for X, _ in rounds)
    assert {r.m for r in fixed} == {3}

def test_dataset_rejects_mixed_dimensions():
    a = synthesize_contextual(1, 3, 2, seed=0).records[0]
    b = synthesize_contextual(1, 3, 4, seed=0).records[0]
    with pytest.raises(InputError):
        Dataset(records=(a, b))
