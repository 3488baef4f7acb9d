"""Query/document ranking data: SVMlight-style files and a synthetic generator.

File grammar (one document per line, whitespace separated)::

    <grade> qid:<id> <index>:<value> ... [# comment]

Feature indices are 1-based in files and 0-based in memory. Missing
features are zero.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Sequence, Tuple

import numpy as np

from .core import DomainError, InputError, ParseError, RelevanceVector, Rng, make_rng

logger = logging.getLogger(__name__)

GRADE_QUANTILES = (0.5, 0.75, 0.9, 0.97)

@dataclass(frozen=True)
class QueryRecord:
    qid: str
    X: np.ndarray
    R: RelevanceVector
    # Rows appended (zero features, grade 0) or dropped to reach a fixed list length.
    padded: int = 0
    truncated: int = 0

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.R.m:
            raise InputError(f"query {self.qid}: {X.shape[0]} feature rows vs {self.R.m} grades")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def m(self) -> int:
        return self.R.m

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

@dataclass(frozen=True)
class Dataset:
    records: Tuple[QueryRecord, ...]
    max_grade: int = 4
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.records:
            raise InputError("dataset has no queries")
        dims = {r.d for r in self.records}
        if len(dims) != 1:
            raise InputError(f"records disagree on feature dimension: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[QueryRecord]:
        return iter(self.records)

    @property
    def d(self) -> int:
        return self.records[0].d

    @property
    def r_d(self) -> float:
        """Largest feature-row 2-norm."""
        return max(float(np.linalg.norm(r.X, axis=1).max()) for r in self.records)

    def fixed_length(self, m: int) -> "Dataset":
        return replace(self, records=tuple(truncate_or_pad(r, m) for r in self.records))

    def iter_rounds(self, T: int, rng: Rng) -> Iterator[Tuple[np.ndarray, RelevanceVector]]:
        """T rounds of (X, R), cycling through freshly shuffled passes."""
        if len({r.m for r in self.records}) != 1:
            raise InputError("list lengths differ; call fixed_length(m) first")
        produced = 0
        while produced < T:
            for i in rng.permutation(len(self.records)):
                if produced == T:
                    return
                rec = self.records[int(i)]
                yield rec.X, rec.R
                produced += 1

# ---------------------------
# SVMlight ranking files
# ---------------------------
def _parse_line(text: str, path: str, line_no: int) -> Tuple[int, str, Dict[int, float]] | None:
    data = text.split("#", 1)[0].strip()
    if not data:
        return None
    toks = data.split()
    if len(toks) < 2:
        raise ParseError("expected '<grade> qid:<id> ...'", path=path, line_no=line_no)
    try:
        grade = int(toks[0])
    except ValueError as e:
        raise ParseError(f"grade {toks[0]!r} is not an integer", path=path, line_no=line_no) from e
    key, sep, qid = toks[1].partition(":")
    if key != "qid" or not sep or not qid:
        raise ParseError(f"expected qid:<id>, got {toks[1]!r}", path=path, line_no=line_no)

    features: Dict[int, float] = {}
    for tok in toks[2:]:
        idx, sep, val = tok.partition(":")
        try:
            fid = int(idx)
            features[fid - 1] = float(val)
        except ValueError as e:
            raise ParseError(f"bad feature token {tok!r}", path=path, line_no=line_no) from e
        if not sep or fid < 1:
            raise ParseError(f"feature index must be >= 1 in {tok!r}", path=path, line_no=line_no)
    return grade, qid, features

def load_svmlight_ranking(path: Path, max_grade: int = 4) -> Dataset:
    """Group documents by qid (first-appearance order, file order within a query)."""
    groups: Dict[str, List[Tuple[int, Dict[int, float]]]] = {}
    d = 0
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, text in enumerate(fh, start=1):
            parsed = _parse_line(text, str(path), line_no)
            if parsed is None:
                continue
            grade, qid, features = parsed
            if not 0 <= grade <= max_grade:
                raise DomainError(f"{path}:{line_no}: grade {grade} outside 0..{max_grade}")
            if features:
                d = max(d, max(features) + 1)
            groups.setdefault(qid, []).append((grade, features))
    if not groups:
        raise InputError(f"{path}: no documents")

    records: List[QueryRecord] = []
    for qid, docs in groups.items():
        X = np.zeros((len(docs), d))
        for row, (_, features) in enumerate(docs):
            for fid, val in features.items():
                X[row, fid] = val
        grades = np.array([g for g, _ in docs], dtype=np.int64)
        records.append(QueryRecord(qid=qid, X=X, R=RelevanceVector(grades, max_grade=max_grade)))
    logger.info("loaded %d queries (d=%d) from %s", len(records), d, path)
    return Dataset(records=tuple(records), max_grade=max_grade)

def write_svmlight_ranking(dataset: Dataset, path: Path) -> Path:
    """Dense rows with shortest round-trip float text."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in dataset:
            for row, grade in zip(rec.X, rec.R.grades):
                feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(row))
                fh.write(f"{int(grade)} qid:{rec.qid} {feats}\n")
    return path

# ---------------------------
# Synthetic data
# ---------------------------
def synthesize_contextual(num_queries: int, m: int, d: int, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Linearly rankable data: unit-norm gaussian rows, grades 0..4 from quantiles of X w* + noise."""
    if num_queries < 1 or m < 1 or d < 1:
        raise InputError("num_queries, m and d must be >= 1")
    if noise < 0:
        raise InputError("noise must be >= 0")
    rng = make_rng(seed)
    w_star = rng.standard_normal(d)
    w_star /= np.linalg.norm(w_star)
    X = rng.standard_normal((num_queries, m, d))
    X /= np.linalg.norm(X, axis=2, keepdims=True)
    scores = X @ w_star + noise * rng.standard_normal((num_queries, m))
    cuts = np.quantile(scores, GRADE_QUANTILES)
    grades = np.searchsorted(cuts, scores, side="right")
    records = tuple(
        QueryRecord(qid=str(q + 1), X=X[q], R=RelevanceVector(grades[q], max_grade=len(GRADE_QUANTILES)))
        for q in range(num_queries)
    )
    return Dataset(
        records=records,
        max_grade=len(GRADE_QUANTILES),
        metadata={"w_star": w_star.tolist(), "noise": noise, "seed": seed},
    )

def truncate_or_pad(record: QueryRecord, m: int) -> QueryRecord:
    """Keep the first m documents, or append zero-feature grade-0 documents."""
    if m < 1:
        raise InputError("m must be >= 1")
    if record.m == m:
        return record
    if record.m > m:
        return QueryRecord(
            qid=record.qid,
            X=record.X[:m],
            R=RelevanceVector(record.R.grades[:m], max_grade=record.R.max_grade),
            padded=record.padded,
            truncated=record.truncated + record.m - m,
        )
    extra = m - record.m
    X = np.vstack([record.X, np.zeros((extra, record.d))])
    grades = np.concatenate([record.R.grades, np.zeros(extra, dtype=np.int64)])
    return QueryRecord(
        qid=record.qid,
        X=X,
        R=RelevanceVector(grades, max_grade=record.R.max_grade),
        padded=record.padded + extra,
        truncated=record.truncated,
    )

def as_rounds(records: Sequence[QueryRecord]) -> List[Tuple[np.ndarray, RelevanceVector]]:
    return [(r.X, r.R) for r in records]
