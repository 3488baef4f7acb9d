"""Ranking measures, evaluated exactly.

Ranks are 1-based inside the formulas (rank 1 is the top slot) even though
`Permutation` stores 0-based ranks.
"""

from __future__ import annotations
import math
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator
from pydantic.config import ConfigDict

from .core import ConfigError, DomainError, InputError, Permutation, RelevanceVector, UnsupportedError

class MeasureKind(str, Enum):
    SUM_LOSS = "sumloss"
    PAIRWISE_LOSS = "pairwise"
    DCG = "dcg"
    NDCG = "ndcg"
    PRECISION_AT_N = "precision"
    AP = "ap"
    AUC = "auc"
    NDCG_AT_N = "ndcg_at"

_GAINS = {MeasureKind.DCG, MeasureKind.NDCG, MeasureKind.PRECISION_AT_N, MeasureKind.AP, MeasureKind.NDCG_AT_N}
_BINARY_ONLY = {MeasureKind.PAIRWISE_LOSS, MeasureKind.PRECISION_AT_N, MeasureKind.AP, MeasureKind.AUC}
_WITH_CUTOFF = {MeasureKind.PRECISION_AT_N, MeasureKind.NDCG_AT_N}
# Measures of the form f(sigma) . g(R) (+ an R-only offset).
_LINEAR = {MeasureKind.SUM_LOSS, MeasureKind.PAIRWISE_LOSS, MeasureKind.DCG, MeasureKind.PRECISION_AT_N}
# Strictly monotone discount f: adjacent transpositions characterise neighbours.
_STRICT = {MeasureKind.SUM_LOSS, MeasureKind.DCG}

_ALIASES = {
    "sumloss": MeasureKind.SUM_LOSS,
    "sum": MeasureKind.SUM_LOSS,
    "pairwise": MeasureKind.PAIRWISE_LOSS,
    "pairwiseloss": MeasureKind.PAIRWISE_LOSS,
    "pl": MeasureKind.PAIRWISE_LOSS,
    "dcg": MeasureKind.DCG,
    "ndcg": MeasureKind.NDCG,
    "ap": MeasureKind.AP,
    "auc": MeasureKind.AUC,
}

class MeasureId(BaseModel):
    """A ranking measure, with its cutoff n for Precision@n / NDCG@n."""

    model_config = ConfigDict(frozen=True)

    kind: MeasureKind
    n: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_cutoff(self) -> "MeasureId":
        if self.kind in _WITH_CUTOFF and self.n is None:
            raise ValueError(f"{self.kind.value} needs a cutoff n")
        if self.kind not in _WITH_CUTOFF and self.n is not None:
            raise ValueError(f"{self.kind.value} takes no cutoff")
        return self

    @classmethod
    def parse(cls, text: str) -> "MeasureId":
        """'dcg', 'sumloss', 'precision@5', 'ndcg@10', ..."""
        t = text.strip().lower().replace("-", "").replace("_", "")
        if "@" in t:
            name, _, cut = t.partition("@")
            try:
                n = int(cut)
            except ValueError as e:
                raise ConfigError(f"bad cutoff in measure {text!r}") from e
            if name in ("precision", "prec", "p"):
                return cls(kind=MeasureKind.PRECISION_AT_N, n=n)
            if name == "ndcg":
                return cls(kind=MeasureKind.NDCG_AT_N, n=n)
            raise ConfigError(f"unknown measure {text!r}")
        if t not in _ALIASES:
            raise ConfigError(f"unknown measure {text!r}")
        return cls(kind=_ALIASES[t])

    @property
    def is_gain(self) -> bool:
        return self.kind in _GAINS

    @property
    def binary_only(self) -> bool:
        return self.kind in _BINARY_ONLY

    @property
    def is_linear(self) -> bool:
        return self.kind in _LINEAR

    @property
    def strictly_monotone(self) -> bool:
        return self.kind in _STRICT

    @property
    def label(self) -> str:
        if self.kind == MeasureKind.PRECISION_AT_N:
            return f"precision@{self.n}"
        if self.kind == MeasureKind.NDCG_AT_N:
            return f"ndcg@{self.n}"
        return self.kind.value

    def __str__(self) -> str:
        return self.label

SUM_LOSS = MeasureId(kind=MeasureKind.SUM_LOSS)
PAIRWISE_LOSS = MeasureId(kind=MeasureKind.PAIRWISE_LOSS)
DCG = MeasureId(kind=MeasureKind.DCG)
NDCG = MeasureId(kind=MeasureKind.NDCG)
AP = MeasureId(kind=MeasureKind.AP)
AUC = MeasureId(kind=MeasureKind.AUC)

def precision_at(n: int) -> MeasureId:
    return MeasureId(kind=MeasureKind.PRECISION_AT_N, n=n)

def ndcg_at(n: int) -> MeasureId:
    return MeasureId(kind=MeasureKind.NDCG_AT_N, n=n)

# ---------------------------
# Helpers
# ---------------------------
_LOG2 = math.log(2.0)

def _ranks1(sigma: Permutation, R: RelevanceVector) -> np.ndarray:
    if sigma.m != R.m:
        raise InputError(f"permutation over {sigma.m} items vs relevance over {R.m}")
    return sigma.ranks.astype(np.float64) + 1.0

def _require_binary(R: RelevanceVector, name: str) -> None:
    if not R.is_binary:
        raise DomainError(f"{name} is defined for binary relevance only")

def _discount_at(ranks1: np.ndarray) -> np.ndarray:
    return _LOG2 / np.log(1.0 + ranks1)

def _gains(grades: np.ndarray) -> np.ndarray:
    return np.exp2(grades.astype(np.float64)) - 1.0

def ideal_dcg(R: RelevanceVector, n: Optional[int] = None) -> float:
    """Z(R): the best achievable DCG (optionally truncated at rank n)."""
    g = np.sort(_gains(R.grades))[::-1]
    if n is not None:
        g = g[:n]
    return float(np.dot(g, _discount_at(np.arange(1, g.size + 1, dtype=np.float64))))

# ---------------------------
# Measures
# ---------------------------
def sum_loss(sigma: Permutation, R: RelevanceVector) -> float:
    return float(np.dot(_ranks1(sigma, R), R.grades))

def pairwise_loss(sigma: Permutation, R: RelevanceVector) -> float:
    """Number of (irrelevant above relevant) pairs."""
    ranks = _ranks1(sigma, R)
    _require_binary(R, "PairwiseLoss")
    rel = R.grades == 1
    above = ranks[~rel][:, None] < ranks[rel][None, :]
    return float(above.sum())

def dcg(sigma: Permutation, R: RelevanceVector) -> float:
    return float(np.dot(_discount_at(_ranks1(sigma, R)), _gains(R.grades)))

def ndcg(sigma: Permutation, R: RelevanceVector) -> float:
    z = ideal_dcg(R)
    if z == 0.0:
        return 1.0
    return dcg(sigma, R) / z

def ndcg_at_n(sigma: Permutation, R: RelevanceVector, n: int) -> float:
    if n < 1:
        raise InputError("cutoff n must be >= 1")
    ranks = _ranks1(sigma, R)
    z = ideal_dcg(R, n)
    if z == 0.0:
        return 1.0
    keep = ranks <= n
    return float(np.dot(_discount_at(ranks[keep]), _gains(R.grades[keep]))) / z

def precision_at_n(sigma: Permutation, R: RelevanceVector, n: int) -> float:
    ranks = _ranks1(sigma, R)
    _require_binary(R, "Precision@n")
    if not 1 <= n <= R.m:
        raise InputError(f"cutoff n={n} outside 1..{R.m}")
    return float(R.grades[ranks <= n].sum())

def ap(sigma: Permutation, R: RelevanceVector) -> float:
    _ranks1(sigma, R)
    _require_binary(R, "AP")
    total = int(R.grades.sum())
    if total == 0:
        return 1.0
    rel_by_rank = R.grades[sigma.rank_to_item].astype(np.float64)
    precision = np.cumsum(rel_by_rank) / np.arange(1, R.m + 1)
    return float(np.dot(precision, rel_by_rank)) / total

def auc(sigma: Permutation, R: RelevanceVector) -> float:
    """Fraction of misordered (relevant, irrelevant) pairs; a loss."""
    _ranks1(sigma, R)
    _require_binary(R, "AUC")
    r = int(R.grades.sum())
    pairs = r * (R.m - r)
    if pairs == 0:
        return 0.0
    return pairwise_loss(sigma, R) / pairs

def evaluate(measure: MeasureId, sigma: Permutation, R: RelevanceVector) -> float:
    k = measure.kind
    if k == MeasureKind.SUM_LOSS:
        return sum_loss(sigma, R)
    if k == MeasureKind.PAIRWISE_LOSS:
        return pairwise_loss(sigma, R)
    if k == MeasureKind.DCG:
        return dcg(sigma, R)
    if k == MeasureKind.NDCG:
        return ndcg(sigma, R)
    if k == MeasureKind.NDCG_AT_N:
        return ndcg_at_n(sigma, R, measure.n)
    if k == MeasureKind.PRECISION_AT_N:
        return precision_at_n(sigma, R, measure.n)
    if k == MeasureKind.AP:
        return ap(sigma, R)
    return auc(sigma, R)

def as_loss(measure: MeasureId, value: float) -> float:
    return -value if measure.is_gain else value

# ---------------------------
# Linear form f(sigma) . g(R) + offset(R)
# ---------------------------
def discount(measure: MeasureId, sigma: Permutation) -> np.ndarray:
    ranks1 = sigma.ranks.astype(np.float64) + 1.0
    k = measure.kind
    if k in (MeasureKind.SUM_LOSS, MeasureKind.PAIRWISE_LOSS):
        return ranks1
    if k == MeasureKind.DCG:
        return _discount_at(ranks1)
    if k == MeasureKind.PRECISION_AT_N:
        return (ranks1 <= measure.n).astype(np.float64)
    raise UnsupportedError(f"{measure} is not of the form f(sigma) . g(R)")

def gain_transform(measure: MeasureId, grades: np.ndarray) -> np.ndarray:
    """g(R): 2^R - 1 for DCG, identity otherwise."""
    if measure.kind == MeasureKind.DCG:
        return _gains(np.asarray(grades))
    return np.asarray(grades, dtype=np.float64)

def offset(measure: MeasureId, R: RelevanceVector) -> float:
    """R-only term: PairwiseLoss = SumLoss - r(r+1)/2 with r = |R|_1."""
    if measure.kind == MeasureKind.PAIRWISE_LOSS:
        r = float(R.grades.sum())
        return -r * (r + 1.0) / 2.0
    return 0.0
