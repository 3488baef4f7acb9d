"""Oblivious relevance streams and the indistinguishable-distributions construction."""

from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Tuple

import numpy as np
from pydantic import BaseModel

from .core import ConfigError, InputError, RelevanceVector, Rng, argsort_desc, as_scores, make_rng
from .measures import ideal_dcg

logger = logging.getLogger(__name__)

# ---------------------------
# Corrupted-vector streams
# ---------------------------
def planted_relevance(m: int, ones: int, rng: Rng) -> RelevanceVector:
    """Binary vector with `ones` relevant items at random positions."""
    if not 0 <= ones <= m:
        raise InputError(f"cannot plant {ones} relevant items among {m}")
    grades = np.zeros(m, dtype=np.int64)
    grades[rng.choice(m, size=ones, replace=False)] = 1
    return RelevanceVector(grades)

@dataclass(frozen=True)
class CorruptionStream:
    """T rounds of `true_relevance` with every bit flipped independently w.p. flip_prob."""

    true_relevance: RelevanceVector
    flip_prob: float
    T: int
    seed: int
    _grades: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.true_relevance.is_binary:
            raise InputError("corruption streams flip binary relevance only")
        if not 0.0 <= self.flip_prob < 0.5:
            raise ConfigError(f"flip_prob must lie in [0, 0.5), got {self.flip_prob}")
        if self.T < 1:
            raise InputError("T must be >= 1")
        rng = make_rng(self.seed, stream=1)
        flips = rng.random((self.T, self.true_relevance.m)) < self.flip_prob
        grades = np.bitwise_xor(self.true_relevance.grades[None, :], flips.astype(np.int64))
        grades.setflags(write=False)
        object.__setattr__(self, "_grades", grades)

    @property
    def grades(self) -> np.ndarray:
        """All rounds as a (T, m) array."""
        return self._grades

    def __len__(self) -> int:
        return self.T

    def __iter__(self) -> Iterator[RelevanceVector]:
        for row in self._grades:
            yield RelevanceVector(row)

def simulated_stream(m: int = 20, ones: int = 5, flip_prob: float = 0.1, T: int = 10_000, seed: int = 0) -> CorruptionStream:
    true = planted_relevance(m, ones, make_rng(seed, stream=0))
    logger.debug("planted relevance %s (seed=%d)", true.grades.tolist(), seed)
    return CorruptionStream(true_relevance=true, flip_prob=flip_prob, T=T, seed=seed)

# ---------------------------
# Indistinguishable distributions
# ---------------------------
@dataclass(frozen=True)
class DistributionPair:
    support: np.ndarray
    p: np.ndarray
    p_tilde: np.ndarray

    def __post_init__(self) -> None:
        for name in ("p", "p_tilde"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (self.support.shape[0],) or v.min() < 0 or abs(v.sum() - 1.0) > 1e-12:
                raise InputError(f"{name} is not a distribution over the support")

def default_pair() -> DistributionPair:
    """Two laws over binary R in {0,1}^3 with equal means but different NDCG-optimal orders."""
    support = np.array(
        [[0, 0, 0], [1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]],
        dtype=np.int64,
    )
    p = np.array([0.0, 0.1, 0.15, 0.05, 0.2, 0.3, 0.2, 0.0])
    p_tilde = np.array([0.0, 0.3, 0.0, 0.0, 0.15, 0.15, 0.4, 0.0])
    return DistributionPair(support=support, p=p, p_tilde=p_tilde)

def normalized_gains(R: RelevanceVector) -> np.ndarray:
    """G(R)/Z(R); the all-zero vector maps to zeros."""
    z = ideal_dcg(R)
    g = np.exp2(R.as_float()) - 1.0
    return g / z if z > 0 else np.zeros_like(g)

class IndistinguishabilityReport(BaseModel):
    mean_p: List[float]
    mean_p_tilde: List[float]
    gain_p: List[float]
    gain_p_tilde: List[float]
    # Items (0-based) sorted by descending expected normalized gain.
    order_p: List[int]
    order_p_tilde: List[int]
    means_match: bool
    top_items_differ: bool

def expected_relevance(pair: DistributionPair) -> Tuple[np.ndarray, np.ndarray]:
    S = pair.support.astype(np.float64)
    return pair.p @ S, pair.p_tilde @ S

def top_relevance_probability(pair: DistributionPair, s: np.ndarray, rng: Rng) -> Tuple[float, float]:
    """P(R(top item of s) = 1) under p and under p_tilde."""
    top = int(argsort_desc(as_scores(s), rng).rank_to_item[0])
    hit = pair.support[:, top].astype(np.float64)
    return float(pair.p @ hit), float(pair.p_tilde @ hit)

def indistinguishability_report(pair: DistributionPair | None = None) -> IndistinguishabilityReport:
    pair = pair or default_pair()
    mean_p, mean_q = expected_relevance(pair)
    G = np.stack([normalized_gains(RelevanceVector(row)) for row in pair.support])
    gain_p, gain_q = pair.p @ G, pair.p_tilde @ G
    order_p = np.argsort(-gain_p, kind="stable")
    order_q = np.argsort(-gain_q, kind="stable")
    return IndistinguishabilityReport(
        mean_p=mean_p.tolist(),
        mean_p_tilde=mean_q.tolist(),
        gain_p=gain_p.tolist(),
        gain_p_tilde=gain_q.tolist(),
        order_p=order_p.tolist(),
        order_p_tilde=order_q.tolist(),
        means_match=bool(np.allclose(mean_p, mean_q, rtol=0.0, atol=1e-12)),
        top_items_differ=bool(order_p[0] != order_q[0]),
    )
