"""Ranking surrogates, exact gradients and top-k unbiased gradient estimators.

Every estimator is evaluated at the deterministic score s = X w of the round
and divides the revealed part of the gradient by the probability that the
randomized ranking put the observed item(s) on top.
"""

from __future__ import annotations
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Dict, Tuple, Type

import numpy as np
from pydantic import BaseModel, Field
from pydantic.config import ConfigDict

from .core import ConfigError, ContractError, InputError, RelevanceVector, TopKFeedback, as_scores

class SurrogateKind(str, Enum):
    SQUARED = "squared"
    RANKSVM = "ranksvm"
    KL = "kl"
    SMOOTH_DCG = "smoothdcg"
    LISTNET = "listnet"

class SurrogateId(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: SurrogateKind
    # Smoothing of SmoothDCG; ignored by the other surrogates.
    epsilon: float = Field(default=0.01, gt=0.0)

    @classmethod
    def parse(cls, text: str, epsilon: float = 0.01) -> "SurrogateId":
        t = text.strip().lower().replace("-", "").replace("_", "")
        try:
            return cls(kind=SurrogateKind(t), epsilon=epsilon)
        except ValueError as e:
            raise ConfigError(f"unknown surrogate {text!r}") from e

    def required_k(self, m: int) -> int:
        if self.kind == SurrogateKind.RANKSVM:
            return 2
        if self.kind == SurrogateKind.LISTNET:
            return m
        return 1

    @property
    def convex(self) -> bool:
        return self.kind != SurrogateKind.SMOOTH_DCG

    @property
    def maximize(self) -> bool:
        """SmoothDCG is a smoothed gain; every other surrogate is a loss."""
        return self.kind == SurrogateKind.SMOOTH_DCG

    def __str__(self) -> str:
        return self.kind.value

# ---------------------------
# Propensities
# ---------------------------
@dataclass(frozen=True)
class Propensities:
    """Top-slot probabilities of the mixture (1-gamma) delta(sigma_t) + gamma Uniform."""

    gamma: float
    m: int
    top1: int
    top2: int = -1

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 0.5:
            raise ConfigError(f"gamma must lie in [0, 1/2), got {self.gamma}")
        if self.m < 1 or not 0 <= self.top1 < self.m:
            raise InputError("top item outside 0..m-1")

    @classmethod
    def from_order(cls, gamma: float, rank_to_item: np.ndarray) -> "Propensities":
        top2 = int(rank_to_item[1]) if rank_to_item.size > 1 else -1
        return cls(gamma=gamma, m=int(rank_to_item.size), top1=int(rank_to_item[0]), top2=top2)

def propensity_top1(pr: Propensities, item: int) -> float:
    base = pr.gamma / pr.m
    return 1.0 - pr.gamma + base if item == pr.top1 else base

def propensity_top2(pr: Propensities, first: int, second: int) -> float:
    if pr.m < 2:
        raise InputError("top-2 propensity needs m >= 2")
    base = pr.gamma / (pr.m * (pr.m - 1))
    return 1.0 - pr.gamma + base if (first, second) == (pr.top1, pr.top2) else base

# ---------------------------
# Surrogates
# ---------------------------
def _relevance(R: RelevanceVector | np.ndarray) -> np.ndarray:
    if isinstance(R, RelevanceVector):
        return R.as_float()
    return np.asarray(R, dtype=np.float64)

def _softmax(v: np.ndarray) -> np.ndarray:
    z = np.exp(v - v.max())
    return z / z.sum()

class Surrogate(ABC):
    def __init__(self, sid: SurrogateId):
        self.sid = sid

    @abstractmethod
    def value(self, s: np.ndarray, R: np.ndarray) -> float: ...

    @abstractmethod
    def gradient(self, s: np.ndarray, R: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def score_estimate(self, s: np.ndarray, fb: TopKFeedback, pr: Propensities) -> np.ndarray:
        """Unbiased estimate of gradient(s, R) in score space from top-k feedback."""

class SquaredSurrogate(Surrogate):
    def value(self, s, R):
        return float(np.sum((s - R) ** 2))

    def gradient(self, s, R):
        return 2.0 * (s - R)

    def score_estimate(self, s, fb, pr):
        a = int(fb.items[0])
        r_hat = np.zeros_like(s)
        r_hat[a] = fb.revealed[0] / propensity_top1(pr, a)
        return 2.0 * (s - r_hat)

class RankSVMSurrogate(Surrogate):
    def value(self, s, R):
        prefer = R[:, None] > R[None, :]
        hinge = np.maximum(0.0, 1.0 + s[None, :] - s[:, None])
        return float(np.sum(hinge[prefer]))

    def gradient(self, s, R):
        # Strict indicator 1(1 + s_j > s_i) at the kink.
        active = (R[:, None] > R[None, :]) & (1.0 + s[None, :] > s[:, None])
        return active.sum(axis=0).astype(np.float64) - active.sum(axis=1)

    @staticmethod
    def _pair_term(s: np.ndarray, i: int, j: int, r_i: float, r_j: float) -> np.ndarray:
        h = np.zeros_like(s)
        if r_i > r_j and 1.0 + s[j] > s[i]:
            h[j] += 1.0
            h[i] -= 1.0
        return h

    def score_estimate(self, s, fb, pr):
        a, b = int(fb.items[0]), int(fb.items[1])
        r_a, r_b = float(fb.revealed[0]), float(fb.revealed[1])
        num = self._pair_term(s, a, b, r_a, r_b) + self._pair_term(s, b, a, r_b, r_a)
        return num / (propensity_top2(pr, a, b) + propensity_top2(pr, b, a))

class KLSurrogate(Surrogate):
    """Un-normalised KL divergence between exp(R) and exp(s)."""

    def value(self, s, R):
        eR = np.exp(R)
        return float(np.sum(eR * (R - s) - eR + np.exp(s)))

    def gradient(self, s, R):
        return np.exp(s) - np.exp(R)

    def score_estimate(self, s, fb, pr):
        a = int(fb.items[0])
        z = np.zeros_like(s)
        z[a] = (math.exp(s[a]) - math.exp(float(fb.revealed[0]))) / propensity_top1(pr, a)
        return z

class SmoothDCGSurrogate(Surrogate):
    """Softmax-smoothed DCG@1; a gain, non-convex in s."""

    def _weights(self, s: np.ndarray) -> np.ndarray:
        return _softmax(s / self.sid.epsilon)

    def _h(self, s: np.ndarray, i: int, w: np.ndarray) -> np.ndarray:
        # d w_i / d s = w_i (e_i - w) / epsilon
        e = np.zeros_like(s)
        e[i] = 1.0
        return w[i] * (e - w) / self.sid.epsilon

    def value(self, s, R):
        return float(np.dot(np.exp2(R) - 1.0, self._weights(s)))

    def gradient(self, s, R):
        w = self._weights(s)
        G = np.exp2(R) - 1.0
        return w * (G - np.dot(G, w)) / self.sid.epsilon

    def score_estimate(self, s, fb, pr):
        a = int(fb.items[0])
        gain = 2.0 ** float(fb.revealed[0]) - 1.0
        return gain * self._h(s, a, self._weights(s)) / propensity_top1(pr, a)

class ListNetSurrogate(Surrogate):
    """Top-1 cross entropy; full-information only."""

    def value(self, s, R):
        log_ps = s - s.max() - math.log(np.sum(np.exp(s - s.max())))
        return float(-np.dot(_softmax(R), log_ps))

    def gradient(self, s, R):
        return _softmax(s) - _softmax(R)

    def score_estimate(self, s, fb, pr):
        raise ContractError("the ListNet gradient does not decompose over top-k coordinates")

_SURROGATES: Dict[SurrogateKind, Type[Surrogate]] = {
    SurrogateKind.SQUARED: SquaredSurrogate,
    SurrogateKind.RANKSVM: RankSVMSurrogate,
    SurrogateKind.KL: KLSurrogate,
    SurrogateKind.SMOOTH_DCG: SmoothDCGSurrogate,
    SurrogateKind.LISTNET: ListNetSurrogate,
}

def make_surrogate(sid: SurrogateId) -> Surrogate:
    return _SURROGATES[sid.kind](sid)

# ---------------------------
# Module-level API
# ---------------------------
def value(sid: SurrogateId, s: np.ndarray, R: RelevanceVector | np.ndarray) -> float:
    return make_surrogate(sid).value(as_scores(s), _relevance(R))

def gradient(sid: SurrogateId, s: np.ndarray, R: RelevanceVector | np.ndarray) -> np.ndarray:
    scores = as_scores(s)
    rel = _relevance(R)
    if rel.shape != scores.shape:
        raise InputError(f"score length {scores.size} vs relevance length {rel.size}")
    return make_surrogate(sid).gradient(scores, rel)

def estimate_gradient(
    sid: SurrogateId,
    s: np.ndarray,
    feedback: TopKFeedback,
    pr: Propensities,
    X: np.ndarray,
) -> np.ndarray:
    """X^T times the score-space estimator; unbiased for X^T gradient(s, R)."""
    scores = as_scores(s)
    X = np.asarray(X, dtype=np.float64)
    m = scores.size
    if X.ndim != 2 or X.shape[0] != m:
        raise InputError(f"feature matrix shape {X.shape} does not match {m} scores")
    if sid.kind == SurrogateKind.LISTNET:
        raise ContractError("ListNet has no unbiased top-k estimator; use full-information updates")
    need = sid.required_k(m)
    if feedback.k < need:
        raise ContractError(f"{sid} needs top-{need} feedback, got top-{feedback.k}")
    surrogate = make_surrogate(sid)
    if feedback.k == m:
        # Whole vector revealed: the estimate is the gradient itself.
        R = np.zeros(m)
        R[feedback.items] = feedback.revealed
        return X.T @ surrogate.gradient(scores, R)
    return X.T @ surrogate.score_estimate(scores, feedback, pr)

def operator_norm_1_to_2(X: np.ndarray) -> float:
    """||X^T||_{1->2}: the largest row 2-norm of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return 0.0
    return float(np.linalg.norm(X, axis=1).max())

def second_moment_bound(
    sid: SurrogateId,
    m: int,
    r_d: float,
    u: float,
    r_max: float,
    gamma: float,
) -> float:
    """Upper bound C/gamma on E||z||^2 for the top-k estimator of `sid`."""
    if not 0.0 < gamma < 0.5:
        raise ConfigError(f"gamma must lie in (0, 1/2), got {gamma}")
    kind = sid.kind
    if kind == SurrogateKind.SQUARED:
        c = m**4 * r_d**4 * u**2 * r_max**2
    elif kind == SurrogateKind.RANKSVM:
        c = 16.0 * m**4 * r_d**2
    elif kind == SurrogateKind.KL:
        c = m**2 * r_d**2 * math.exp(2.0 * r_d * u)
    elif kind == SurrogateKind.SMOOTH_DCG:
        c = 4.0 * m**2 * r_d**2 * (2.0**r_max - 1.0) ** 2 / sid.epsilon**2
    else:
        raise ContractError("ListNet has no top-k estimator to bound")
    return c / gamma

# ---------------------------
# Decomposability counterexamples
# ---------------------------
class DecomposabilityReport(BaseModel):
    # Change of the e_1 coefficient when R(1) flips 0 -> 1, with R(2), R(3) at 0 and at 1.
    ranksvm_deltas: Tuple[float, float]
    listnet_mixed_partial: float
    squared_max_mixed_partial: float

    @property
    def ranksvm_decomposable(self) -> bool:
        return self.ranksvm_deltas[0] == self.ranksvm_deltas[1]

def _ranksvm_first_coordinate_terms(s: np.ndarray, R: np.ndarray) -> float:
    """e_1 coefficient of the RankSVM gradient terms that involve R(1)."""
    total = np.zeros_like(s)
    for j in range(1, s.size):
        total += RankSVMSurrogate._pair_term(s, 0, j, R[0], R[j])
        total += RankSVMSurrogate._pair_term(s, j, 0, R[j], R[0])
    return float(total[0])

def _mixed_partial(f, R: np.ndarray, i: int, j: int, h: float = 1e-4) -> float:
    def at(di: float, dj: float) -> float:
        x = R.copy()
        x[i] += di
        x[j] += dj
        return f(x)

    return (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)

def decomposability_counterexamples() -> DecomposabilityReport:
    s = np.array([1.0, 0.0, 0.0])

    def coef(bits) -> float:
        return _ranksvm_first_coordinate_terms(s, np.array(bits, dtype=np.float64))

    deltas = (coef([0, 0, 0]) - coef([1, 0, 0]), coef([0, 1, 1]) - coef([1, 1, 1]))

    R = np.array([0.3, 0.5, 0.1])
    listnet = ListNetSurrogate(SurrogateId(kind=SurrogateKind.LISTNET))
    squared = SquaredSurrogate(SurrogateId(kind=SurrogateKind.SQUARED))
    mixed = _mixed_partial(lambda r: listnet.gradient(s, r)[0], R, 0, 1)
    sq = max(
        abs(_mixed_partial(lambda r, c=c: squared.gradient(s, r)[c], R, i, j))
        for c in range(3)
        for i in range(3)
        for j in range(3)
        if i != j
    )
    return DecomposabilityReport(ranksvm_deltas=deltas, listnet_mixed_partial=mixed, squared_max_mixed_partial=sq)
