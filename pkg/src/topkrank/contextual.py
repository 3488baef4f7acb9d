"""Contextual online ranking from top-k feedback: a linear scorer s = X w
trained by projected online gradient descent on unbiased gradient estimates.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass
from enum import Enum
from itertools import islice
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from pydantic.config import ConfigDict

from .core import ConfigError, InputError, Permutation, RelevanceVector, Rng, RunLog, TopKFeedback, argsort_desc
from .measures import ndcg_at_n
from .surrogates import Propensities, SurrogateId, SurrogateKind, estimate_gradient, make_surrogate

logger = logging.getLogger(__name__)

NDCG_CUTOFF = 10

class RankerMode(str, Enum):
    PARTIAL = "partial"
    FULL_INFORMATION = "full_information"
    RANDOM = "random"

class ContextualConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int = Field(ge=2)
    d: int = Field(ge=1)
    U: float = Field(default=10.0, gt=0.0)
    surrogate: SurrogateId
    mode: RankerMode = RankerMode.PARTIAL
    # gamma_t = min(c_gamma / t^(1/3), gamma_max); eta_t = c_eta / t^(2/3).
    c_gamma: float = Field(default=0.1, ge=0.0, lt=0.5)
    gamma_max: float = Field(default=0.45, gt=0.0, lt=0.5)
    c_eta: float = Field(default=0.01, gt=0.0)
    # Full-information learning rate c / sqrt(t).
    c_eta_full: float = Field(default=0.01, gt=0.0)
    # Multiplier on gamma in the propensity denominator on mismatch rounds; 1 disables.
    mismatch_boost: float = Field(default=10.0, ge=1.0)

    @model_validator(mode="after")
    def _check_mode(self) -> "ContextualConfig":
        if self.mode == RankerMode.PARTIAL and self.surrogate.kind == SurrogateKind.LISTNET:
            raise ConfigError("ListNet learns from full information only")
        return self

    @property
    def feedback_k(self) -> int:
        if self.mode == RankerMode.FULL_INFORMATION:
            return self.m
        return self.surrogate.required_k(self.m)

    def gamma(self, t: int) -> float:
        return min(self.c_gamma / t ** (1.0 / 3.0), self.gamma_max)

    def eta(self, t: int) -> float:
        if self.mode == RankerMode.FULL_INFORMATION:
            return self.c_eta_full / t**0.5
        return self.c_eta / t ** (2.0 / 3.0)

@dataclass(frozen=True)
class RankerState:
    w: np.ndarray
    t: int = 1
    # Whether the last update scaled up gamma because of a prefix mismatch.
    boosted: bool = False

    @classmethod
    def initial(cls, d: int) -> "RankerState":
        return cls(w=np.zeros(d))

@dataclass(frozen=True)
class Action:
    s_det: np.ndarray
    sigma_det: Permutation
    s_tilde: np.ndarray
    sigma_tilde: Permutation
    explored: bool

def project(w: np.ndarray, U: float) -> np.ndarray:
    """Euclidean projection onto the ball of radius U."""
    norm = float(np.linalg.norm(w))
    if norm <= U:
        return w
    return w * (U / norm)

def _check_features(X: np.ndarray, config: ContextualConfig) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (config.m, config.d):
        raise InputError(f"feature matrix shape {X.shape}, expected ({config.m}, {config.d})")
    return X

def act(state: RankerState, X: np.ndarray, config: ContextualConfig, rng: Rng) -> Action:
    """Score with X w; with probability gamma_t replace the scores by U[0,1]^m."""
    X = _check_features(X, config)
    s = X @ state.w
    sigma = argsort_desc(s, rng)
    if config.mode == RankerMode.RANDOM:
        s_tilde = rng.uniform(0.0, 1.0, config.m)
        return Action(s, sigma, s_tilde, argsort_desc(s_tilde, rng), True)
    if config.mode == RankerMode.FULL_INFORMATION:
        return Action(s, sigma, s, sigma, False)
    if rng.random() < config.gamma(state.t):
        s_tilde = rng.uniform(0.0, 1.0, config.m)
        return Action(s, sigma, s_tilde, argsort_desc(s_tilde, rng), True)
    return Action(s, sigma, s, sigma, False)

def update(
    state: RankerState,
    X: np.ndarray,
    feedback: TopKFeedback,
    action: Action,
    config: ContextualConfig,
) -> RankerState:
    """One projected gradient step from the round's feedback."""
    X = _check_features(X, config)
    t = state.t
    if config.mode == RankerMode.RANDOM:
        return RankerState(w=state.w, t=t + 1)

    sid = config.surrogate
    boosted = False
    if config.mode == RankerMode.FULL_INFORMATION:
        if feedback.k != config.m:
            raise InputError("full-information updates need the whole relevance vector")
        R = np.zeros(config.m)
        R[feedback.items] = feedback.revealed
        z = X.T @ make_surrogate(sid).gradient(action.s_det, R)
    else:
        gamma = config.gamma(t)
        need = sid.required_k(config.m)
        if config.mismatch_boost > 1.0 and not np.array_equal(
            action.sigma_tilde.top(need), action.sigma_det.top(need)
        ):
            gamma = min(gamma * config.mismatch_boost, config.gamma_max)
            boosted = True
        pr = Propensities.from_order(gamma, action.sigma_det.rank_to_item)
        z = estimate_gradient(sid, action.s_det, feedback, pr, X)

    step = config.eta(t) * z
    w = state.w + step if sid.maximize else state.w - step
    return RankerState(w=project(w, config.U), t=t + 1, boosted=boosted)

def _max_row_norm(X: np.ndarray) -> float:
    return float(np.linalg.norm(X, axis=1).max())

def run_contextual(
    config: ContextualConfig,
    stream: Iterable[Tuple[np.ndarray, RelevanceVector]],
    rng: Rng,
    T: Optional[int] = None,
) -> RunLog:
    """Play the stream (first T rounds if given) and log surrogate loss and NDCG@10."""
    rounds = islice(stream, T) if T is not None else stream
    surrogate = make_surrogate(config.surrogate)
    sign = -1.0 if config.surrogate.maximize else 1.0
    state = RankerState.initial(config.d)

    explored: List[bool] = []
    boosted: List[bool] = []
    losses: List[float] = []
    ndcgs: List[float] = []
    r_d = 0.0
    for X, R in rounds:
        X = _check_features(X, config)
        r_d = max(r_d, _max_row_norm(X))
        action = act(state, X, config, rng)
        feedback = TopKFeedback.observe(action.sigma_tilde, R, config.feedback_k)
        losses.append(sign * surrogate.value(action.s_tilde, R.as_float()))
        ndcgs.append(ndcg_at_n(action.sigma_tilde, R, NDCG_CUTOFF))
        state = update(state, X, feedback, action, config)
        explored.append(action.explored)
        boosted.append(state.boosted)

    if not losses:
        raise InputError("empty stream")
    n = len(losses)
    frame = pd.DataFrame(
        {
            "round": np.arange(1, n + 1),
            "explored": np.array(explored, dtype=int),
            "boosted": np.array(boosted, dtype=int),
            "surrogate_loss": losses,
            "avg_ndcg10": np.cumsum(ndcgs) / np.arange(1, n + 1),
        }
    )
    logger.info(
        "%s/%s run finished: T=%d avg NDCG@10 %.4f", config.mode.value, config.surrogate, n, frame["avg_ndcg10"].iloc[-1]
    )
    return RunLog(
        frame=frame,
        metadata={
            "mode": config.mode.value,
            "surrogate": str(config.surrogate),
            "T": n,
            "m": config.m,
            "d": config.d,
            "U": config.U,
            "r_d": r_d,
            "boost_rounds": int(np.sum(boosted)),
            "final_weights_norm": float(np.linalg.norm(state.w)),
        },
    )

# ---------------------------
# Offline comparator
# ---------------------------
def _objective(
    sid: SurrogateId, w: np.ndarray, rounds: Sequence[Tuple[np.ndarray, RelevanceVector]]
) -> Tuple[float, np.ndarray]:
    surrogate = make_surrogate(sid)
    sign = -1.0 if sid.maximize else 1.0
    total, grad = 0.0, np.zeros_like(w)
    for X, R in rounds:
        s = X @ w
        r = R.as_float()
        total += sign * surrogate.value(s, r)
        grad += sign * (X.T @ surrogate.gradient(s, r))
    return total / len(rounds), grad / len(rounds)

def best_fixed_weights(
    sid: SurrogateId,
    rounds: Sequence[Tuple[np.ndarray, RelevanceVector]],
    U: float,
    passes: int = 50,
    eta: float = 1.0,
) -> np.ndarray:
    """Projected full-gradient descent on the average loss; eta halves whenever a step does not improve."""
    if not rounds:
        raise InputError("no rounds to fit")
    d = np.asarray(rounds[0][0]).shape[1]
    w = np.zeros(d)
    best, grad = _objective(sid, w, rounds)
    for _ in range(passes):
        candidate = project(w - eta * grad, U)
        value, cand_grad = _objective(sid, candidate, rounds)
        if value < best:
            w, best, grad = candidate, value, cand_grad
        else:
            eta /= 2.0
    return w

def surrogate_regret(
    log: RunLog,
    sid: SurrogateId,
    rounds: Sequence[Tuple[np.ndarray, RelevanceVector]],
    w_star: np.ndarray,
) -> np.ndarray:
    """Cumulative logged loss minus the cumulative loss of the fixed weights w_star."""
    surrogate = make_surrogate(sid)
    sign = -1.0 if sid.maximize else 1.0
    fixed = np.array([sign * surrogate.value(X @ w_star, R.as_float()) for X, R in rounds])
    played = log.frame["surrogate_loss"].to_numpy()
    if played.size != fixed.size:
        raise InputError(f"log has {played.size} rounds, comparator has {fixed.size}")
    return np.cumsum(played) - np.cumsum(fixed)
