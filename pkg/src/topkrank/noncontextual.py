"""Blocked explore/exploit ranking with top-k feedback (non-contextual setting).

The horizon is split into K equal blocks. In every block ceil(m/k) rounds,
chosen without replacement, show one cell of k items on top; the revealed
grades assemble an unbiased estimate of the block's average relevance. All
other rounds play a full-information learner (FTPL) frozen at block start.
"""

from __future__ import annotations
import logging
import math
from itertools import islice
from typing import Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from pydantic.config import ConfigDict

from .core import (
    CapacityError,
    ConfigError,
    DomainError,
    InputError,
    Permutation,
    RelevanceVector,
    Rng,
    RunLog,
    StateError,
    TopKFeedback,
    UnsupportedError,
    argsort_desc,
    as_scores,
    enumerate_permutations,
)
from .measures import MeasureId, MeasureKind, as_loss, discount, evaluate, gain_transform, offset

logger = logging.getLogger(__name__)

EXHAUSTIVE_MAX_M = 6

# ---------------------------
# Configuration
# ---------------------------
class BlockConfig(BaseModel):
    """Horizon T split into K blocks for m items with depth-k feedback."""

    model_config = ConfigDict(frozen=True)

    T: int = Field(ge=1)
    K: int = Field(ge=1)
    k: int = Field(ge=1)
    m: int = Field(ge=1)
    epsilon: float = Field(gt=0.0)
    measure: MeasureId
    # Observe the whole relevance vector every round; no exploration.
    full_information: bool = False

    @model_validator(mode="after")
    def _check_plan(self) -> "BlockConfig":
        if not self.measure.is_linear:
            raise UnsupportedError(f"{self.measure} is not supported by the block learner")
        if self.k > self.m:
            raise ConfigError(f"feedback depth k={self.k} exceeds m={self.m}")
        if self.K > self.T:
            raise ConfigError(f"K={self.K} blocks do not fit in T={self.T} rounds")
        if not self.full_information and self.cells > self.block_size:
            raise ConfigError(
                f"block of {self.block_size} rounds cannot explore {self.cells} cells (T={self.T}, K={self.K})"
            )
        return self

    @property
    def cells(self) -> int:
        return math.ceil(self.m / self.k)

    @property
    def block_size(self) -> int:
        return self.T // self.K

    @property
    def remainder(self) -> int:
        """Rounds after the last full block; played exploitation-only."""
        return self.T - self.K * self.block_size

def plan_blocks(
    T: int,
    m: int,
    k: int,
    measure: MeasureId,
    *,
    K: Optional[int] = None,
    max_grade: int = 1,
    k_factor: float = 1.0,
    epsilon_factor: float = 1.0,
    full_information: bool = False,
) -> BlockConfig:
    """Choose K ~ m^(1/3) T^(2/3) / cells^(2/3) and epsilon ~ 1/sqrt(mK)."""
    if m < 1 or k < 1:
        raise InputError("m and k must be >= 1")
    if T < m:
        raise ConfigError(f"horizon T={T} shorter than m={m}")
    cells = math.ceil(m / min(k, m))
    if full_information:
        K = T if K is None else K
    else:
        if T < m * cells:
            raise ConfigError(f"horizon T={T} too short: need at least m * ceil(m/k) = {m * cells}")
        if K is None:
            raw = round(m ** (1 / 3) * T ** (2 / 3) / cells ** (2 / 3) * k_factor)
            K = int(min(max(raw, 1), T // cells))

    epsilon = 1.0 / math.sqrt(m * K)
    if measure.kind == MeasureKind.DCG:
        epsilon /= (2**max_grade - 1) ** 2
    epsilon *= epsilon_factor
    logger.debug("block plan: T=%d m=%d k=%d -> K=%d epsilon=%.3g", T, m, k, K, epsilon)
    return BlockConfig(T=T, K=K, k=k, m=m, epsilon=epsilon, measure=measure, full_information=full_information)

# ---------------------------
# Exploration
# ---------------------------
def cell_items(cell_index: int, m: int, k: int) -> np.ndarray:
    """Items of cell j: (jk, ..., min((j+1)k, m) - 1)."""
    cells = math.ceil(m / k)
    if not 0 <= cell_index < cells:
        raise InputError(f"cell {cell_index} outside 0..{cells - 1}")
    return np.arange(cell_index * k, min((cell_index + 1) * k, m))

def exploration_perm(cell_index: int, m: int, k: int) -> Permutation:
    """The cell's items on top in cell order, every other item after them ascending."""
    top = cell_items(cell_index, m, k)
    rest = np.setdiff1d(np.arange(m), top)
    return Permutation(np.concatenate([top, rest]))

def sample_exploration_rounds(block_size: int, n_cells: int, rng: Rng) -> np.ndarray:
    """Distinct in-block offsets; entry j is the round that explores cell j."""
    if n_cells > block_size:
        raise ConfigError(f"cannot place {n_cells} exploration rounds in a block of {block_size}")
    return rng.choice(block_size, size=n_cells, replace=False)

def assemble_estimate(
    feedbacks: Sequence[Optional[TopKFeedback]],
    m: int,
    k: int,
    measure: MeasureId,
) -> np.ndarray:
    """Relevance estimate from one exploration feedback per cell (transformed for DCG)."""
    cells = math.ceil(m / k)
    if len(feedbacks) != cells:
        raise StateError(f"expected feedback for {cells} cells, got {len(feedbacks)}")
    estimate = np.zeros(m)
    for j, fb in enumerate(feedbacks):
        if fb is None:
            raise StateError(f"no exploration feedback for cell {j}")
        items = cell_items(j, m, k)
        if not np.array_equal(fb.items[: items.size], items):
            raise StateError(f"feedback for cell {j} does not show the cell's items on top")
        estimate[items] = gain_transform(measure, fb.revealed[: items.size])
    return estimate

def block_estimate(
    block_relevances: np.ndarray,
    offsets: np.ndarray,
    k: int,
    measure: MeasureId,
) -> np.ndarray:
    """Estimate a block would produce had exploration happened at `offsets`."""
    block = np.asarray(block_relevances)
    m = block.shape[1]
    feedbacks: List[Optional[TopKFeedback]] = []
    for j, t in enumerate(offsets):
        perm = exploration_perm(j, m, k)
        feedbacks.append(TopKFeedback.observe(perm, RelevanceVector(block[t], max_grade=max(1, int(block.max()))), k))
    return assemble_estimate(feedbacks, m, k, measure)

# ---------------------------
# Full-information learner
# ---------------------------
def ftpl_step(s_hat: np.ndarray, epsilon: float, rng: Rng) -> Permutation:
    """Sort s_hat + p, p ~ U[0, 1/epsilon]^m, descending."""
    if epsilon <= 0:
        raise InputError("epsilon must be > 0")
    s = as_scores(s_hat)
    return argsort_desc(s + rng.uniform(0.0, 1.0 / epsilon, s.size), rng)

class FullInformationLearner(Protocol):
    def act(self, rng: Rng) -> Permutation: ...

    def update(self, vector: np.ndarray) -> None: ...

class FTPL:
    """Follow the perturbed leader on accumulated (transformed) relevance."""

    def __init__(self, m: int, epsilon: float):
        self.epsilon = epsilon
        self.s_hat = np.zeros(m)

    def act(self, rng: Rng) -> Permutation:
        return ftpl_step(self.s_hat, self.epsilon, rng)

    def update(self, vector: np.ndarray) -> None:
        self.s_hat = self.s_hat + np.asarray(vector, dtype=np.float64)

# ---------------------------
# Best fixed ranking in hindsight
# ---------------------------
def _rank_discount(measure: MeasureId, m: int) -> np.ndarray:
    # Identity ranks item i at rank i, so this is f(rank 1), ..., f(rank m).
    return discount(measure, Permutation.identity(m))

def best_in_hindsight(
    measure: MeasureId,
    cumulative_g: np.ndarray,
    cumulative_offset: float = 0.0,
) -> Tuple[Permutation, float]:
    """Sort the summed (transformed) relevance; value in the measure's orientation."""
    g = as_scores(cumulative_g)
    perm = Permutation(np.argsort(-g, kind="stable"))
    value = float(np.dot(discount(measure, perm), g)) + cumulative_offset
    return perm, value

def best_in_hindsight_exhaustive(
    measure: MeasureId, relevances: Sequence[RelevanceVector]
) -> Tuple[Permutation, float]:
    """Brute force over all m! rankings (m <= 6)."""
    m = relevances[0].m
    if m > EXHAUSTIVE_MAX_M:
        raise CapacityError(f"exhaustive oracle limited to m <= {EXHAUSTIVE_MAX_M}")
    best: Optional[Tuple[Permutation, float]] = None
    for perm in enumerate_permutations(m):
        total = sum(as_loss(measure, evaluate(measure, perm, R)) for R in relevances)
        if best is None or total < best[1] - 1e-12:
            best = (perm, total)
    assert best is not None
    return best[0], as_loss(measure, best[1])

# ---------------------------
# Run
# ---------------------------
def _stack_stream(stream: Iterable[RelevanceVector] | np.ndarray, T: int, m: int) -> np.ndarray:
    if isinstance(stream, np.ndarray):
        rows = stream[:T]
    else:
        vectors = list(islice(stream, T))
        rows = np.stack([R.grades for R in vectors]) if vectors else np.zeros((0, m), dtype=np.int64)
    if rows.shape[0] < T:
        raise InputError(f"stream yielded {rows.shape[0]} rounds, need T={T}")
    if rows.shape[1] != m:
        raise InputError(f"stream vectors have {rows.shape[1]} items, config has m={m}")
    return np.asarray(rows, dtype=np.int64)

def run_noncontextual(
    config: BlockConfig,
    stream: Iterable[RelevanceVector] | np.ndarray,
    rng: Rng,
    learner: Optional[FullInformationLearner] = None,
) -> RunLog:
    """Play T rounds against an oblivious relevance stream and log regret."""
    T, m, k, measure = config.T, config.m, config.k, config.measure
    grades = _stack_stream(stream, T, m)
    if measure.binary_only and grades.max(initial=0) > 1:
        raise DomainError(f"{measure} needs binary relevance")
    learner = learner or FTPL(m, config.epsilon)

    G = gain_transform(measure, grades)
    offsets = np.array([offset(measure, RelevanceVector(row, max_grade=max(1, int(row.max())))) for row in grades])
    ranks = np.empty((T, m), dtype=np.int64)
    explored = np.zeros(T, dtype=bool)

    B = config.block_size
    for i in range(config.K):
        start = i * B
        if config.full_information:
            for t in range(start, start + B):
                ranks[t] = learner.act(rng).ranks
            learner.update(G[start : start + B].mean(axis=0))
            continue

        explore_at = {int(off): j for j, off in enumerate(sample_exploration_rounds(B, config.cells, rng))}
        feedbacks: List[Optional[TopKFeedback]] = [None] * config.cells
        for t in range(start, start + B):
            cell = explore_at.get(t - start)
            if cell is None:
                ranks[t] = learner.act(rng).ranks
                continue
            perm = exploration_perm(cell, m, k)
            feedbacks[cell] = TopKFeedback(perm=perm, k=k, revealed=grades[t, perm.top(k)])
            ranks[t] = perm.ranks
            explored[t] = True
        learner.update(assemble_estimate(feedbacks, m, k, measure))

    for t in range(config.K * B, T):
        ranks[t] = learner.act(rng).ranks

    f = _rank_discount(measure, m)
    values = (f[ranks] * G).sum(axis=1) + offsets
    cum_g = np.cumsum(G, axis=0)
    best_values = -np.sort(-cum_g, axis=1) @ f + np.cumsum(offsets)

    sign = -1.0 if measure.is_gain else 1.0
    loss = sign * values
    cum_loss = np.cumsum(loss)
    best_cum_loss = sign * best_values
    rounds = np.arange(1, T + 1)
    frame = pd.DataFrame(
        {
            "round": rounds,
            "phase": np.where(explored, "explore", "exploit"),
            "loss": loss,
            "cum_loss": cum_loss,
            "best_cum_loss": best_cum_loss,
            "avg_regret": (cum_loss - best_cum_loss) / rounds,
        }
    )
    logger.info(
        "%s run finished: T=%d K=%d k=%d final avg regret %.4g",
        measure,
        T,
        config.K,
        k,
        frame["avg_regret"].iloc[-1],
    )
    return RunLog(
        frame=frame,
        metadata={
            "measure": measure.label,
            "T": T,
            "K": config.K,
            "k": k,
            "m": m,
            "epsilon": config.epsilon,
            "block_size": B,
            "full_information": config.full_information,
        },
    )
