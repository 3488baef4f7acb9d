"""Finite partial-monitoring game of top-1 ranking feedback and its observability.

Learner actions are all m! rankings, ordered lexicographically on the
item -> rank vector (row sigma_4 = "2 3 1" puts item 1 at rank 2). Adversary
actions are all relevance vectors in {0..n}^m, lexicographic. Gains are stored
negated so every matrix is a loss matrix.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .core import CapacityError, DomainError, Permutation, RelevanceVector, UnsupportedError
from .core import enumerate_permutations, inverse
from .measures import SUM_LOSS, MeasureId, MeasureKind, discount, evaluate, gain_transform, offset

logger = logging.getLogger(__name__)

MAX_GAME_M = 6
MAX_OUTCOMES = 4096
# "in span" below SPAN_TOL; a failure is only asserted above NOT_IN_SPAN_TOL.
SPAN_TOL = 1e-9
NOT_IN_SPAN_TOL = 1e-3
_RANK_TOL = 1e-10

@dataclass(frozen=True)
class GameMatrices:
    measure: MeasureId
    m: int
    n: int
    loss: np.ndarray
    feedback: np.ndarray
    learner_actions: Tuple[Permutation, ...]
    adversary_actions: Tuple[RelevanceVector, ...]
    negated: bool

    @property
    def num_actions(self) -> int:
        return len(self.learner_actions)

    @property
    def num_outcomes(self) -> int:
        return len(self.adversary_actions)

    def reported_loss(self) -> np.ndarray:
        """Matrix in the measure's own orientation (gains un-negated)."""
        return -self.loss if self.negated else self.loss

    def action_index(self, perm: Permutation) -> int:
        return self.learner_actions.index(perm)

class SpanResult(BaseModel):
    holds: bool
    residual: float
    worst_pair: Optional[Tuple[int, int]] = None

    @property
    def decisive(self) -> bool:
        return self.holds or self.residual > NOT_IN_SPAN_TOL

class LocalResult(BaseModel):
    pair: Tuple[int, int]
    neighborhood: Tuple[int, ...]
    holds: bool
    residual: float

class ObservabilityReport(BaseModel):
    measure: str
    m: int
    n: int
    global_holds: bool
    global_residual: float
    worst_pair: Optional[Tuple[int, int]] = None
    local: List[LocalResult] = []

def learner_actions(m: int) -> List[Permutation]:
    # inverse() of the rank->item lexicographic list is lexicographic on ranks.
    return [inverse(p) for p in enumerate_permutations(m)]

def adversary_actions(m: int, n: int) -> List[RelevanceVector]:
    return [RelevanceVector(np.array(g), max_grade=n) for g in product(range(n + 1), repeat=m)]

def build_game(measure: MeasureId, m: int, n: int = 1) -> GameMatrices:
    if m < 1 or n < 1:
        raise DomainError("m and n must be >= 1")
    if m > MAX_GAME_M or (n + 1) ** m > MAX_OUTCOMES:
        raise CapacityError(f"game too large: m={m}, (n+1)^m={(n + 1) ** m}")
    if measure.binary_only and n > 1:
        raise DomainError(f"{measure} is defined for binary relevance only")

    actions = learner_actions(m)
    outcomes = adversary_actions(m, n)
    grades = np.stack([R.grades for R in outcomes])

    if measure.is_linear:
        F = np.stack([discount(measure, p) for p in actions])
        G = gain_transform(measure, grades)
        values = F @ G.T + np.array([offset(measure, R) for R in outcomes])[None, :]
    else:
        values = np.array([[evaluate(measure, p, R) for R in outcomes] for p in actions])

    tops = np.array([p.rank_to_item[0] for p in actions])
    feedback = grades[:, tops].T.astype(np.int64)
    loss = -values if measure.is_gain else values
    logger.debug("built %s game: %d actions x %d outcomes", measure, len(actions), len(outcomes))
    return GameMatrices(
        measure=measure,
        m=m,
        n=n,
        loss=loss,
        feedback=feedback,
        learner_actions=tuple(actions),
        adversary_actions=tuple(outcomes),
        negated=measure.is_gain,
    )

def signal_matrices(g: GameMatrices) -> np.ndarray:
    """Stack of S_i, shape (actions, n+1, outcomes): S_i[v, l] = 1(H[i, l] == v)."""
    symbols = np.arange(g.n + 1)
    return (g.feedback[:, None, :] == symbols[None, :, None]).astype(np.float64)

def _span_basis(columns: np.ndarray) -> np.ndarray:
    """Orthonormal basis (outcomes x rank) of the column span."""
    u, svals, _ = np.linalg.svd(columns, full_matrices=False)
    if svals.size == 0 or svals[0] == 0.0:
        return np.zeros((columns.shape[0], 0))
    rank = int((svals > _RANK_TOL * svals[0]).sum())
    return u[:, :rank]

def _signal_columns(signals: np.ndarray, actions: Iterable[int]) -> np.ndarray:
    # Columns of S_k^T are the rows of S_k.
    return np.concatenate([signals[k] for k in actions], axis=0).T

def _relative_residual(basis: np.ndarray, v: np.ndarray) -> float:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return 0.0
    r = v - basis @ (basis.T @ v)
    return float(np.linalg.norm(r)) / norm

def global_observability(g: GameMatrices) -> SpanResult:
    """Every loss difference must lie in the span of all signal columns."""
    signals = signal_matrices(g)
    basis = _span_basis(_signal_columns(signals, range(g.num_actions)))
    L = g.loss
    # The residual map is linear, so residual(l_i - l_j) = P_i - P_j.
    P = L - (L @ basis) @ basis.T
    worst, worst_pair = 0.0, None
    for i in range(g.num_actions - 1):
        num = np.linalg.norm(P[i] - P[i + 1 :], axis=1)
        den = np.linalg.norm(L[i] - L[i + 1 :], axis=1)
        rel = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        j = int(np.argmax(rel))
        if rel[j] > worst:
            worst, worst_pair = float(rel[j]), (i, i + 1 + j)
    return SpanResult(holds=worst < SPAN_TOL, residual=worst, worst_pair=worst_pair)

def neighbor_pairs(m: int, measure: MeasureId = SUM_LOSS) -> List[Tuple[int, int]]:
    """Index pairs (into `learner_actions(m)`) differing by one adjacent transposition."""
    if not measure.strictly_monotone:
        raise UnsupportedError(f"neighbour actions are not characterised for {measure}")
    actions = learner_actions(m)
    index: Dict[bytes, int] = {p.rank_to_item.tobytes(): i for i, p in enumerate(actions)}
    pairs: List[Tuple[int, int]] = []
    for i, p in enumerate(actions):
        for r in range(m - 1):
            order = p.rank_to_item.copy()
            order[r], order[r + 1] = order[r + 1], order[r]
            j = index[order.tobytes()]
            if i < j:
                pairs.append((i, j))
    return sorted(pairs)

def neighbor_pairs_sumloss(m: int) -> List[Tuple[int, int]]:
    return neighbor_pairs(m, SUM_LOSS)

def local_observability(
    g: GameMatrices,
    pair: Tuple[int, int],
    neighborhood: Optional[Sequence[int]] = None,
) -> LocalResult:
    """Span test of l_i - l_j against the signal columns of the neighbourhood only."""
    i, j = pair
    hood = tuple(sorted(set(neighborhood) if neighborhood is not None else {i, j}))
    signals = signal_matrices(g)
    basis = _span_basis(_signal_columns(signals, hood))
    residual = _relative_residual(basis, g.loss[i] - g.loss[j])
    return LocalResult(pair=(i, j), neighborhood=hood, holds=residual < SPAN_TOL, residual=residual)

def pareto_witness(g: GameMatrices, a: int) -> np.ndarray:
    """Distribution over unit relevance vectors under which action `a` is optimal.

    Item at rank r gets weight proportional to m - r, so the expected
    relevance sorts exactly as action a.
    """
    perm = g.learner_actions[a]
    p = np.zeros(g.num_outcomes)
    for r, item in enumerate(perm.rank_to_item):
        unit = np.zeros(g.m, dtype=np.int64)
        unit[item] = 1
        col = g.adversary_actions.index(RelevanceVector(unit, max_grade=g.n))
        p[col] = g.m - r
    return p / p.sum()

def sumloss_reconstruction(g: GameMatrices) -> float:
    """Rebuild each SumLoss row from top-1 signals; returns the max abs deviation.

    l_a = sum_j j * (row "grade 1" of S for any action with sigma_a(j) on top).
    """
    if g.measure.kind != MeasureKind.SUM_LOSS or g.n != 1:
        raise UnsupportedError("reconstruction identity holds for binary SumLoss")
    signals = signal_matrices(g)
    top_row: Dict[int, np.ndarray] = {}
    for k, p in enumerate(g.learner_actions):
        top_row.setdefault(int(p.rank_to_item[0]), signals[k][1])
    worst = 0.0
    for a, p in enumerate(g.learner_actions):
        rebuilt = sum((r + 1) * top_row[int(item)] for r, item in enumerate(p.rank_to_item))
        worst = max(worst, float(np.max(np.abs(rebuilt - g.loss[a]))))
    return worst

def action_label(perm: Permutation) -> str:
    return "".join(str(int(r) + 1) for r in perm.ranks)

def outcome_label(R: RelevanceVector) -> str:
    return "".join(str(int(v)) for v in R.grades)

def dump_matrices(g: GameMatrices, directory: Path) -> Tuple[Path, Path]:
    """Write loss.csv / feedback.csv laid out like the rank tables."""
    directory.mkdir(parents=True, exist_ok=True)
    index = pd.Index([action_label(p) for p in g.learner_actions], name="objects")
    columns = [outcome_label(R) for R in g.adversary_actions]
    loss_path = directory / "loss.csv"
    feedback_path = directory / "feedback.csv"
    pd.DataFrame(g.reported_loss(), index=index, columns=columns).to_csv(
        loss_path, float_format="%.10g", lineterminator="\n"
    )
    pd.DataFrame(g.feedback, index=index, columns=columns).to_csv(feedback_path, lineterminator="\n")
    return loss_path, feedback_path

def observability_report(measure: MeasureId, m: int, n: int = 1) -> ObservabilityReport:
    g = build_game(measure, m, n)
    glob = global_observability(g)
    local: List[LocalResult] = []
    if measure.strictly_monotone and m >= 2:
        # First neighbour pair: (sigma_1, sigma_2) with N+ = {sigma_1, sigma_2}.
        local.append(local_observability(g, neighbor_pairs(m, measure)[0]))
    return ObservabilityReport(
        measure=measure.label,
        m=m,
        n=n,
        global_holds=glob.holds,
        global_residual=glob.residual,
        worst_pair=glob.worst_pair,
        local=local,
    )
