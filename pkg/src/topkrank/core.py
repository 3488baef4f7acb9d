"""Shared types, errors and configuration."""

from __future__ import annotations
import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd
from pydantic import BaseModel, Field, ValidationError
from pydantic.config import ConfigDict

# ---------------------------
# Errors (fail-fast)
# ---------------------------
class CoreError(Exception):
    """Base error type for topkrank."""

class InputError(CoreError):
    """Raised when user input is invalid."""

class DomainError(InputError):
    """Raised when a value lies outside the domain of a measure or grade scale."""

class ParseError(InputError):
    """Raised when a dataset line cannot be parsed."""

    def __init__(self, message: str, *, path: str, line_no: int):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no

class CapacityError(CoreError):
    """Raised when an exhaustive construction would be too large."""

class ConfigError(CoreError):
    """Raised when a configuration or plan is infeasible."""

class StateError(CoreError):
    """Raised when an algorithm state machine is driven out of order."""

class ContractError(CoreError):
    """Raised when an estimator is asked for more than its feedback supports."""

class UnsupportedError(CoreError):
    """Raised when an operation is not defined for the requested measure."""

class SchemaError(CoreError):
    """Raised when a run CSV does not carry the expected columns."""

# ---------------------------
# Application config (JSON file)
# ---------------------------
class AppConfig(BaseModel):
    """Project configuration loaded from a JSON file."""

    model_config = ConfigDict(extra="forbid")

    class Defaults(BaseModel):
        """Defaults applied by the CLI when a flag is omitted."""

        model_config = ConfigDict(extra="forbid")

        seeds: int = Field(default=20, ge=1)
        flip_prob: float = Field(default=0.1, ge=0.0, lt=0.5)
        mismatch_boost: float = Field(default=10.0, ge=1.0)
        smooth_epsilon: float = Field(default=0.01, gt=0.0)
        # Constant factors on the K and epsilon orders of the block plan.
        k_factor: float = Field(default=1.0, gt=0.0)
        epsilon_factor: float = Field(default=1.0, gt=0.0)

    runs_dir: Path = Path("runs")
    # Worker processes for experiment grids; 1 runs grid points in-process.
    max_workers: int = Field(default=2, ge=1)
    defaults: Defaults = Field(default_factory=Defaults)

def load_config(path: Path) -> AppConfig:
    if not path.exists():
        return AppConfig()
    data = json.loads(path.read_text(encoding="utf-8"))
    try:
        return AppConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}: {e}") from e

# ---------------------------
# Randomness
# ---------------------------
Rng = np.random.Generator

def make_rng(seed: int, stream: int = 0) -> Rng:
    """Philox (counter-based, 64-bit) generator keyed by (seed, stream).

    Workers derive independent streams from one base seed by passing their
    grid index as `stream`.
    """
    if seed < 0 or stream < 0:
        raise InputError("seed and stream must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))

# ---------------------------
# Domain types
# ---------------------------
ScoreVector = npt.NDArray[np.float64]

def as_scores(s: Sequence[float] | np.ndarray) -> ScoreVector:
    arr = np.asarray(s, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"score vector must be 1-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("score vector contains non-finite entries")
    return arr

@dataclass(frozen=True, eq=False)
class Permutation:
    """Ranking of items 0..m-1: `rank_to_item[r]` is the item shown at rank r (0 = top)."""

    rank_to_item: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.rank_to_item, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0 or not np.array_equal(np.sort(arr), np.arange(arr.size)):
            raise InputError(f"not a permutation of 0..m-1: {self.rank_to_item!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "rank_to_item", arr)

    @classmethod
    def identity(cls, m: int) -> "Permutation":
        return cls(np.arange(m))

    @classmethod
    def from_ranks(cls, ranks: Sequence[int] | np.ndarray) -> "Permutation":
        """Build from the item -> rank vector (the notation of rank tables)."""
        r = np.asarray(ranks, dtype=np.int64)
        if r.ndim != 1 or not np.array_equal(np.sort(r), np.arange(r.size)):
            raise InputError(f"not a rank vector: {ranks!r}")
        order = np.empty_like(r)
        order[r] = np.arange(r.size)
        return cls(order)

    @property
    def m(self) -> int:
        return int(self.rank_to_item.size)

    @cached_property
    def ranks(self) -> np.ndarray:
        """Item -> rank (0-based)."""
        r = np.empty(self.m, dtype=np.int64)
        r[self.rank_to_item] = np.arange(self.m)
        r.setflags(write=False)
        return r

    def top(self, k: int) -> np.ndarray:
        return self.rank_to_item[:k]

    def one_based(self) -> Tuple[int, ...]:
        return tuple(int(i) + 1 for i in self.rank_to_item)

    def __len__(self) -> int:
        return self.m

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.rank_to_item, other.rank_to_item)

    def __hash__(self) -> int:
        return hash(self.rank_to_item.tobytes())

    def __repr__(self) -> str:
        return f"Permutation({self.rank_to_item.tolist()})"

@dataclass(frozen=True, eq=False)
class RelevanceVector:
    """Integer relevance grades in {0..max_grade}, one per item."""

    grades: np.ndarray
    max_grade: int = 1

    def __post_init__(self) -> None:
        raw = np.asarray(self.grades)
        if raw.ndim != 1 or raw.size == 0:
            raise InputError(f"relevance vector must be 1-D and non-empty, got shape {raw.shape}")
        if self.max_grade < 1:
            raise InputError("max_grade must be >= 1")
        if not np.all(np.isfinite(raw)) or not np.all(raw == np.round(raw)):
            raise DomainError("relevance grades must be integers")
        arr = raw.astype(np.int64)
        if arr.min() < 0 or arr.max() > self.max_grade:
            raise DomainError(f"grades must lie in 0..{self.max_grade}, got {arr.tolist()}")
        arr.setflags(write=False)
        object.__setattr__(self, "grades", arr)

    @classmethod
    def from_bits(cls, bits: str) -> "RelevanceVector":
        """'011' -> binary vector (item 0 first)."""
        return cls(np.array([int(c) for c in bits]), max_grade=1)

    @property
    def m(self) -> int:
        return int(self.grades.size)

    @property
    def is_binary(self) -> bool:
        return bool(self.grades.max() <= 1)

    def as_float(self) -> np.ndarray:
        return self.grades.astype(np.float64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RelevanceVector):
            return NotImplemented
        return self.max_grade == other.max_grade and np.array_equal(self.grades, other.grades)

    def __hash__(self) -> int:
        return hash((self.grades.tobytes(), self.max_grade))

    def __repr__(self) -> str:
        return f"RelevanceVector({self.grades.tolist()}, max_grade={self.max_grade})"

@dataclass(frozen=True, eq=False)
class TopKFeedback:
    """Grades of the k top-ranked items of `perm`: revealed[j] = R(perm(j))."""

    perm: Permutation
    k: int
    revealed: np.ndarray

    def __post_init__(self) -> None:
        if not 1 <= self.k <= self.perm.m:
            raise InputError(f"feedback depth k={self.k} outside 1..{self.perm.m}")
        arr = np.array(self.revealed, dtype=np.int64)
        if arr.shape != (self.k,):
            raise InputError(f"expected {self.k} revealed grades, got {arr.shape}")
        if arr.size and arr.min() < 0:
            raise DomainError("revealed grades must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "revealed", arr)

    @classmethod
    def observe(cls, perm: Permutation, relevance: RelevanceVector, k: int) -> "TopKFeedback":
        return cls(perm=perm, k=k, revealed=relevance.grades[perm.top(k)])

    @property
    def items(self) -> np.ndarray:
        return self.perm.top(self.k)

# ---------------------------
# Operations
# ---------------------------
MAX_ENUMERATION_M = 8

def argsort_desc(s: Sequence[float] | np.ndarray, rng: Rng) -> Permutation:
    """Sort items by descending score; ties are broken uniformly at random with `rng`."""
    scores = as_scores(s)
    if np.unique(scores).size == scores.size:
        order = np.argsort(-scores, kind="stable")
    else:
        # lexsort: last key is primary.
        order = np.lexsort((rng.random(scores.size), -scores))
    return Permutation(order)

def inverse(p: Permutation) -> Permutation:
    return Permutation(p.ranks)

def enumerate_permutations(m: int) -> List[Permutation]:
    """All m! permutations, lexicographic on rank_to_item."""
    if m < 1:
        raise InputError("m must be >= 1")
    if m > MAX_ENUMERATION_M:
        raise CapacityError(f"refusing to enumerate {m}! permutations (limit m <= {MAX_ENUMERATION_M})")
    return [Permutation(np.array(p)) for p in permutations(range(m))]

# ---------------------------
# Run logs
# ---------------------------
@dataclass
class RunLog:
    """Per-round log of one simulated run."""

    frame: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)

    def final(self, column: str) -> float:
        return float(self.frame[column].iloc[-1])

    def write_csv(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
        return path
