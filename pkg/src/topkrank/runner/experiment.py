"""Experiment pipeline: grid of (curve, seed) runs, median aggregation and artifacts."""

from __future__ import annotations
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator
from pydantic.config import ConfigDict
from tqdm import tqdm

from ..adversary import simulated_stream
from ..contextual import ContextualConfig, RankerMode, run_contextual
from ..core import ConfigError, RunLog, SchemaError, make_rng
from ..datasets import Dataset, load_svmlight_ranking, synthesize_contextual
from ..measures import MeasureId
from ..noncontextual import plan_blocks, run_noncontextual
from ..surrogates import SurrogateId, SurrogateKind
from .io import Workspace, append_log, make_workspace
from .metadata import write_run_metadata

logger = logging.getLogger(__name__)

AGGREGATED_COLUMNS = ["round", "median", "q25", "q75"]
# Learner generators use streams from here on; lower streams belong to data.
_LEARNER_STREAM = 100

class Scenario(str, Enum):
    FIG1 = "fig1"  # effect of the number of blocks K
    FIG2 = "fig2"  # effect of the feedback depth k
    FIG3 = "fig3"  # top-1 feedback vs full-information FTPL
    CONTEXTUAL = "contextual"

class ExperimentSpec(BaseModel):
    """Resolved experiment settings.

    Grid point seeds come from `seeds`. Each learner draws from stream 100 + curve index of its
    seed, so adding or reordering seeds never shifts the data streams (0-2) and curves stay
    independent of one another.
    """

    model_config = ConfigDict(extra="forbid")

    scenario: Scenario
    seeds: List[int]
    out_dir: Path

    # Non-contextual scenarios
    measure: str = "dcg"
    m: int = Field(default=20, ge=2)
    T: int = Field(default=10_000, ge=1)
    ones: int = Field(default=5, ge=0)
    flip_prob: float = Field(default=0.1, ge=0.0, lt=0.5)
    K_values: List[int] = Field(default_factory=lambda: [10, 200, 400])
    k_values: List[int] = Field(default_factory=lambda: [1, 5, 10])
    # Fixed K for fig2/fig3; None plans K from (T, m, k).
    K: Optional[int] = 200
    k_factor: float = Field(default=1.0, gt=0.0)
    epsilon_factor: float = Field(default=1.0, gt=0.0)

    # Contextual scenario
    surrogates: List[str] = Field(default_factory=lambda: ["squared", "ranksvm", "kl", "smoothdcg"])
    baselines: List[str] = Field(default_factory=lambda: ["listnet", "random"])
    data: Optional[Path] = None
    num_queries: int = Field(default=500, ge=1)
    d: int = Field(default=10, ge=1)
    noise: float = Field(default=0.1, ge=0.0)
    data_seed: int = Field(default=0, ge=0)
    U: float = Field(default=10.0, gt=0.0)
    c_gamma: float = Field(default=0.1, ge=0.0, lt=0.5)
    c_eta: float = Field(default=0.01, gt=0.0)
    c_eta_full: float = Field(default=0.01, gt=0.0)
    mismatch_boost: float = Field(default=10.0, ge=1.0)
    smooth_epsilon: float = Field(default=0.01, gt=0.0)

    @field_validator("seeds")
    @classmethod
    def _check_seeds(cls, v: List[int]) -> List[int]:
        if not v:
            raise ConfigError("empty seed list")
        if min(v) < 0 or len(set(v)) != len(v):
            raise ConfigError(f"seeds must be distinct and non-negative: {v}")
        return v

    @field_validator("baselines")
    @classmethod
    def _check_baselines(cls, v: List[str]) -> List[str]:
        unknown = sorted(set(v) - {"listnet", "random"})
        if unknown:
            raise ConfigError(f"unknown baselines: {unknown}")
        return v

    @property
    def column(self) -> str:
        """Per-round column aggregated across seeds."""
        return "avg_ndcg10" if self.scenario == Scenario.CONTEXTUAL else "avg_regret"

class GridPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    curve_index: int
    curve: str
    seed: int
    params: Dict[str, Any]

class PointFailure(BaseModel):
    curve: str
    seed: int
    error: str

class ExperimentResult(BaseModel):
    artifact_dir: Path
    column: str
    curves: List[str]
    failures: List[PointFailure] = []

    @property
    def ok(self) -> bool:
        return not self.failures

# ---------------------------
# Grid
# ---------------------------
def curves(spec: ExperimentSpec) -> List[Tuple[str, Dict[str, Any]]]:
    if spec.scenario == Scenario.FIG1:
        return [(f"K{K}", {"k": 1, "K": K}) for K in spec.K_values]
    if spec.scenario == Scenario.FIG2:
        return [(f"k{k}", {"k": k, "K": spec.K}) for k in spec.k_values]
    if spec.scenario == Scenario.FIG3:
        return [
            ("top1", {"k": 1, "K": spec.K}),
            ("full_information", {"k": spec.m, "K": None, "full_information": True}),
        ]
    out: List[Tuple[str, Dict[str, Any]]] = []
    for name in spec.surrogates:
        sid = SurrogateId.parse(name, epsilon=spec.smooth_epsilon)
        out.append((f"partial_{sid.kind.value}", {"mode": RankerMode.PARTIAL.value, "surrogate": sid.kind.value}))
    if "listnet" in spec.baselines:
        out.append(("listnet", {"mode": RankerMode.FULL_INFORMATION.value, "surrogate": SurrogateKind.LISTNET.value}))
    if "random" in spec.baselines:
        out.append(("random", {"mode": RankerMode.RANDOM.value, "surrogate": SurrogateKind.SQUARED.value}))
    return out

def grid_points(spec: ExperimentSpec) -> List[GridPoint]:
    return [
        GridPoint(curve_index=i, curve=name, seed=seed, params=params)
        for i, (name, params) in enumerate(curves(spec))
        for seed in sorted(spec.seeds)
    ]

# ---------------------------
# One grid point
# ---------------------------
def _dataset(spec: ExperimentSpec) -> Dataset:
    if spec.data is not None:
        data = load_svmlight_ranking(spec.data)
    else:
        data = synthesize_contextual(spec.num_queries, spec.m, spec.d, spec.noise, seed=spec.data_seed)
    return data.fixed_length(spec.m)

def run_point(spec: ExperimentSpec, point: GridPoint) -> RunLog:
    rng = make_rng(point.seed, stream=_LEARNER_STREAM + point.curve_index)
    p = point.params
    if spec.scenario != Scenario.CONTEXTUAL:
        measure = MeasureId.parse(spec.measure)
        # Same relevance stream for every curve of a seed.
        stream = simulated_stream(m=spec.m, ones=spec.ones, flip_prob=spec.flip_prob, T=spec.T, seed=point.seed)
        config = plan_blocks(
            spec.T,
            spec.m,
            p["k"],
            measure,
            K=p.get("K"),
            k_factor=spec.k_factor,
            epsilon_factor=spec.epsilon_factor,
            full_information=p.get("full_information", False),
        )
        return run_noncontextual(config, stream.grades, rng)

    data = _dataset(spec)
    config = ContextualConfig(
        m=spec.m,
        d=data.d,
        U=spec.U,
        surrogate=SurrogateId(kind=SurrogateKind(p["surrogate"]), epsilon=spec.smooth_epsilon),
        mode=RankerMode(p["mode"]),
        c_gamma=spec.c_gamma,
        c_eta=spec.c_eta,
        c_eta_full=spec.c_eta_full,
        mismatch_boost=spec.mismatch_boost,
    )
    rounds = data.iter_rounds(spec.T, make_rng(point.seed, stream=2))
    return run_contextual(config, rounds, rng)

def _execute(spec: ExperimentSpec, point: GridPoint) -> Tuple[GridPoint, Optional[RunLog], Optional[str], int]:
    t0 = time.perf_counter()
    try:
        log, error = run_point(spec, point), None
    except Exception as e:
        log, error = None, f"{type(e).__name__}: {e}\n{traceback.format_exc()}"
    return point, log, error, int((time.perf_counter() - t0) * 1000)

# ---------------------------
# Aggregation
# ---------------------------
def aggregate_runs(frames: Dict[int, pd.DataFrame], column: str) -> pd.DataFrame:
    """Median and quartiles of `column` across seeds, round by round."""
    if not frames:
        raise SchemaError("nothing to aggregate")
    ordered = [frames[s] for s in sorted(frames)]
    for f in ordered:
        missing = {"round", column} - set(f.columns)
        if missing:
            raise SchemaError(f"run frame lacks columns {sorted(missing)}")
    lengths = {len(f) for f in ordered}
    if len(lengths) != 1:
        raise SchemaError(f"runs disagree on length: {sorted(lengths)}")
    values = np.stack([f[column].to_numpy(dtype=np.float64) for f in ordered])
    q25, q75 = np.quantile(values, [0.25, 0.75], axis=0)
    return pd.DataFrame(
        {
            "round": ordered[0]["round"].to_numpy(),
            "median": np.median(values, axis=0),
            "q25": q25,
            "q75": q75,
        }
    )

_PLOT_SCRIPT = '''"""Plot aggregated curves (median with interquartile band). Requires matplotlib."""

from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

HERE = Path(__file__).resolve().parent
AGGREGATED = HERE.parent / "aggregated"
CURVES = {curves!r}

fig, ax = plt.subplots(figsize=(7, 4))
for name in CURVES:
    df = pd.read_csv(AGGREGATED / f"{{name}}.csv")
    ax.plot(df["round"], df["median"], label=name)
    ax.fill_between(df["round"], df["q25"], df["q75"], alpha=0.2)
ax.set_xlabel("round")
ax.set_ylabel({column!r})
ax.set_title({title!r})
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "curves.png", dpi=150)
'''

def write_plot_script(ws: Workspace, curve_names: Sequence[str], column: str, title: str) -> Path:
    path = ws.plots_dir / "plot_curves.py"
    path.write_text(_PLOT_SCRIPT.format(curves=list(curve_names), column=column, title=title), encoding="utf-8")
    return path

def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    return path

# ---------------------------
# Pipeline
# ---------------------------
def run_experiment(spec: ExperimentSpec, *, max_workers: int = 1, progress: bool = True) -> ExperimentResult:
    """Run every (curve, seed) grid point, then aggregate and write artifacts."""
    t0 = time.perf_counter()

    # 1) workspace + resolved spec
    ws = make_workspace(spec.out_dir)
    ws.spec_path.write_text(spec.model_dump_json(indent=2) + "\n", encoding="utf-8")

    # 2) grid points (in-process or worker pool)
    points = grid_points(spec)
    results: Dict[Tuple[str, int], Tuple[GridPoint, Optional[RunLog], Optional[str], int]] = {}
    bar = tqdm(total=len(points), desc=spec.scenario.value, disable=not progress)
    if max_workers <= 1:
        for point in points:
            results[(point.curve, point.seed)] = _execute(spec, point)
            bar.update(1)
    else:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(_execute, spec, point) for point in points]
            for fut in as_completed(futures):
                point, log, error, ms = fut.result()
                results[(point.curve, point.seed)] = (point, log, error, ms)
                bar.update(1)
    bar.close()

    # 3) per-point CSVs and log sections, in grid order
    failures: List[PointFailure] = []
    frames: Dict[str, Dict[int, pd.DataFrame]] = {}
    for point in points:
        _, log, error, ms = results[(point.curve, point.seed)]
        title = f"{point.curve} seed={point.seed}"
        if log is None:
            failures.append(PointFailure(curve=point.curve, seed=point.seed, error=(error or "").splitlines()[0]))
            append_log(ws.log_path, title=title, params=point.params, status="failed", runtime_ms=ms, error=error)
            logger.warning("grid point %s failed: %s", title, failures[-1].error)
            continue
        log.write_csv(ws.run_csv(point.curve, point.seed))
        frames.setdefault(point.curve, {})[point.seed] = log.frame
        append_log(
            ws.log_path,
            title=title,
            params={**point.params, **log.metadata},
            status="ok",
            runtime_ms=ms,
        )

    # 4) aggregation + plot script
    names = [name for name, _ in curves(spec) if name in frames]
    for name in names:
        _write_frame(aggregate_runs(frames[name], spec.column), ws.aggregated_csv(name))
    write_plot_script(ws, names, spec.column, title=spec.scenario.value)

    # 5) metadata: versions + artifact digests
    result = ExperimentResult(artifact_dir=ws.out_dir, column=spec.column, curves=names, failures=failures)
    write_run_metadata(
        ws,
        spec=spec.model_dump(mode="json"),
        curves=names,
        failures=[f.model_dump() for f in failures],
        runtime_ms=int((time.perf_counter() - t0) * 1000),
    )
    return result

# ---------------------------
# Comparison
# ---------------------------
class CurveSummary(BaseModel):
    source: str
    curve: str
    rounds: int
    final_median: float
    # Least-squares slope of log(median * round) against log(round) over the tail.
    tail_slope: Optional[float] = None

class CompareReport(BaseModel):
    curves: List[CurveSummary]

def read_aggregated(path: Path) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = [c for c in AGGREGATED_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    return df

def tail_slope(rounds: np.ndarray, median: np.ndarray, start_fraction: float = 0.2) -> Optional[float]:
    """Log-log slope of the cumulative curve median * round over round >= start_fraction * last round."""
    rounds = np.asarray(rounds, dtype=np.float64)
    cumulative = np.asarray(median, dtype=np.float64) * rounds
    mask = (rounds >= start_fraction * rounds[-1]) & (cumulative > 0)
    if mask.sum() < 2:
        return None
    slope, _ = np.polyfit(np.log(rounds[mask]), np.log(cumulative[mask]), 1)
    return float(slope)

def compare_report(dirs: Sequence[Path]) -> CompareReport:
    rows: List[CurveSummary] = []
    for d in dirs:
        agg_dir = Path(d) / "aggregated"
        paths = sorted(agg_dir.glob("*.csv"))
        if not paths:
            raise SchemaError(f"{d}: no aggregated curves")
        for path in paths:
            df = read_aggregated(path)
            rows.append(
                CurveSummary(
                    source=str(d),
                    curve=path.stem,
                    rounds=int(len(df)),
                    final_median=float(df["median"].iloc[-1]),
                    tail_slope=tail_slope(df["round"].to_numpy(), df["median"].to_numpy()),
                )
            )
    return CompareReport(curves=rows)
