"""Filesystem layout and the human-readable run log of an experiment."""

from __future__ import annotations
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

@dataclass(frozen=True)
class Workspace:
    """Filesystem layout for a single experiment."""
    out_dir: Path

    inputs_dir: Path
    runs_dir: Path
    aggregated_dir: Path
    plots_dir: Path
    logs_dir: Path
    metadata_dir: Path
    log_path: Path  # logs/run.log
    spec_path: Path  # inputs/spec.json

    def run_csv(self, curve: str, seed: int) -> Path:
        return self.runs_dir / curve / f"seed_{seed}.csv"

    def aggregated_csv(self, curve: str) -> Path:
        return self.aggregated_dir / f"{curve}.csv"

def make_workspace(out_dir: Path) -> Workspace:
    out_dir = Path(out_dir)
    ws = Workspace(
        out_dir=out_dir,
        inputs_dir=out_dir / "inputs",
        runs_dir=out_dir / "runs",
        aggregated_dir=out_dir / "aggregated",
        plots_dir=out_dir / "plots",
        logs_dir=out_dir / "logs",
        metadata_dir=out_dir / "metadata",
        log_path=out_dir / "logs" / "run.log",
        spec_path=out_dir / "inputs" / "spec.json",
    )
    for d in (ws.inputs_dir, ws.runs_dir, ws.aggregated_dir, ws.plots_dir, ws.logs_dir, ws.metadata_dir):
        d.mkdir(parents=True, exist_ok=True)
    return ws

def append_log(
    log_path: Path,
    *,
    title: str,
    params: Dict[str, Any],
    status: str,
    runtime_ms: int,
    error: Optional[str] = None,
) -> None:
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with log_path.open("a", encoding="utf-8") as f:
        f.write(f"\n===== {title} =====\n")
        f.write("params: " + json.dumps(params, sort_keys=True, default=str) + "\n")
        f.write(f"status: {status}\n")
        f.write(f"runtime_ms: {runtime_ms}\n")
        if error:
            f.write("\n---- error ----\n")
            f.write(error.rstrip("\n") + "\n")
