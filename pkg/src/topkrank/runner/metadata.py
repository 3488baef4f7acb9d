"""Experiment metadata: library versions, artifact digests and the checksum list."""

from __future__ import annotations
import hashlib
import importlib.metadata
import platform
from pathlib import Path
from typing import Any, Dict, Iterable, List

from pydantic import BaseModel

from .io import Workspace

_LIBRARIES = ("numpy", "pandas", "pydantic", "tqdm")

class ArtifactDigest(BaseModel):
    path: str  # relative to the artifact directory, posix separators
    sha256: str

class RunMetadata(BaseModel):
    app_version: str
    python: str
    libraries: Dict[str, str]
    spec: Dict[str, Any]
    curves: List[str]
    failures: List[Dict[str, Any]]
    runtime_ms: int
    artifacts: List[ArtifactDigest]

def _version(dist: str) -> str:
    try:
        return importlib.metadata.version(dist)
    except importlib.metadata.PackageNotFoundError:
        return ""

def artifact_digests(root: Path, files: Iterable[Path]) -> List[ArtifactDigest]:
    out: List[ArtifactDigest] = []
    for p in sorted(set(files)):
        if p.is_file():
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            out.append(ArtifactDigest(path=p.relative_to(root).as_posix(), sha256=digest))
    return out

def write_run_metadata(
    ws: Workspace,
    *,
    spec: Dict[str, Any],
    curves: List[str],
    failures: List[Dict[str, Any]],
    runtime_ms: int,
) -> RunMetadata:
    """Digest the spec and every run/aggregated CSV, then write run_metadata.json and checksums.sha256."""
    files = [ws.spec_path, *ws.runs_dir.rglob("*.csv"), *ws.aggregated_dir.glob("*.csv")]
    meta = RunMetadata(
        app_version=_version("topkrank"),
        python=platform.python_version(),
        libraries={name: _version(name) for name in _LIBRARIES},
        spec=spec,
        curves=curves,
        failures=failures,
        runtime_ms=runtime_ms,
        artifacts=artifact_digests(ws.out_dir, files),
    )
    (ws.metadata_dir / "run_metadata.json").write_text(meta.model_dump_json(indent=2) + "\n", encoding="utf-8")
    lines = "".join(f"{a.sha256}  {a.path}\n" for a in meta.artifacts)
    (ws.metadata_dir / "checksums.sha256").write_text(lines, encoding="utf-8")
    return meta
