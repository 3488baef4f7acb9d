"""Fixtures for unit tests"""

from __future__ import annotations
import sys
from pathlib import Path
import pytest

# Allow running pytest without installing the package.
ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

@pytest.fixture
def rng():
    from topkrank.core import make_rng

    return make_rng(0)

@pytest.fixture
def workdir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Empty working directory, so no config.json is picked up."""
    monkeypatch.chdir(tmp_path)
    return tmp_path

@pytest.fixture
def svmlight_file(tmp_path: Path) -> Path:
    path = tmp_path / "toy.txt"
    path.write_text(
        "# two queries, three features\n"
        "2 qid:10 1:0.5 3:1.0\n"
        "0 qid:10 2:0.25\n"
        "1 qid:10 1:1.0 2:1.0 # trailing comment\n"
        "\n"
        "4 qid:7 3:-0.5\n"
        "0 qid:7 1:0.125\n",
        encoding="utf-8",
    )
    return path
