from __future__ import annotations

import shutil
import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
CORPUS = TESTS.parent / "corpus"
sys.path.insert(0, str(TESTS))

from vobs.parser import parse_machine  # noqa: E402


@pytest.fixture(scope="session")
def corpus() -> Path:
    return CORPUS


@pytest.fixture
def copy_corpus(tmp_path):
    """Copy a corpus project into tmp so checks and edits stay isolated."""
    def _copy(name: str, dst_name: str | None = None) -> Path:
        dst = tmp_path / (dst_name or name)
        shutil.copytree(CORPUS / name, dst)
        return dst
    return _copy


@pytest.fixture(scope="session")
def switch():
    return parse_machine((CORPUS / "basic" / "Switch.vob").read_text())


@pytest.fixture(scope="session")
def counter():
    return parse_machine((CORPUS / "basic" / "Counter.vob").read_text())


@pytest.fixture
def fixed_clock():
    return lambda: 1_700_000_000.0
