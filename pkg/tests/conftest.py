from __future__ import annotations

import pytest

import spinsim
from spinsim import parse_program


@pytest.fixture(scope="session")
def load_corpus():
    """Parse a shipped corpus program by file name."""

    def load(name: str):
        return parse_program(spinsim.corpus_path(name).read_text(encoding="utf-8"))

    return load


@pytest.fixture(scope="session")
def corpus_file():
    def path(name: str):
        return spinsim.corpus_path(name)

    return path
