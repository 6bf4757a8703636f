import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

FIXTURES = HERE / "fixtures"
GOLDEN = HERE / "golden"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def mock_paths():
    return {
        "dataset": FIXTURES / "mock_corpus.csv",
        "scorer": FIXTURES / "mock_scorer.json",
        "embeddings": FIXTURES / "mock_embeddings.vec",
        "lexicon": FIXTURES / "mock_lexicon.tsv",
        "concepts": FIXTURES / "mock_concepts.tsv",
    }


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion, then assert it."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
