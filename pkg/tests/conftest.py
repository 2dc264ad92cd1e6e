import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lazygc import corpus  # noqa: E402
from lazygc.analysis import analyze  # noqa: E402
from lazygc.gc import compile_tables  # noqa: E402


@lru_cache(maxsize=None)
def program(name):
    return corpus.load(name)


@lru_cache(maxsize=None)
def analysis(name, main_demand="all"):
    return analyze(program(name), main_demand)


@lru_cache(maxsize=None)
def tables(name):
    return compile_tables(analysis(name))


@pytest.fixture(scope="session")
def corpus_names():
    return corpus.names()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
