import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pepsim.config import load_config  # noqa: E402


@pytest.fixture
def config():
    return load_config(environ={})


@pytest.fixture
def short_config(config):
    """A one-hour run with a high cosmic rate, for fast statistical checks."""
    return config.replace(**{"run.duration": 3600.0, "run.cosmic_rate": 5.0})


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
