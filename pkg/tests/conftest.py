import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from moldiss.config import paper_defaults  # noqa: E402


@pytest.fixture
def defaults():
    return paper_defaults()


def small_cfg(**changes):
    """Coarse grid that keeps k0 well inside the momentum range."""
    base = dict(num_points=64, box_length=64 * 1.269e-6, dt=1e-4, t_final=0.01, save_stride=10)
    base.update(changes)
    return paper_defaults(**base)


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
