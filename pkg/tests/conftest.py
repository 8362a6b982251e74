import sys
import warnings
from pathlib import Path

import pytest

from optosqueeze import SystemParams

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def device():
    return SystemParams.device()


@pytest.fixture
def desk():
    return SystemParams.device().with_(n_th=0.5)


@pytest.fixture(autouse=True)
def _quiet_truncation():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*loses .* of its population")
        yield


#: One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
