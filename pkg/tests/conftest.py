import json
import sys
from pathlib import Path

import numpy as np
import pytest

from stokes_biot import io as sio
from stokes_biot import scenarios

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
sys.path.insert(0, str(Path(__file__).parent))

# coarsest artery mesh used by the unit and property tests
SMALL_H = 0.1


def load_raw(name):
    return json.loads((CONFIGS / name).read_text())


@pytest.fixture(scope="session")
def artery_cfg():
    return sio.read_config(CONFIGS / "artery.json")


@pytest.fixture(scope="session")
def reservoir_cfg():
    return sio.read_config(CONFIGS / "reservoir.json")


@pytest.fixture(scope="session")
def small_problem(artery_cfg):
    """Forced artery problem, inf-sup preset, on the coarsest mesh."""
    return scenarios.artery_problem(artery_cfg, h=SMALL_H)


@pytest.fixture(scope="session")
def small_unforced(artery_cfg):
    return scenarios.artery_problem(artery_cfg, h=SMALL_H, forced=False)


@pytest.fixture(scope="session")
def small_equal_order():
    cfg = sio.read_config(CONFIGS / "artery_precond.json")
    return scenarios.artery_problem(cfg, h=SMALL_H)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
