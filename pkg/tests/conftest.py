import json
from pathlib import Path

import numpy as np
import pytest

ORACLE = json.loads((Path(__file__).parent / "oracles" / "oracle_values.json").read_text())


@pytest.fixture
def oracle():
    return ORACLE


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE: list = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
