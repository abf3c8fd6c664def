import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from decoform.corpus import ENTRIES  # noqa: E402

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def corpus():
    return {e.name: e.builder() for e in ENTRIES}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def record(num: int, ok: bool, detail: str = ""):
    line = f"CRITERION {num}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[num] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
