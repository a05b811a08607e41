import math
import time

import numpy as np
import pytest

_ACCEPTANCE_LINES: dict[int, list[str]] = {}

DEG = math.pi / 180


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    _ACCEPTANCE_LINES.setdefault(number, []).append(line)
    print(line)
    return line


@pytest.fixture
def acceptance():
    return record_acceptance


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config._acceptance_start = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE_LINES):
        for line in _ACCEPTANCE_LINES[number]:
            terminalreporter.write_line(line)
