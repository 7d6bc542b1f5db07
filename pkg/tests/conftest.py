import numpy as np
import pytest

from mhdeq.mesh import build_box_mesh


def fitted_slope(h, err):
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@pytest.fixture(scope="session")
def unit_mesh4():
    return build_box_mesh((0, 0, 0), (1, 1, 1), 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def record_acceptance(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
