import numpy as np
import pytest

from handover import harness
from handover.net import default_model_path


def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines[n] = line
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def desk_model():
    if not default_model_path().exists():
        pytest.skip("shipped desk model missing")
    return harness.Model.load()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
