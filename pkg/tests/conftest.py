import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scenmarket import builtin_two_bus  # noqa: E402
from scenmarket.clearing import clear_cooptimization  # noqa: E402
from scenmarket.pricing import compute_prices  # noqa: E402
from scenmarket.settlement import settle  # noqa: E402


@pytest.fixture(scope="session")
def two_bus():
    return builtin_two_bus()


@pytest.fixture(scope="session")
def cleared(two_bus):
    solution = clear_cooptimization(two_bus)
    prices = compute_prices(two_bus, solution)
    return solution, prices, settle(two_bus, solution, prices)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
