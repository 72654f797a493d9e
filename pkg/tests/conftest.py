from __future__ import annotations

import numpy as np
import pytest

from rolling_lab.group import get_model

ACCEPTANCE: list[tuple[str, bool, str]] = []

BUNDLED = ("abelian:2", "heisenberg", "paper-example")


def engel_law(x, y):
    """Componentwise group law of the four-dimensional example group, written out by hand."""
    a, b, c, d = np.moveaxis(np.asarray(x, dtype=float), -1, 0)
    a2, b2, c2, d2 = np.moveaxis(np.asarray(y, dtype=float), -1, 0)
    return np.stack(
        [
            a + a2,
            b + b2,
            c + c2 + 0.5 * (a * b2 - a2 * b),
            d + d2 + 0.5 * (a * c2 - a2 * c) + (a * a * b2 - a * a2 * b - a * a2 * b2 + a2 * a2 * b) / 12.0,
        ],
        axis=-1,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=BUNDLED)
def bundled_model(request):
    return get_model(request.param)


@pytest.fixture
def acceptance_log():
    def record(name: str, passed: bool, detail: str = ""):
        ACCEPTANCE.append((name, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
