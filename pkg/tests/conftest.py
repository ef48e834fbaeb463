import sys

import numpy as np
import pytest

from affsym.catalog import SurfaceSpec
from affsym.functions import Cos, Exp, Power, SeparableMap, Sin, Term


def generic_graph() -> SurfaceSpec:
    """Graph of ``eᵗ cos u + u² + v² + 0.3 tuv + 0.2 t sin v`` (no pointwise symmetry)."""
    p1, p2 = Power(1), Power(2)
    m = SeparableMap(
        3,
        [
            [Term(1.0, (p1, None, None))],
            [Term(1.0, (None, p1, None))],
            [Term(1.0, (None, None, p1))],
            [
                Term(1.0, (Exp(1.0), Cos(), None)),
                Term(1.0, (None, p2, None)),
                Term(1.0, (None, None, p2)),
                Term(0.3, (p1, p1, p1)),
                Term(0.2, (p1, None, Sin())),
            ],
        ],
    )
    box = ((-0.3, 0.3),) * 3
    return SurfaceSpec("generic_graph", m, box, ((-0.6, 0.6),) * 3)


@pytest.fixture(scope="session")
def graph_surface():
    return generic_graph()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
