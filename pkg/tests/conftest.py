import numpy as np
import pytest
from hypothesis import strategies as st

from patchdg.splines import KnotVector


def cox_de_boor(knots, p, i, x):
    """Textbook recursion for a single basis function (independent of the library)."""
    knots = np.asarray(knots, dtype=float)
    if p == 0:
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        # right end point belongs to the last non-empty span
        last = np.nonzero(knots < knots[-1])[0][-1]
        return 1.0 if (x == knots[-1] and i == last) else 0.0
    out = 0.0
    d1 = knots[i + p] - knots[i]
    if d1 > 0:
        out += (x - knots[i]) / d1 * cox_de_boor(knots, p - 1, i, x)
    d2 = knots[i + p + 1] - knots[i + 1]
    if d2 > 0:
        out += (knots[i + p + 1] - x) / d2 * cox_de_boor(knots, p - 1, i + 1, x)
    return out


def random_knot_vector(rng, degree, max_interior=6):
    k = rng.integers(0, max_interior + 1)
    interior = np.sort(rng.random(k))
    # occasional repeated knots up to multiplicity p
    if k and degree > 1 and rng.random() < 0.3:
        interior = np.sort(np.concatenate([interior, np.repeat(interior[0], rng.integers(1, degree))]))
    return KnotVector(np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)]), degree)


@st.composite
def knot_vectors(draw, max_degree=5):
    p = draw(st.integers(1, max_degree))
    values = draw(st.lists(st.floats(0.01, 0.99), max_size=6))
    mults = draw(st.lists(st.integers(1, p), min_size=len(values), max_size=len(values)))
    interior = np.sort(np.repeat(np.unique(np.round(values, 6)), mults[: len(np.unique(np.round(values, 6)))]))
    return KnotVector(np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)]), p)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance lines are collected by tests/test_acceptance.py and echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
