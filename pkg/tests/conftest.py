import numpy as np
import pytest
from hypothesis import strategies as st

from focqs.pauli import PauliSum, PauliTerm, transverse_field
from focqs.problems import ProblemInstance


@pytest.fixture
def toy():
    """One qubit, B = -X, C = Z."""
    return ProblemInstance("ising", 1, PauliSum.single(1, {0: "Z"}), transverse_field(1))


def random_state(rng, n):
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


@st.composite
def pauli_sums(draw, n, max_terms=6, hermitian=False):
    terms = []
    for _ in range(draw(st.integers(0, max_terms))):
        axes = draw(st.lists(st.sampled_from("IXYZ"), min_size=n, max_size=n))
        re = draw(st.floats(-2, 2, allow_nan=False))
        im = 0.0 if hermitian else draw(st.floats(-2, 2, allow_nan=False))
        terms.append(PauliTerm(complex(re, im), {q: a for q, a in enumerate(axes) if a != "I"}))
    return PauliSum(terms, n)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        ok, title, detail = RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}")
