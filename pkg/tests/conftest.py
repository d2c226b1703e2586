import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from pmdist.spm import read_spm_csv

DATA = Path(__file__).resolve().parent.parent / "data"

# four voters, three candidates
EXAMPLE1 = np.array([
    [0.1, 0.2, 0.7],
    [0.5, 0.2, 0.3],
    [0.4, 0.5, 0.1],
    [0.8, 0.1, 0.1],
])

# full pmf of EXAMPLE1, obtained by summing products over all 3^4 assignments by hand-checkable arithmetic
EXAMPLE1_PMF = {
    (0, 0, 4): 0.0021, (0, 1, 3): 0.0146, (0, 2, 2): 0.0229, (0, 3, 1): 0.0124,
    (0, 4, 0): 0.0020, (1, 0, 3): 0.0290, (1, 1, 2): 0.1404, (1, 2, 1): 0.1190,
    (1, 3, 0): 0.0236, (2, 0, 2): 0.1133, (2, 1, 1): 0.2486, (2, 2, 0): 0.0681,
    (3, 0, 1): 0.1276, (3, 1, 0): 0.0604, (4, 0, 0): 0.0160,
}


@pytest.fixture
def example1():
    return read_spm_csv(DATA / "example1.csv")


@pytest.fixture
def voting10():
    return read_spm_csv(DATA / "voting10x3.csv")


def random_rows(rng, n, m):
    e = rng.standard_exponential((n, m))
    return e / e.sum(axis=1, keepdims=True)


@st.composite
def spms(draw, max_n=6, min_m=2, max_m=4, zeros=True):
    """Random SPM with optional exact zeros, as a plain array."""
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(min_m, max_m))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    p = random_rows(rng, n, m)
    if zeros and draw(st.booleans()):
        mask = rng.random((n, m)) < 0.3
        mask[np.arange(n), rng.integers(0, m, n)] = False
        p = np.where(mask, 0.0, p)
        p /= p.sum(axis=1, keepdims=True)
    return p


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
