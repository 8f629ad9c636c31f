import numpy as np
import pytest

from admean.mechanisms import Rng
from admean.psd import PsdMatrix


@pytest.fixture
def rng():
    return Rng(12345)


def random_spd(gen: np.random.Generator, d: int) -> np.ndarray:
    """Random full-rank symmetric positive definite matrix."""
    q, _ = np.linalg.qr(gen.standard_normal((d, d)))
    vals = np.exp(gen.uniform(-2, 2, size=d))
    a = (q * vals) @ q.T
    return 0.5 * (a + a.T)


def random_psd_exact(gen: np.random.Generator, d: int, rank: int):
    """PSD matrix of exact rank, with its factors ``(u, vals)`` for building oracles."""
    q, _ = np.linalg.qr(gen.standard_normal((d, d)))
    u = q[:, :rank]
    vals = np.exp(gen.uniform(-2, 2, size=rank))
    return PsdMatrix.from_spectrum(vals, u), u, vals


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[num])
