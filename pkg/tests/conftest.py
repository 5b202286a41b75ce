"""Shared fixtures: small random Crank-Nicolson problems."""

import numpy as np
import pytest

from ismoc.controls import ControlField, PenaltySchedule, TimeGrid
from ismoc.models.base import DenseModel
from ismoc.objective import ControlProblem

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def random_hermitian(rng, dim):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


def random_state(rng, dim):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_problem(rng, dim=2, steps=64, channels=1, alpha=None, T=None):
    """Random linear state-transfer problem and a random field on it."""
    model = DenseModel(random_hermitian(rng, dim),
                       np.array([random_hermitian(rng, dim) for _ in range(channels)]))
    grid = TimeGrid(0.0, T if T is not None else float(rng.uniform(0.5, 2.0)), steps)
    a = float(rng.uniform(0.0, 1.0)) if alpha is None else alpha
    problem = ControlProblem(model, random_state(rng, dim), random_state(rng, dim), grid,
                             PenaltySchedule.constant(a, steps), name=f"random{dim}")
    u = ControlField(grid, rng.standard_normal((channels, steps)))
    return problem, u


def two_level_problem(T=5.0, steps=64, alpha=0.1):
    """``H = sigma_z/2 + u sigma_x/2`` steering ``|0>`` to ``|1>``."""
    model = DenseModel(0.5 * SIGMA_Z, [0.5 * SIGMA_X], name="two-level")
    grid = TimeGrid(0.0, T, steps)
    return ControlProblem(model, np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex),
                          grid, PenaltySchedule.constant(alpha, steps), name="two-level")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run even under output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
