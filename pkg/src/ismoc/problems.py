"""Ready-made control problems and initial fields for the three benchmarks."""

from __future__ import annotations

import numpy as np

from . import linalg
from .controls import ControlField, PenaltySchedule, TimeGrid
from .models.gpe import GpeModel, ground_state
from .models.rotor import RotorModel
from .models.spin import SpinChainModel
from .objective import ControlProblem

__all__ = [
    "spin_problem",
    "rotor_problem",
    "rotor_alpha",
    "rotor_penalty",
    "rotor_target",
    "gpe_problem",
    "initial_control",
]


def spin_problem(n_spins: int = 5, T: float = 14.0, steps: int = 2**15, coupling: float = 140.0,
                 topology=None, source: int = 1, target: int | None = None, alpha: float = 0.0,
                 checkpoint_stride: int | None = None) -> ControlProblem:
    """Transfer ``I_x`` of spin ``source`` to ``I_x`` of spin ``target`` (default: the last spin).

    ``checkpoint_stride`` bounds gradient memory for long grids.
    """
    model = SpinChainModel(n_spins, topology, coupling)
    target = n_spins if target is None else target
    grid = TimeGrid(0.0, T, steps)
    return ControlProblem(
        model,
        model.operator(source, "x"),
        model.operator(target, "x"),
        grid,
        PenaltySchedule.constant(alpha, steps),
        name=f"spin{n_spins}",
        checkpoint_stride=checkpoint_stride,
    )


def rotor_alpha(t, t_start: float, t_end: float):
    """``1e5 ((t - T/2)/(T/2))^6 + 1e4`` on ``[t_start, t_end]``."""
    half = 0.5 * (t_end - t_start)
    return 1e5 * ((np.asarray(t) - t_start - half) / half) ** 6 + 1e4


def rotor_penalty(grid: TimeGrid) -> PenaltySchedule:
    """:func:`rotor_alpha` sampled at step midpoints."""
    return PenaltySchedule(rotor_alpha(grid.midpoints, grid.t_start, grid.t_end))


def rotor_target(model: RotorModel, j_block: int = 4) -> np.ndarray:
    """Top eigenvector of ``cos(theta)`` restricted to ``j <= j_block``, zero padded.

    The phase is fixed so that the ``j = 0`` component is positive.
    """
    block = model.cos[: j_block + 1, : j_block + 1]
    w, v = linalg.eig_hermitian(block)
    top = v[:, -1].astype(np.complex128)
    top *= np.exp(-1j * np.angle(top[0]))
    out = np.zeros(model.dim, dtype=np.complex128)
    out[: j_block + 1] = top
    return out


def rotor_problem(j_max: int = 30, T: float | None = None, steps: int = 2**13) -> ControlProblem:
    """Orientation of a rotor from ``|0,0>``; ``T`` (atomic units) is required."""
    if j_max < 4:
        raise ValueError("rotor target needs j_max >= 4")
    if T is None:
        raise ValueError("the rotor horizon T must be given explicitly")
    model = RotorModel(j_max)
    grid = TimeGrid(0.0, T, steps)
    psi0 = np.zeros(model.dim, dtype=np.complex128)
    psi0[0] = 1.0
    return ControlProblem(model, psi0, rotor_target(model), grid, rotor_penalty(grid), name=f"rotor{j_max}")


def gpe_problem(T: float = 8.0, steps: int = 2**9, kappa: float = 1.0, d: float = 10.0,
                points: int = 50, x_min: float = -10.0, x_max: float = 10.0) -> ControlProblem:
    """Condensate transfer from the split-trap ground state (``lambda=1``) to the harmonic one (``lambda=0``)."""
    model = GpeModel(kappa, d, x_min, x_max, points)
    psi_i = ground_state(model, 1.0)
    psi_f = ground_state(model, 0.0)
    grid = TimeGrid(0.0, T, steps)
    return ControlProblem(model, psi_i, psi_f, grid, PenaltySchedule.constant(0.0, steps), name="gpe")


def initial_control(problem: ControlProblem, kind: str | None = None, amplitude: float | None = None,
                    seed: int | None = None) -> ControlField:
    """Default starting field for a benchmark.

    ``spin``: ``amplitude * sin(pi t/T)`` on every channel (the zero field is
    a stationary point of the transfer, so it cannot start the ascent).
    ``rotor``: zero field. ``gpe``: linear ramp of ``lambda`` from 1 to 0.
    ``random``: Gaussian samples of standard deviation ``amplitude``.
    """
    grid = problem.grid
    c = problem.model.channels
    if kind is None:
        kind = "gpe" if problem.name == "gpe" else ("rotor" if problem.name.startswith("rotor") else "spin")
    t = (grid.midpoints - grid.t_start) / grid.span
    if kind == "spin":
        a = 100.0 if amplitude is None else amplitude
        return ControlField(grid, np.repeat((a * np.sin(np.pi * t))[None], c, axis=0))
    if kind == "rotor" or kind == "zero":
        return ControlField.zeros(grid, c)
    if kind == "gpe":
        return ControlField(grid, np.repeat((1.0 - t)[None], c, axis=0))
    if kind == "random":
        a = 1.0 if amplitude is None else amplitude
        rng = np.random.default_rng(seed)
        return ControlField(grid, a * rng.standard_normal((c, grid.steps)))
    raise ValueError(f"unknown initial field kind {kind!r}")

