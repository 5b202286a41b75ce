"""Figures of merit, exact discrete gradients and the subinterval functionals.

Sign convention: every gradient returned here is the gradient of the
quantity being *maximized*, so ``u + rho * g`` is an ascent step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .controls import ControlError, ControlField, PenaltySchedule, TimeGrid, restrict, weighted_l2_penalty
from .decomposition import Decomposition
from .models.base import DenseModel, HamiltonianModel
from .propagation import Sweep, inner, norm

__all__ = [
    "ControlProblem",
    "Subproblem",
    "IntermediateStates",
    "Evaluation",
    "evaluate",
    "evaluate_J",
    "fidelity",
    "gradient",
    "sub_functional",
    "sub_gradient",
    "subproblems",
    "parallel_functional",
    "error_norm",
]

INTERPOLATED = "interpolated"
SPLIT = "split"


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Maximize ``Re<target|psi(t_end)> - (1/2) sum_j alpha_j tau |u_j|^2``.

    ``linearized_adjoint`` only matters for nonlinear models; turning it off
    uses the naive adjoint, whose gradients are approximate.
    ``checkpoint_stride`` makes Crank-Nicolson gradients keep only every
    stride-th state (trajectories are then not returned).
    """

    model: HamiltonianModel
    initial: np.ndarray = field(repr=False)
    target: np.ndarray = field(repr=False)
    grid: TimeGrid
    penalty: PenaltySchedule = None
    linearized_adjoint: bool = True
    name: str = ""
    checkpoint_stride: int | None = None

    def __post_init__(self):
        shape = self.model.state_shape
        for label in ("initial", "target"):
            s = np.asarray(getattr(self, label), dtype=np.complex128)
            if s.shape != shape:
                raise ValueError(f"{label} state has shape {s.shape}, model expects {shape}")
            s = s.copy()
            s.flags.writeable = False
            object.__setattr__(self, label, s)
        if self.penalty is None:
            object.__setattr__(self, "penalty", PenaltySchedule.constant(0.0, self.grid.steps))
        if len(self.penalty) != self.grid.steps:
            raise ControlError("penalty schedule length does not match the grid")

    @property
    def normalization(self) -> float:
        """``||initial|| ||target||``, the scale of a perfect overlap."""
        return norm(self.initial) * norm(self.target)

    def zero_control(self) -> ControlField:
        return ControlField.zeros(self.grid, self.model.channels)

    def restricted(self, j0: int, j1: int, initial, target, penalty_scale: float = 1.0) -> "ControlProblem":
        return replace(
            self,
            initial=initial,
            target=target,
            grid=self.grid.sub(j0, j1),
            penalty=self.penalty.slice(j0, j1).scaled(penalty_scale),
        )


@dataclass(frozen=True)
class Evaluation:
    """Everything one forward/adjoint pass produces.

    With checkpointing, ``forward`` holds only the final state and
    ``adjoint`` is ``None``.
    """

    value: float
    fidelity: float
    penalty: float
    gradient: np.ndarray
    forward: np.ndarray
    adjoint: np.ndarray
    sweep: Sweep


def _check(problem: ControlProblem, u: ControlField):
    if u.grid != problem.grid:
        raise ControlError(f"control grid {u.grid} does not match problem grid {problem.grid}")
    if u.channels != problem.model.channels:
        raise ControlError(
            f"control has {u.channels} channels, model needs {problem.model.channels}"
        )


def fidelity(problem: ControlProblem, u: ControlField) -> float:
    _check(problem, u)
    psi = Sweep(problem.model, u).forward(problem.initial)
    return inner(problem.target, psi[-1]).real


def evaluate_J(problem: ControlProblem, u: ControlField) -> float:
    return fidelity(problem, u) - weighted_l2_penalty(u, problem.penalty)


def evaluate(problem: ControlProblem, u: ControlField, with_gradient: bool = True) -> Evaluation:
    """Value, gradient and both trajectories in one pass."""
    _check(problem, u)
    sweep = Sweep(problem.model, u)
    pen = weighted_l2_penalty(u, problem.penalty)
    if with_gradient and problem.checkpoint_stride and isinstance(problem.model, DenseModel):
        final, sens = sweep.checkpointed_sensitivity(problem.initial, problem.target, problem.checkpoint_stride)
        fid = inner(problem.target, final).real
        g = sens - problem.penalty.values * u.grid.tau * u.samples
        return Evaluation(fid - pen, fid, pen, g, final[None], None, sweep)
    psi = sweep.forward(problem.initial)
    fid = inner(problem.target, psi[-1]).real
    if not with_gradient:
        return Evaluation(fid - pen, fid, pen, None, psi, None, sweep)
    chi = sweep.adjoint(psi, problem.target, linearized=problem.linearized_adjoint)
    g = sweep.sensitivity(psi, chi) - problem.penalty.values * u.grid.tau * u.samples
    return Evaluation(fid - pen, fid, pen, g, psi, chi, sweep)


def gradient(problem: ControlProblem, u: ControlField) -> np.ndarray:
    """Exact gradient of the discrete figure of merit, shape ``(C, J)``."""
    return evaluate(problem, u).gradient


# -- subinterval problems ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class IntermediateStates:
    """Boundary states of a decomposition.

    Subproblem ``n`` starts from ``initial[n]`` and aims at ``target[n+1]``.
    For the interpolated variant both sequences are the same ``phi_n``.
    """

    initial: tuple
    target: tuple
    variant: str = INTERPOLATED

    def __post_init__(self):
        if len(self.initial) != len(self.target):
            raise ValueError("initial and target sequences differ in length")
        if self.variant not in (INTERPOLATED, SPLIT):
            raise ValueError(f"unknown variant {self.variant!r}")

    @classmethod
    def interpolated(cls, states) -> "IntermediateStates":
        states = tuple(np.asarray(s, dtype=np.complex128) for s in states)
        return cls(states, states, INTERPOLATED)

    @property
    def phi(self) -> tuple:
        if self.variant != INTERPOLATED:
            raise AttributeError("split intermediate states have no single phi sequence")
        return self.initial

    def __len__(self) -> int:
        return len(self.initial)


@dataclass(frozen=True, eq=False)
class Subproblem:
    """Problem on ``[t_n, t_{n+1}]`` plus its weight in the parallel functional."""

    index: int
    problem: ControlProblem
    beta: float = 1.0
    flavor: str = INTERPOLATED

    @property
    def interval(self) -> tuple[float, float]:
        return self.problem.grid.t_start, self.problem.grid.t_end


def subproblems(problem: ControlProblem, states: IntermediateStates, decomp: Decomposition) -> list[Subproblem]:
    """Subproblems for every subinterval.

    Interpolated: penalty ``alpha_n = alpha (t_{n+1} - t_n)/T`` and weight
    ``beta_n = T/(t_{n+1} - t_n)``. Split: full penalty and unit weight.
    """
    if len(states) != decomp.n + 1:
        raise ValueError(f"need {decomp.n + 1} boundary states, got {len(states)}")
    if decomp.grid != problem.grid:
        raise ControlError("decomposition grid does not match the problem grid")
    out = []
    for n in range(decomp.n):
        j0, j1 = decomp.index_range(n)
        if states.variant == INTERPOLATED:
            scale, beta = decomp.alpha_scale(n), decomp.beta(n)
        else:
            scale, beta = 1.0, 1.0
        sub = problem.restricted(j0, j1, states.initial[n], states.target[n + 1], scale)
        out.append(Subproblem(n, sub, beta, states.variant))
    return out


def sub_functional(sub: Subproblem, u_n: ControlField, form: str | None = None) -> float:
    """Value of ``J_n``.

    ``form='tracking'`` is ``-(1/2)||psi_n(t_{n+1}) - target||^2 - penalty``;
    ``'overlap'`` is ``Re<psi_n(t_{n+1})|target> - penalty``. Interpolated
    subproblems default to tracking, split ones to overlap.
    """
    p = sub.problem
    _check(p, u_n)
    if form is None:
        form = "tracking" if sub.flavor == INTERPOLATED else "overlap"
    end = Sweep(p.model, u_n).forward(p.initial)[-1]
    pen = weighted_l2_penalty(u_n, p.penalty)
    if form == "tracking":
        return -0.5 * norm(end - p.target) ** 2 - pen
    if form == "overlap":
        return inner(p.target, end).real - pen
    raise ValueError(f"unknown form {form!r}")


def sub_gradient(sub: Subproblem, u_n: ControlField) -> np.ndarray:
    """Gradient of ``J_n``; tracking and overlap forms agree for norm-preserving dynamics."""
    return gradient(sub.problem, u_n)


def parallel_functional(problem: ControlProblem, u: ControlField, states: IntermediateStates,
                        decomp: Decomposition) -> float:
    """``sum_n beta_n J_n`` on the scale of ``J``.

    The tracking sub-functionals sum to ``J - (||psi_i||^2 + ||psi_f||^2)/2``
    at the optimal boundary states; that constant is added back so the result
    compares directly with :func:`evaluate_J`. It does not depend on ``u`` or
    the boundary states.
    """
    subs = subproblems(problem, states, decomp)
    total = 0.0
    for sub in subs:
        total += sub.beta * sub_functional(sub, restrict(u, sub.index, decomp))
    if states.variant == INTERPOLATED:
        total += 0.5 * (norm(problem.initial) ** 2 + norm(problem.target) ** 2)
    return total


def error_norm(sub_gradients: Sequence[ControlField]) -> float:
    """``sum_n sum_j tau_n ||g_n(t_j)||``, channel norm inside.

    The inputs are gradient densities (discrete gradients divided by the
    step), so a constant ``g`` over ``[0, T]`` gives ``T |g|``.
    """
    total = 0.0
    for g in sub_gradients:
        total += g.grid.tau * float(np.sum(np.linalg.norm(g.samples, axis=0)))
    return total
