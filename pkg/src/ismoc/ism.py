"""Intermediate State Method: decomposition, boundary states and the outer loop.

Each outer iteration

(a) computes the state and adjoint at the subinterval boundaries, either from
    worker-assembled propagators ``M_n`` (2N matrix-vector products) or, for
    split-operator models, from one forward and one adjoint sweep;
(b) forms the boundary states of every subproblem;
(c) improves every subinterval control independently on the worker pool;
(d) concatenates the pieces;
(e) measures ``Err`` from the sub-gradients at the new controls.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .controls import ControlField, concat, restrict, weighted_l2_penalty
from .decomposition import Decomposition
from .models.base import CapabilityError, DenseModel
from .objective import (
    INTERPOLATED,
    SPLIT,
    ControlProblem,
    IntermediateStates,
    Subproblem,
    error_norm,
    evaluate,
    gradient,
    parallel_functional,
    sub_gradient,
    subproblems,
)
from .optimizers import SolverSpec, run_inner
from .propagation import Sweep, inner, norm
from .runtime import MODES, IterationRecord, RunRecord, WorkerPool

__all__ = [
    "IsmConfig",
    "IsmError",
    "IntermediateStates",
    "intermediate_states",
    "split_states",
    "run_ism",
    "verify_theorems",
    "TaskResult",
]

log = logging.getLogger(__name__)

THEOREM1_TOL = 1e-11
THEOREM2_TOL = 1e-10


class IsmError(RuntimeError):
    """Outer loop aborted; ``record`` holds the iterations completed so far."""

    def __init__(self, message: str, record: RunRecord | None = None):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class IsmConfig:
    """Outer-loop settings.

    Attributes:
        n: number of subintervals.
        eta: stopping threshold on ``Err``, ``0 < eta <= 1``.
        solver: inner solver.
        max_iter: outer iteration cap.
        workers: worker pool size.
        mode: ``sequential``, ``thread`` or ``process``.
        variant: ``interpolated`` or ``split``; ``None`` picks interpolated
            for linear models and split otherwise.
        assemble: use propagator assembly for step (a) when available.
    """

    n: int = 1
    eta: float = 1e-3
    solver: SolverSpec = field(default_factory=SolverSpec)
    max_iter: int = 100
    workers: int = 1
    mode: str = "sequential"
    variant: str | None = None
    assemble: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must satisfy 0 < eta <= 1")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValueError("workers must be a positive integer")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.variant not in (None, INTERPOLATED, SPLIT):
            raise ValueError(f"unknown variant {self.variant!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = self.solver.to_dict()
        return d


# -- boundary states ------------------------------------------------------------


def _boundaries_by_sweep(problem: ControlProblem, u: ControlField, decomp: Decomposition):
    sweep = Sweep(problem.model, u)
    psi = sweep.forward(problem.initial)
    chi = sweep.adjoint(psi, problem.target, linearized=problem.linearized_adjoint)
    idx = list(decomp.indices)
    return [psi[j] for j in idx], [chi[j] for j in idx]


def _boundaries_by_propagators(problem: ControlProblem, mats, density: bool):
    psi = [np.asarray(problem.initial, dtype=np.complex128)]
    for m in mats:
        s = psi[-1]
        psi.append(m @ s @ m.conj().T if density else m @ s)
    chi = [np.asarray(problem.target, dtype=np.complex128)]
    for m in reversed(mats):
        s = chi[-1]
        mh = m.conj().T
        chi.append(mh @ s @ m if density else mh @ s)
    return psi, chi[::-1]


def _interpolate(problem: ControlProblem, decomp: Decomposition, psi, chi) -> IntermediateStates:
    phi = []
    for n in range(decomp.n + 1):
        if n == 0:
            phi.append(np.array(problem.initial, dtype=np.complex128))
        elif n == decomp.n:
            phi.append(np.array(problem.target, dtype=np.complex128))
        else:
            w = decomp.interpolation_weight(n)
            phi.append((1.0 - w) * psi[n] + w * chi[n])
    return IntermediateStates.interpolated(phi)


def intermediate_states(problem: ControlProblem, u: ControlField, decomp: Decomposition) -> IntermediateStates:
    """``phi_n = (1 - t_n/T) psi(t_n) + (t_n/T) chi(t_n)`` with pinned endpoints."""
    if not problem.model.linear:
        raise CapabilityError("interpolated intermediate states need a linear model; use split_states")
    psi, chi = _boundaries_by_sweep(problem, u, decomp)
    return _interpolate(problem, decomp, psi, chi)


def split_states(problem: ControlProblem, u: ControlField, decomp: Decomposition) -> IntermediateStates:
    """Initial states from the forward trajectory, targets from the adjoint trajectory."""
    psi, chi = _boundaries_by_sweep(problem, u, decomp)
    return IntermediateStates(tuple(psi), tuple(chi), SPLIT)


# -- worker tasks -------------------------------------------------------------------


@dataclass
class TaskResult:
    """Worker reply: new control piece, optional propagator, gradient density, ``J_n``."""

    index: int
    control: ControlField
    matrix: np.ndarray | None
    grad_density: ControlField
    value: float
    diagnostics: list


def _assemble_task(arg):
    model, u_n = arg
    return Sweep(model, u_n).assemble().matrix


def _solve_task(arg) -> TaskResult:
    sub, u_n, spec, want_matrix = arg
    diag: list = []
    u_new = run_inner(sub, u_n, spec, diag)
    p = sub.problem
    ev = evaluate(p, u_new)
    end = ev.forward[-1]
    if sub.flavor == INTERPOLATED:
        value = -0.5 * norm(end - p.target) ** 2 - ev.penalty
    else:
        value = ev.value
    mat = ev.sweep.assemble().matrix if want_matrix else None
    dens = u_new.with_samples(ev.gradient / u_new.grid.tau)
    return TaskResult(sub.index, u_new, mat, dens, float(value), diag)


# -- outer loop -----------------------------------------------------------------------


def _variant(problem: ControlProblem, cfg: IsmConfig) -> str:
    if cfg.variant is None:
        return INTERPOLATED if problem.model.linear else SPLIT
    if cfg.variant == INTERPOLATED and not problem.model.linear:
        raise CapabilityError("the interpolated variant needs a linear model; use variant='split'")
    return cfg.variant


def _fidelity(problem: ControlProblem, final_state) -> float:
    return inner(problem.target, final_state).real


def run_ism(problem: ControlProblem, u0: ControlField, cfg: IsmConfig, pool: WorkerPool | None = None,
            config_echo: dict | None = None, progress=None):
    """Run the outer loop until ``Err <= eta`` or ``max_iter`` iterations.

    Record entry ``k`` holds ``J[u^(k)]``; entry 0 is the initial field and
    carries no ``Err``. ``progress`` is called with each new entry.

    Returns:
        ``(u_final, RunRecord)``.
    """
    echo = {"ism": cfg.to_dict(), "problem": problem.name, "model": problem.model.describe()}
    echo.update(config_echo or {})
    record = RunRecord(echo)
    if cfg.max_iter == 0:
        return u0, record
    variant = _variant(problem, cfg)
    decomp = Decomposition.uniform(problem.grid, cfg.n)
    use_mats = cfg.assemble and isinstance(problem.model, DenseModel)
    own_pool = pool is None
    if own_pool:
        pool = WorkerPool(cfg.workers, cfg.mode)
    start = time.perf_counter()
    u = u0
    try:
        mats = None
        if use_mats:
            pieces = [(problem.model, restrict(u, n, decomp)) for n in range(decomp.n)]
            mats, timings, wall = pool.map(_assemble_task, pieces)
            record.add_timings(timings, wall)

        def step_a(u, mats):
            t0 = time.perf_counter()
            if use_mats:
                psi, chi = _boundaries_by_propagators(problem, mats, problem.model.density)
            else:
                psi, chi = _boundaries_by_sweep(problem, u, decomp)
            fid = _fidelity(problem, psi[-1])
            value = fid - weighted_l2_penalty(u, problem.penalty)
            if variant == INTERPOLATED:
                states = _interpolate(problem, decomp, psi, chi)
            else:
                states = IntermediateStates(tuple(psi), tuple(chi), SPLIT)
            return states, value, fid, time.perf_counter() - t0

        states, value, fid, ta = step_a(u, mats)
        scale = problem.normalization or 1.0
        entry = IterationRecord(0, value, None, time.perf_counter() - start, fid / scale, [], ta)
        record.append(entry)
        if progress:
            progress(entry)
        if not math.isfinite(value):
            raise IsmError("initial figure of merit is not finite", record)

        for k in range(1, cfg.max_iter + 1):
            subs = subproblems(problem, states, decomp)
            tasks = [(s, restrict(u, s.index, decomp), cfg.solver, use_mats) for s in subs]
            results, timings, wall = pool.map(_solve_task, tasks)
            record.add_timings(timings, wall)
            t0 = time.perf_counter()
            u = concat([r.control for r in results])
            err = error_norm([r.grad_density for r in results])
            for r in results:
                for d in r.diagnostics:
                    if d.get("fallback") or d.get("kept_old_steps"):
                        record.events.append(dict(d, iteration=k, subinterval=r.index))
            mats = [r.matrix for r in results] if use_mats else None
            merge = time.perf_counter() - t0
            states, value, fid, ta = step_a(u, mats)
            entry = IterationRecord(k, value, err, time.perf_counter() - start, fid / scale,
                                    [r.value for r in results], ta, wall, merge)
            record.append(entry)
            if progress:
                progress(entry)
            if not (math.isfinite(value) and math.isfinite(err) and np.all(np.isfinite(u.samples))):
                record.events.append({"iteration": k, "abort": "non-finite value"})
                raise IsmError(f"non-finite figure of merit or error at iteration {k}", record)
            if err <= cfg.eta:
                break
    finally:
        record.total_wall = time.perf_counter() - start
        if own_pool:
            pool.close()
    return u, record


# -- theorem checks -------------------------------------------------------------------


def verify_theorems(problem: ControlProblem, u: ControlField, decomp: Decomposition) -> dict:
    """Residuals of the parallel-functional identity and the gradient restriction identity."""
    phi = intermediate_states(problem, u, decomp)
    ev = evaluate(problem, u)
    j_full = ev.value
    j_par = parallel_functional(problem, u, phi, decomp)
    r1 = abs(j_par - j_full)
    r2 = 0.0
    for sub in subproblems(problem, phi, decomp):
        j0, j1 = decomp.index_range(sub.index)
        g_n = sub_gradient(sub, restrict(u, sub.index, decomp))
        r2 = max(r2, float(np.max(np.abs(sub.beta * g_n - ev.gradient[:, j0:j1]))))
    return {
        "n": decomp.n,
        "J": j_full,
        "J_parallel": j_par,
        "theorem1_residual": r1,
        "theorem1_tol": THEOREM1_TOL * (1.0 + abs(j_full)),
        "theorem1_pass": r1 <= THEOREM1_TOL * (1.0 + abs(j_full)),
        "theorem2_residual": r2,
        "theorem2_tol": THEOREM2_TOL,
        "theorem2_pass": r2 <= THEOREM2_TOL,
    }


def full_gradient_density(problem: ControlProblem, u: ControlField) -> np.ndarray:
    return gradient(problem, u) / u.grid.tau
