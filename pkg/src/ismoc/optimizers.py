"""Inner solvers: constant-step gradient ascent, a monotonic sweep and matrix-free Newton.

Every step function accepts either a :class:`ControlProblem` or a
:class:`Subproblem`. For a subproblem the maximized objective is
``beta_n * J_n``, so a gradient step moves by ``rho * beta_n * grad J_n``,
which is exactly the slice of the full-horizon step.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .controls import ControlField
from .models.base import CapabilityError, DenseModel
from .objective import ControlProblem, Subproblem, evaluate_J, gradient
from .propagation import Sweep

__all__ = [
    "SolverSpec",
    "OptimizerError",
    "gradient_step",
    "monotonic_step",
    "newton_step",
    "hessian_vector_product",
    "run_inner",
]

log = logging.getLogger(__name__)

KINDS = ("gradient", "monotonic", "newton")


class OptimizerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverSpec:
    """Inner-solver settings.

    Attributes:
        kind: ``gradient``, ``monotonic`` or ``newton``.
        rho: gradient step size (also the Newton fallback step).
        iterations: inner iterations per call of :func:`run_inner`.
        delta: extra curvature added to the monotonic update denominator;
            larger values give shorter, safer steps.
        max_backtrack: halvings tried by the monotonic safeguard.
        gmres_tol: relative GMRES residual target.
        gmres_restart: Krylov dimension before restart.
        gmres_maxiter: restart cycles.
        hvp_scale: finite-difference displacement factor for Hessian products.
    """

    kind: str = "gradient"
    rho: float = 1.0
    iterations: int = 1
    delta: float = 0.0
    max_backtrack: int = 60
    gmres_tol: float = 1e-6
    gmres_restart: int = 30
    gmres_maxiter: int = 10
    hvp_scale: float = 1e-5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown solver kind {self.kind!r}; expected one of {KINDS}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if not self.gmres_tol > 0:
            raise ValueError("gmres_tol must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def _resolve(sub_or_problem) -> tuple[ControlProblem, float]:
    if isinstance(sub_or_problem, Subproblem):
        return sub_or_problem.problem, float(sub_or_problem.beta)
    if isinstance(sub_or_problem, ControlProblem):
        return sub_or_problem, 1.0
    raise TypeError(f"expected ControlProblem or Subproblem, got {type(sub_or_problem).__name__}")


def _finite_or_raise(g: np.ndarray, what: str, u: ControlField):
    if not np.all(np.isfinite(g)):
        bad = np.argwhere(~np.isfinite(g))
        raise OptimizerError(
            f"non-finite {what} at {len(bad)} entries (first channel/step {tuple(bad[0])}); "
            f"max |u| = {np.max(np.abs(u.samples)):.3e}"
        )


# -- gradient ---------------------------------------------------------------


def gradient_step(sub_or_problem, u: ControlField, rho: float) -> ControlField:
    """``u + rho * grad``, one constant-step ascent iteration."""
    problem, scale = _resolve(sub_or_problem)
    g = gradient(problem, u)
    _finite_or_raise(g, "gradient", u)
    return u.with_samples(u.samples + (rho * scale) * g)


# -- monotonic sweep ----------------------------------------------------------


def _cayley(model: DenseModel, v: np.ndarray, tau: float) -> np.ndarray:
    lmat = 0.5j * tau * model.hamiltonian(v)
    eye = np.eye(model.dim)
    return np.linalg.solve(eye + lmat, eye - lmat)


def _dh_stack(model: DenseModel, v: np.ndarray) -> np.ndarray:
    d = model.ops
    if model.quad_ops is not None:
        d = d + 2.0 * v[:, None, None] * model.quad_ops
    return d


def monotonic_step(sub_or_problem, u: ControlField, spec: SolverSpec | None = None,
                   diagnostics: list | None = None) -> ControlField:
    """One sequential sweep that never decreases the figure of merit.

    The adjoint ``chi`` of the current field is fixed; the new field is
    built step by step while the state is propagated with it. Because
    ``J(u') - J(u) = sum_j [f_j(u'_j) - f_j(u_j)]`` with
    ``f_j(v) = Re<chi_{j+1}|A(v) psi'_j> - alpha_j tau |v|^2 / 2``, each step
    maximizes a concave quadratic minorant of ``f_j`` (curvature from an
    upper bound on the second derivative of the Cayley factor) and the result
    is accepted only if ``f_j`` really increased; otherwise the step is halved
    and, as a last resort, the old value is kept.
    """
    spec = spec or SolverSpec(kind="monotonic")
    problem, _ = _resolve(sub_or_problem)
    model = problem.model
    if not isinstance(model, DenseModel):
        raise CapabilityError("the monotonic sweep needs a control-affine (or affine-plus-quadratic) dense model")
    tau = u.grid.tau
    alpha = problem.penalty.values
    chi = Sweep(model, u).backward(problem.target)
    density = model.density
    quad_norm = 0.0 if model.quad_ops is None else float(np.sqrt(np.sum(np.abs(model.quad_ops) ** 2)))
    eye = np.eye(model.dim)

    def local(a, state, c):
        nxt = a @ state @ a.conj().T if density else a @ state
        return np.vdot(c, nxt).real, nxt

    new = np.array(u.samples, copy=True)
    state = np.asarray(problem.initial, dtype=np.complex128)
    rejected = 0
    for j in range(u.steps):
        c = chi[j + 1]
        v0 = u.samples[:, j]
        a0 = _cayley(model, v0, tau)
        f0, nxt0 = local(a0, state, c)
        f0 -= 0.5 * alpha[j] * tau * float(v0 @ v0)
        # derivative of f_j at the old value, same pairing as the gradient
        dh = _dh_stack(model, v0)
        res = np.linalg.solve(eye + 0.5j * tau * model.hamiltonian(v0), eye)
        if density:
            # d(A rho A^+) = dA rho A^+ + A rho dA^+, dA = -2 R L' R with R = (I+L)^{-1};
            # both terms have the same real trace against a Hermitian chi
            dmat = -1j * tau * np.einsum("ab,cbd,de->cae", res, dh, res)
            term = np.einsum("cab,bd,ed->cae", dmat, state, a0.conj())
            g = 2.0 * np.real(np.einsum("ab,cab->c", c.conj(), term))
        else:
            dpsi = -1j * tau * np.einsum("ab,cbd,d->ca", res, dh, res @ state)
            g = np.real(dpsi @ c.conj())
        g = g - alpha[j] * tau * v0
        _finite_or_raise(g, "local derivative", u)
        dnorm = float(np.sqrt(np.sum(np.abs(dh) ** 2)))
        scale = float(np.linalg.norm(c)) * float(np.linalg.norm(state))
        curv = scale * (tau**2 * dnorm**2 + 2.0 * tau * quad_norm)
        if density:
            curv *= 4.0
        denom = alpha[j] * tau + curv + spec.delta
        if not denom > 0:
            raise OptimizerError(f"no concave local model at step {j} (denominator {denom:.3e})")
        step = g / denom
        accepted = False
        for _ in range(spec.max_backtrack):
            v = v0 + step
            a1 = _cayley(model, v, tau)
            f1, nxt1 = local(a1, state, c)
            f1 -= 0.5 * alpha[j] * tau * float(v @ v)
            if not np.isfinite(f1):
                raise OptimizerError(f"non-finite local value at step {j}")
            if f1 >= f0:
                accepted = True
                break
            step = 0.5 * step
        if accepted:
            new[:, j] = v
            state = nxt1
        else:
            rejected += 1
            state = nxt0
    if diagnostics is not None:
        diagnostics.append({"solver": "monotonic", "kept_old_steps": rejected})
    return u.with_samples(new)


# -- Newton -------------------------------------------------------------------


def hessian_vector_product(sub_or_problem, u: ControlField, v: np.ndarray, h: float | None = None,
                           hvp_scale: float = 1e-5) -> np.ndarray:
    """Central difference of the exact gradient along ``v``."""
    problem, scale = _resolve(sub_or_problem)
    v = np.asarray(v, dtype=np.float64).reshape(u.samples.shape)
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        return np.zeros_like(v)
    if h is None:
        h = hvp_scale * (1.0 + float(np.linalg.norm(u.samples))) / (vn + 1e-300)
    gp = gradient(problem, u.with_samples(u.samples + h * v))
    gm = gradient(problem, u.with_samples(u.samples - h * v))
    return scale * (gp - gm) / (2.0 * h)


def newton_step(sub_or_problem, u: ControlField, spec: SolverSpec | None = None,
                diagnostics: list | None = None) -> ControlField:
    """``u + d`` with ``H d = -grad`` solved by restarted GMRES.

    Falls back to ``rho * grad`` when GMRES does not reach its tolerance or
    ``d`` is not an ascent direction.
    """
    spec = spec or SolverSpec(kind="newton")
    problem, scale = _resolve(sub_or_problem)
    shape = u.samples.shape
    g = scale * gradient(problem, u)
    _finite_or_raise(g, "gradient", u)
    n = g.size
    if not np.any(g):
        return u

    def mv(x):
        return hessian_vector_product(sub_or_problem, u, np.asarray(x).reshape(shape),
                                      hvp_scale=spec.hvp_scale).ravel()

    op = LinearOperator((n, n), matvec=mv, dtype=np.float64)
    d, info = gmres(op, -g.ravel(), rtol=spec.gmres_tol, atol=0.0,
                    restart=min(spec.gmres_restart, n), maxiter=spec.gmres_maxiter)
    event = None
    if info != 0:
        event = f"gmres did not converge (info={info})"
    elif not np.all(np.isfinite(d)):
        event = "gmres returned non-finite direction"
    elif float(d @ g.ravel()) <= 0.0:
        event = "newton direction is not an ascent direction"
    if event is not None:
        log.info("newton fallback to gradient step: %s", event)
        if diagnostics is not None:
            diagnostics.append({"solver": "newton", "fallback": event})
        return u.with_samples(u.samples + spec.rho * g)
    if diagnostics is not None:
        diagnostics.append({"solver": "newton", "fallback": None})
    return u.with_samples(u.samples + d.reshape(shape))


def run_inner(sub_or_problem, u0: ControlField, spec: SolverSpec, diagnostics: list | None = None) -> ControlField:
    """Apply ``spec.iterations`` steps of the selected solver."""
    u = u0
    for _ in range(spec.iterations):
        if spec.kind == "gradient":
            u = gradient_step(sub_or_problem, u, spec.rho)
        elif spec.kind == "monotonic":
            u = monotonic_step(sub_or_problem, u, spec, diagnostics)
        else:
            u = newton_step(sub_or_problem, u, spec, diagnostics)
    return u


def objective_value(sub_or_problem, u: ControlField) -> float:
    """Objective the solvers maximize: ``J`` or ``beta_n J_n`` (overlap form)."""
    problem, scale = _resolve(sub_or_problem)
    return scale * evaluate_J(problem, u)
