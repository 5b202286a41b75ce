"""Independent checks: finite-difference gradients, norm conservation, theorem residuals.

The finite-difference oracle computes the central difference
``(J(u + h e) - J(u - h e)) / 2h`` of the discrete figure of merit without
touching the adjoint or gradient code. Subtracting two nearly equal values of
``J`` loses about ``eps |J| / h`` to rounding, which exceeds the accuracy we
want to certify, so the difference of the two perturbed trajectories is
propagated directly:

* Cayley steps: ``A(u+h) - A(u-h) = 2 (I + L+)^{-1} (L- - L+) (I + L-)^{-1}``
  with ``L- - L+`` formed analytically; by linearity the change of the
  final overlap is the pairing of that difference with the target propagated
  backwards by the (unperturbed) later steps, all built here from scratch.
* Nonlinear Strang steps: the state difference is carried through every later
  step with the phase difference expanded as ``exp(-i d) - 1 =
  -2 sin^2(d/2) - i sin(d)``.

Both routes evaluate the same central difference as the naive formula; they
only avoid the cancellation.
"""

from __future__ import annotations

import numpy as np

from .controls import ControlField
from .decomposition import Decomposition
from .models.base import DenseModel, SplitOperatorModel
from .models.gpe import GpeModel
from .objective import ControlProblem, gradient

__all__ = [
    "fd_gradient",
    "naive_fd_gradient",
    "gradient_check",
    "relative_error",
    "norm_drift",
    "theorem_check",
]


def relative_error(a, b, floor: float = 1e-10) -> np.ndarray:
    """``|a - b| / max(|b|, floor)`` entrywise."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.abs(b), floor)


# -- Cayley models --------------------------------------------------------------


def _ham(model: DenseModel, v) -> np.ndarray:
    h = model.h0 + np.tensordot(v, model.ops, axes=1)
    if model.quad_ops is not None:
        h = h + np.tensordot(np.asarray(v) ** 2, model.quad_ops, axes=1)
    return h


def _fd_dense(problem: ControlProblem, u: ControlField, h: float) -> np.ndarray:
    model = problem.model
    tau = u.grid.tau
    d = model.dim
    eye = np.eye(d)
    steps = u.steps
    mats = []
    for j in range(steps):
        lmat = 0.5j * tau * _ham(model, u.samples[:, j])
        mats.append(np.linalg.inv(eye + lmat) @ (eye - lmat))
    density = model.density
    # forward states and backward-propagated targets, straight-line code
    psi = [np.asarray(problem.initial, dtype=np.complex128)]
    for a in mats:
        psi.append(a @ psi[-1] @ a.conj().T if density else a @ psi[-1])
    chi = [np.asarray(problem.target, dtype=np.complex128)]
    for a in reversed(mats):
        chi.append(a.conj().T @ chi[-1] @ a if density else a.conj().T @ chi[-1])
    chi = chi[::-1]
    alpha = problem.penalty.values
    out = np.zeros_like(u.samples)
    for j in range(steps):
        v = u.samples[:, j]
        for c in range(u.channels):
            vp, vm = v.copy(), v.copy()
            vp[c] += h
            vm[c] -= h
            lp = 0.5j * tau * _ham(model, vp)
            lm = 0.5j * tau * _ham(model, vm)
            # L- - L+ without cancellation: H(v-h e) - H(v+h e) = -2h (B1 + 2 v_c B2)
            dh = -2.0 * h * model.ops[c]
            if model.quad_ops is not None:
                dh = dh - 4.0 * h * v[c] * model.quad_ops[c]
            diff = 2.0 * np.linalg.solve(eye + lp, (0.5j * tau * dh) @ np.linalg.inv(eye + lm))
            if density:
                ap = np.linalg.solve(eye + lp, eye - lp)
                am = np.linalg.solve(eye + lm, eye - lm)
                dstate = diff @ psi[j] @ ap.conj().T + am @ psi[j] @ diff.conj().T
            else:
                dstate = diff @ psi[j]
            dfid = np.vdot(chi[j + 1], dstate).real
            dpen = 0.5 * alpha[j] * tau * 4.0 * h * v[c]
            out[c, j] = (dfid - dpen) / (2.0 * h)
    return out


# -- Strang models ------------------------------------------------------------------


def _potential_difference(model: SplitOperatorModel, v: np.ndarray, c: int, h: float) -> np.ndarray:
    """``V(v + h e_c) - V(v - h e_c)``, analytic for the condensate trap."""
    vp, vm = v.copy(), v.copy()
    vp[c] += h
    vm[c] -= h
    if not isinstance(model, GpeModel):
        return model.potential(vp) - model.potential(vm)
    x = np.abs(model.x)
    dd = model.d
    lam = v[0]
    sp, sm = vp[0] * dd, vm[0] * dd
    outer_p, outer_m = x > sp / 4, x > sm / 4
    out = model.potential(vp) - model.potential(vm)
    both_out = outer_p & outer_m
    both_in = ~outer_p & ~outer_m
    # 0.5 (a^2 - b^2) = 0.5 (a - b)(a + b)
    out = np.where(both_out, 0.5 * (-h * dd) * (2 * x - lam * dd), out)
    out = np.where(both_in, lam * h * dd * dd / 4, out)
    return out


def _expm1_phase(d: np.ndarray) -> np.ndarray:
    """``exp(-i d) - 1`` without cancellation for small ``d``."""
    return -2.0 * np.sin(0.5 * d) ** 2 - 1j * np.sin(d)


def _fd_strang(problem: ControlProblem, u: ControlField, h: float) -> np.ndarray:
    model = problem.model
    tau = u.grid.tau
    steps = u.steps
    kin = np.exp(-0.5j * tau * model.spectrum)
    scale = tau * model.kappa / model.dx

    def kstep(v):
        return np.fft.ifft(kin * np.fft.fft(v, norm="ortho"), norm="ortho")

    theta_v = np.array([tau * model.potential(u.samples[:, j]) for j in range(steps)])
    psi = [np.asarray(problem.initial, dtype=np.complex128)]
    for j in range(steps):
        a = kstep(psi[-1])
        th = theta_v[j] + scale * np.abs(a) ** 2
        psi.append(kstep(np.exp(-1j * th) * a))
    target = np.asarray(problem.target, dtype=np.complex128)
    out = np.zeros_like(u.samples)
    for j in range(steps):
        v = u.samples[:, j].copy()
        for c in range(u.channels):
            a = kstep(psi[j])
            dv = tau * _potential_difference(model, v, c, h)
            vm = v.copy()
            vm[c] -= h
            th_m = tau * model.potential(vm) + scale * np.abs(a) ** 2
            # plus/minus branches share a; only the potential phase differs
            b_m = np.exp(-1j * th_m) * a
            db = np.exp(-1j * th_m) * _expm1_phase(dv) * a
            sm = kstep(b_m)
            ds = kstep(db)
            for k in range(j + 1, steps):
                am = kstep(sm)
                da = kstep(ds)
                ap = am + da
                dth = scale * np.real((ap + am) * np.conj(da))
                thm = theta_v[k] + scale * np.abs(am) ** 2
                bm = np.exp(-1j * thm) * am
                db = np.exp(-1j * (thm + dth)) * da + np.exp(-1j * thm) * _expm1_phase(dth) * am
                sm = kstep(bm)
                ds = kstep(db)
            out[c, j] = np.vdot(target, ds).real / (2.0 * h)
    pen_grad = -problem.penalty.values * tau * u.samples
    return out + pen_grad


def fd_gradient(problem: ControlProblem, u: ControlField, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of ``J`` at displacement ``h``, cancellation free."""
    if isinstance(problem.model, DenseModel):
        return _fd_dense(problem, u, h)
    if isinstance(problem.model, SplitOperatorModel):
        return _fd_strang(problem, u, h)
    raise TypeError(f"unsupported model {type(problem.model).__name__}")


def naive_fd_gradient(problem: ControlProblem, u: ControlField, h: float = 1e-6, entries=None) -> np.ndarray:
    """Plain ``(J(u+h) - J(u-h)) / 2h`` via full re-propagation (slow, noisy)."""
    from .objective import evaluate_J

    out = np.full(u.samples.shape, np.nan)
    if entries is None:
        entries = [(c, j) for c in range(u.channels) for j in range(u.steps)]
    for c, j in entries:
        s = np.array(u.samples, copy=True)
        s[c, j] += h
        jp = evaluate_J(problem, u.with_samples(s))
        s[c, j] -= 2 * h
        jm = evaluate_J(problem, u.with_samples(s))
        out[c, j] = (jp - jm) / (2 * h)
    return out


def gradient_check(problem: ControlProblem, u: ControlField, h: float = 1e-6, floor: float = 1e-10) -> dict:
    g = gradient(problem, u)
    f = fd_gradient(problem, u, h)
    rel = relative_error(g, f, floor)
    return {
        "problem": problem.name,
        "entries": int(g.size),
        "max_relative_error": float(rel.max()),
        "max_abs_gradient": float(np.abs(g).max()),
        "pass": bool(rel.max() <= 1e-6),
    }


def norm_drift(problem: ControlProblem, u: ControlField) -> dict:
    """Largest per-step and end-to-end change of ``||psi||`` (Hilbert-Schmidt for operators)."""
    from .propagation import Sweep

    traj = Sweep(problem.model, u).forward(problem.initial)
    norms = np.linalg.norm(traj.reshape(traj.shape[0], -1), axis=1)
    return {
        "problem": problem.name,
        "max_step_drift": float(np.max(np.abs(np.diff(norms)))),
        "total_drift": float(abs(norms[-1] - norms[0])),
    }


def theorem_check(problem: ControlProblem, u: ControlField, n: int) -> dict:
    from .ism import verify_theorems

    return verify_theorems(problem, u, Decomposition.uniform(problem.grid, n))

