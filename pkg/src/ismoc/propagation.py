"""Crank-Nicolson and Strang-splitting propagation, adjoints and propagators.

The central object is :class:`Sweep`, which holds the per-step operators of
one control field so that a forward pass, an adjoint pass and the gradient
contraction can share them.

Adjoint trajectories live on the grid points: ``chi[J]`` is the terminal
condition and ``chi[j] = A_j^dagger chi[j+1]`` for linear models. The
half-step adjoint ``(I - L_j)^{-1} chi[j+1]`` of the discrete Lagrangian
equals ``(chi[j] + chi[j+1]) / 2``, which is what the gradient uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .controls import ControlField, TimeGrid
from .models.base import CapabilityError, DenseModel, HamiltonianModel, SplitOperatorModel

__all__ = [
    "cn_step",
    "strang_step",
    "Sweep",
    "propagate",
    "adjoint",
    "assemble_propagator",
    "AssembledPropagator",
    "inner",
    "norm",
    "matrix_to_bytes",
    "matrix_from_bytes",
]

_CHUNK = 4096


def inner(a, b) -> complex:
    """``<a|b>``; Hilbert-Schmidt ``tr(a^dagger b)`` for operators."""
    return complex(np.vdot(a, b))


def norm(a) -> float:
    return float(np.linalg.norm(np.ravel(a)))


def cn_step(h, tau: float, psi, direction: str = "forward") -> np.ndarray:
    """One Crank-Nicolson step with ``L = i tau H / 2``.

    Forward solves ``(I + L) psi' = (I - L) psi``; backward solves
    ``(I - L) psi' = (I + L) psi``, its exact inverse.
    """
    h = np.asarray(h, dtype=np.complex128)
    if not linalg.is_hermitian(h):
        raise linalg.LinalgError("Crank-Nicolson step needs a Hermitian matrix")
    lmat = 0.5j * tau * h
    eye = np.eye(h.shape[0])
    if direction == "forward":
        return linalg.solve_linear(eye + lmat, linalg.matvec(eye - lmat, psi))
    if direction == "backward":
        return linalg.solve_linear(eye - lmat, linalg.matvec(eye + lmat, psi))
    raise ValueError(f"unknown direction {direction!r}")


def _kinetic(model: SplitOperatorModel, tau: float) -> np.ndarray:
    return np.exp(-0.5j * tau * model.spectrum)


def _apply_diag_fourier(phase: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.fft.ifft(phase * np.fft.fft(v, norm="ortho"), norm="ortho")


def strang_step(model: SplitOperatorModel, u_j, tau: float, psi) -> np.ndarray:
    """``exp(-i tau K/2) exp(-i tau V) exp(-i tau K/2) psi``.

    For nonlinear models the density term is taken from the state after the
    first kinetic half-step.
    """
    if not isinstance(model, SplitOperatorModel):
        raise CapabilityError("strang_step needs a split-operator model")
    kin = _kinetic(model, tau)
    a = _apply_diag_fourier(kin, np.asarray(psi, dtype=np.complex128))
    theta = tau * model.potential(np.atleast_1d(u_j))
    if model.kappa:
        theta = theta + tau * model.kappa / model.dx * np.abs(a) ** 2
    return _apply_diag_fourier(kin, np.exp(-1j * theta) * a)


def cayley_stack(model: DenseModel, samples: np.ndarray, tau: float) -> np.ndarray:
    """``A_j = (I + L_j)^{-1} (I - L_j)`` for every step, shape ``(J, d, d)``."""
    steps = samples.shape[1]
    d = model.dim
    eye = np.eye(d)
    out = np.empty((steps, d, d), dtype=np.complex128)
    for j0 in range(0, steps, _CHUNK):
        j1 = min(steps, j0 + _CHUNK)
        lmat = 0.5j * tau * model.hamiltonians(samples[:, j0:j1])
        out[j0:j1] = np.linalg.solve(eye + lmat, eye - lmat)
    return out


class Sweep:
    """Per-step operators for one control field on one model.

    Args:
        model: a :class:`DenseModel` or :class:`SplitOperatorModel`.
        u: control field; its grid fixes the time step.
    """

    def __init__(self, model: HamiltonianModel, u: ControlField):
        if u.channels != model.channels:
            raise ValueError(f"model has {model.channels} channels, control has {u.channels}")
        self.model = model
        self.u = u
        self.tau = u.grid.tau
        self.steps = u.steps
        if isinstance(model, DenseModel):
            self._cayley = cayley_stack(model, u.samples, self.tau)
        elif isinstance(model, SplitOperatorModel):
            self._kin = _kinetic(model, self.tau)
            self._theta_v = self.tau * model.potentials(u.samples)
        else:
            raise CapabilityError(f"unsupported model type {type(model).__name__}")
        self._forward_cache = None

    @property
    def cayley(self) -> np.ndarray:
        if not isinstance(self.model, DenseModel):
            raise CapabilityError("Cayley factors exist only for Crank-Nicolson models")
        return self._cayley

    # -- forward ------------------------------------------------------------

    def forward(self, state) -> np.ndarray:
        """Trajectory ``psi_0 .. psi_J`` starting from ``state``."""
        m = self.model
        state = np.asarray(state, dtype=np.complex128)
        if state.shape != m.state_shape:
            raise ValueError(f"state shape {state.shape} != {m.state_shape}")
        traj = np.empty((self.steps + 1,) + state.shape, dtype=np.complex128)
        traj[0] = state
        if isinstance(m, DenseModel):
            a = self._cayley
            if m.density:
                for j in range(self.steps):
                    traj[j + 1] = a[j] @ traj[j] @ a[j].conj().T
            else:
                for j in range(self.steps):
                    traj[j + 1] = a[j] @ traj[j]
            return traj
        kin = self._kin
        pre = np.empty((self.steps, m.dim), dtype=np.complex128)
        post = np.empty_like(pre)
        scale = self.tau * m.kappa / m.dx
        for j in range(self.steps):
            a = _apply_diag_fourier(kin, traj[j])
            theta = self._theta_v[j]
            if m.kappa:
                theta = theta + scale * (a.real**2 + a.imag**2)
            b = np.exp(-1j * theta) * a
            pre[j], post[j] = a, b
            traj[j + 1] = _apply_diag_fourier(kin, b)
        self._forward_cache = (traj[0].copy(), pre, post)
        return traj

    def backward(self, state) -> np.ndarray:
        """Time-reversed propagation: ``out[J] = state`` and ``out[j+1] = step_j(out[j])``."""
        m = self.model
        state = np.asarray(state, dtype=np.complex128)
        traj = np.empty((self.steps + 1,) + state.shape, dtype=np.complex128)
        traj[-1] = state
        if isinstance(m, DenseModel):
            a = self._cayley
            for j in range(self.steps - 1, -1, -1):
                ah = a[j].conj().T
                traj[j] = ah @ traj[j + 1] @ a[j] if m.density else ah @ traj[j + 1]
            return traj
        inv = self._kin.conj()
        scale = self.tau * m.kappa / m.dx
        for j in range(self.steps - 1, -1, -1):
            c = _apply_diag_fourier(inv, traj[j + 1])
            theta = self._theta_v[j]
            if m.kappa:
                theta = theta + scale * (c.real**2 + c.imag**2)
            traj[j] = _apply_diag_fourier(inv, np.exp(1j * theta) * c)
        return traj

    # -- adjoint and gradient -----------------------------------------------

    def adjoint(self, forward_traj, final, linearized: bool = True) -> np.ndarray:
        """Adjoint trajectory for the terminal functional ``Re<final|psi_J>``.

        For linear models this is the backward propagation of ``final``. For
        nonlinear split-operator models the exact linearization of the
        discrete step is transposed; ``linearized=False`` drops the
        density-coupling term (the naive adjoint).
        """
        m = self.model
        if m.linear:
            return self.backward(final)
        pre, post = self._cached(forward_traj)
        inv = self._kin.conj()
        scale = self.tau * m.kappa / m.dx
        lam = np.empty((self.steps + 1, m.dim), dtype=np.complex128)
        lam[-1] = final
        for j in range(self.steps - 1, -1, -1):
            lb = _apply_diag_fourier(inv, lam[j + 1])
            a, b = pre[j], post[j]
            theta = self._theta_v[j] + scale * (a.real**2 + a.imag**2)
            la = np.exp(1j * theta) * lb
            if linearized:
                la = la + 2.0 * scale * np.imag(np.conj(lb) * b) * a
            lam[j] = _apply_diag_fourier(inv, la)
        return lam

    def _cached(self, forward_traj):
        cache = self._forward_cache
        if cache is None or not np.array_equal(cache[0], forward_traj[0]):
            self.forward(forward_traj[0])
            cache = self._forward_cache
        return cache[1], cache[2]

    def sensitivity(self, forward_traj, adjoint_traj, start: int = 0) -> np.ndarray:
        """``d Re<chi_J|psi_J> / d u_{c,j}``, shape ``(C, J)``.

        For Crank-Nicolson models the trajectories may cover only the steps
        ``start .. start + L``; the result then has ``L`` columns.
        """
        m = self.model
        tau = self.tau
        psi = np.asarray(forward_traj)
        chi = np.asarray(adjoint_traj)
        if isinstance(m, DenseModel):
            stop = start + psi.shape[0] - 1
            if m.density:
                return self._density_sensitivity(psi, chi, start, stop)
            x = psi[:-1] + psi[1:]
            y = chi[:-1] + chi[1:]
            lin = np.imag(np.einsum("ja,cab,jb->cj", y.conj(), m.ops, x, optimize=True))
            g = 0.25 * tau * lin
            if m.quad_ops is not None:
                quad = np.imag(np.einsum("ja,cab,jb->cj", y.conj(), m.quad_ops, x, optimize=True))
                g = g + 0.25 * tau * 2.0 * self.u.samples[:, start:stop] * quad
            return g
        pre, post = self._cached(psi)
        inv = self._kin.conj()
        s = np.empty((self.steps, m.dim))
        for j in range(self.steps):
            lb = _apply_diag_fourier(inv, chi[j + 1])
            s[j] = np.imag(np.conj(lb) * post[j])
        dv = m.dpotentials(self.u.samples)  # (J, C, M)
        return tau * np.einsum("jcm,jm->cj", dv, s)

    def _density_sensitivity(self, rho, chi, start: int, stop: int) -> np.ndarray:
        m = self.model
        tau = self.tau
        a = self._cayley[start:stop]
        ah = np.conj(np.swapaxes(a, -1, -2))
        eye = np.eye(m.dim)
        steps = stop - start
        out = np.zeros((m.channels, steps))
        quad = np.zeros_like(out) if m.quad_ops is not None else None
        for j0 in range(0, steps, _CHUNK):
            j1 = min(steps, j0 + _CHUNK)
            aj, ahj = a[j0:j1], ah[j0:j1]
            r0 = rho[j0:j1]
            ch = np.conj(np.swapaxes(chi[j0 + 1 : j1 + 1], -1, -2))
            x1 = (eye + aj) @ r0 @ ahj @ ch @ (aj + eye)
            x2 = (ahj + eye) @ ch @ aj @ r0 @ (eye + ahj)
            t1 = np.einsum("cab,jba->cj", m.ops, x1, optimize=True)
            t2 = np.einsum("cab,jba->cj", m.ops, x2, optimize=True)
            out[:, j0:j1] = np.real(-0.25j * tau * t1 + 0.25j * tau * t2)
            if quad is not None:
                q1 = np.einsum("cab,jba->cj", m.quad_ops, x1, optimize=True)
                q2 = np.einsum("cab,jba->cj", m.quad_ops, x2, optimize=True)
                quad[:, j0:j1] = np.real(-0.25j * tau * q1 + 0.25j * tau * q2)
        if quad is not None:
            out = out + 2.0 * self.u.samples[:, start:stop] * quad
        return out

    def checkpointed_sensitivity(self, state, final, stride: int) -> tuple[np.ndarray, np.ndarray]:
        """Final state and sensitivity while storing only every ``stride``-th state.

        Each segment is recomputed from its checkpoint during the adjoint
        sweep, so memory scales with ``J / stride + stride`` states. The
        result is identical to :meth:`sensitivity` on full trajectories.
        """
        m = self.model
        if not isinstance(m, DenseModel):
            raise CapabilityError("checkpointed gradients are implemented for Crank-Nicolson models")
        if stride < 1:
            raise ValueError("stride must be positive")
        a = self._cayley

        def step(j, s):
            return a[j] @ s @ a[j].conj().T if m.density else a[j] @ s

        def back(j, s):
            ah = a[j].conj().T
            return ah @ s @ a[j] if m.density else ah @ s

        s = np.asarray(state, dtype=np.complex128)
        checkpoints = {0: s}
        for j in range(self.steps):
            s = step(j, s)
            if (j + 1) % stride == 0:
                checkpoints[j + 1] = s
        final_state = s
        sens = np.empty((m.channels, self.steps))
        chi_end = np.asarray(final, dtype=np.complex128)
        starts = list(range(0, self.steps, stride))
        for j0 in reversed(starts):
            j1 = min(self.steps, j0 + stride)
            seg = np.empty((j1 - j0 + 1,) + s.shape, dtype=np.complex128)
            seg[0] = checkpoints[j0]
            for j in range(j0, j1):
                seg[j - j0 + 1] = step(j, seg[j - j0])
            chi = np.empty_like(seg)
            chi[-1] = chi_end
            for j in range(j1 - 1, j0 - 1, -1):
                chi[j - j0] = back(j, chi[j - j0 + 1])
            sens[:, j0:j1] = self.sensitivity(seg, chi, start=j0)
            chi_end = chi[0]
        return final_state, sens

    # -- assembly -----------------------------------------------------------

    def assemble(self) -> "AssembledPropagator":
        if not isinstance(self.model, DenseModel):
            raise CapabilityError(
                "propagator assembly is only available for Crank-Nicolson models"
            )
        m = np.eye(self.model.dim, dtype=np.complex128)
        for aj in self._cayley:
            m = aj @ m
        return AssembledPropagator(m, self.u.grid, self.model.density)


@dataclass(frozen=True, eq=False)
class AssembledPropagator:
    """``M = A_{J-1} ... A_0`` over ``grid``; acts by conjugation on operators."""

    matrix: np.ndarray
    grid: TimeGrid
    density: bool = False

    def apply(self, state) -> np.ndarray:
        if self.density:
            return self.matrix @ state @ self.matrix.conj().T
        return linalg.matvec(self.matrix, state)

    def apply_adjoint(self, state) -> np.ndarray:
        mh = self.matrix.conj().T
        if self.density:
            return mh @ state @ self.matrix
        return linalg.matvec(mh, state)

    def compose(self, later: "AssembledPropagator") -> "AssembledPropagator":
        """Propagator over this span followed by ``later``."""
        grid = TimeGrid(self.grid.t_start, later.grid.t_end, self.grid.steps + later.grid.steps)
        return AssembledPropagator(later.matrix @ self.matrix, grid, self.density)

    def unitarity_defect(self) -> float:
        d = self.matrix.shape[0]
        return float(np.linalg.norm(self.matrix.conj().T @ self.matrix - np.eye(d)))


def propagate(model: HamiltonianModel, u: ControlField, state, direction: str = "forward") -> np.ndarray:
    """Trajectory on the grid points of ``u``.

    ``direction='forward'`` starts from ``state`` at ``t_start``;
    ``'backward'`` treats ``state`` as the condition at ``t_end`` and
    inverts the dynamics. Either way ``out[j]`` is the state at ``t_j``.
    """
    sweep = Sweep(model, u)
    if direction == "forward":
        return sweep.forward(state)
    if direction == "backward":
        return sweep.backward(state)
    raise ValueError(f"unknown direction {direction!r}")


def adjoint(model, u: ControlField, forward_traj, final, linearized: bool = True) -> np.ndarray:
    return Sweep(model, u).adjoint(forward_traj, final, linearized=linearized)


def assemble_propagator(model: HamiltonianModel, u: ControlField) -> AssembledPropagator:
    if not isinstance(model, DenseModel):
        raise CapabilityError("propagator assembly is only available for Crank-Nicolson models")
    return Sweep(model, u).assemble()


# -- binary matrix format ---------------------------------------------------

_MAT_MAGIC = b"ISMM"


def matrix_to_bytes(m) -> bytes:
    """Header (magic, version, rows, cols) then little-endian complex pairs."""
    m = np.asarray(m, dtype=np.complex128)
    head = _MAT_MAGIC + np.array([1, m.shape[0], m.shape[1]], dtype="<u4").tobytes()
    return head + m.astype("<c16").tobytes()


def matrix_from_bytes(buf: bytes) -> np.ndarray:
    if buf[:4] != _MAT_MAGIC:
        raise ValueError("not a matrix buffer")
    version, rows, cols = np.frombuffer(buf, dtype="<u4", count=3, offset=4)
    if version != 1:
        raise ValueError(f"unsupported matrix format version {version}")
    data = np.frombuffer(buf, dtype="<c16", offset=16)
    if data.size != rows * cols:
        raise ValueError("truncated matrix buffer")
    return data.reshape(int(rows), int(cols)).astype(np.complex128)
