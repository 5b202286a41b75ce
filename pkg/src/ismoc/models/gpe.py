"""One-dimensional Gross-Pitaevskii condensate in a splitting microtrap."""

from __future__ import annotations

import logging

import numpy as np

from .. import linalg
from .base import SplitOperatorModel

__all__ = ["GpeModel", "trap_potential", "ground_state", "GroundStateError", "gpe_energy"]

log = logging.getLogger(__name__)


class GroundStateError(RuntimeError):
    pass


def trap_potential(x, lam: float, d: float) -> np.ndarray:
    """Double-well trap: harmonic at ``lam = 0``, split wells at ``+-lam d/2``."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    s = lam * d
    outer = 0.5 * (ax - s / 2) ** 2
    inner = 0.5 * (s**2 / 8 - x**2)
    return np.where(ax > s / 4, outer, inner)


def _trap_derivative(x, lam: float, d: float) -> np.ndarray:
    ax = np.abs(np.asarray(x, dtype=np.float64))
    s = lam * d
    return np.where(ax > s / 4, -0.5 * d * (ax - s / 2), lam * d * d / 8)


class GpeModel(SplitOperatorModel):
    """``H = -(1/2) d^2/dx^2 + V(x, lambda) + kappa |psi|^2`` on a periodic grid."""

    def __init__(self, kappa: float = 1.0, d: float = 10.0, x_min: float = -10.0,
                 x_max: float = 10.0, points: int = 50):
        x = np.linspace(x_min, x_max, points, endpoint=False)
        dx = (x_max - x_min) / points
        k = 2 * np.pi * np.fft.fftfreq(points, d=dx)
        super().__init__(x, 0.5 * k**2, kappa, channels=1, name="gpe")
        self.d = float(d)
        self.domain = (float(x_min), float(x_max))

    def potential(self, u) -> np.ndarray:
        return trap_potential(self.x, float(np.ravel(u)[0]), self.d)

    def dpotential(self, u) -> np.ndarray:
        return _trap_derivative(self.x, float(np.ravel(u)[0]), self.d)[None, :]

    def describe(self) -> dict:
        desc = super().describe()
        desc.update(d=self.d, domain=list(self.domain))
        return desc


def gpe_energy(model: SplitOperatorModel, lam: float, psi) -> float:
    """Mean-field energy including ``(kappa/2) int |psi|^4``."""
    psi = np.asarray(psi, dtype=np.complex128)
    f = np.fft.fft(psi, norm="ortho")
    kin = float(np.sum(model.spectrum * np.abs(f) ** 2))
    dens = np.abs(psi) ** 2
    pot = float(np.sum(model.potential(np.atleast_1d(lam)) * dens))
    inter = 0.5 * model.kappa * float(np.sum(dens**2)) / model.dx
    return kin + pot + inter


def _residual(model, lam, psi) -> tuple[float, float]:
    h = model.hamiltonian_matrix(lam, psi)
    hpsi = h @ psi
    mu = float(np.real(np.vdot(psi, hpsi)))
    return float(np.linalg.norm(hpsi - mu * psi)), mu


def ground_state(model: SplitOperatorModel, lam: float, *, tau: float = 1e-2,
                 energy_tol: float = 1e-10, residual_tol: float = 1e-8,
                 max_steps: int = 200_000, max_scf: int = 500, history: list | None = None):
    """Normalized ground state of ``H0 + V(x, lam)`` with the mean-field term.

    Imaginary-time Strang propagation with per-step renormalization until the
    energy change drops below ``energy_tol``; the splitting bias is then
    removed by a damped self-consistent eigen-iteration until the residual
    ``||(H[psi] - mu) psi||`` is below ``residual_tol``.

    Args:
        history: if given, the energy after every imaginary-time step is
            appended to it.
    """
    x = model.x
    psi = np.exp(-0.5 * x**2).astype(np.complex128)
    psi /= np.linalg.norm(psi)
    kin = np.exp(-0.5 * tau * model.spectrum)
    v = model.potential(np.atleast_1d(lam))
    scale = tau * model.kappa / model.dx
    energy = gpe_energy(model, lam, psi)
    for _ in range(max_steps):
        a = np.fft.ifft(kin * np.fft.fft(psi, norm="ortho"), norm="ortho")
        a = a * np.exp(-(tau * v + scale * np.abs(a) ** 2))
        psi = np.fft.ifft(kin * np.fft.fft(a, norm="ortho"), norm="ortho")
        psi /= np.linalg.norm(psi)
        new = gpe_energy(model, lam, psi)
        if history is not None:
            history.append(new)
        if abs(new - energy) < energy_tol:
            energy = new
            break
        energy = new
    else:
        raise GroundStateError(f"imaginary-time iteration did not converge in {max_steps} steps")

    res, _ = _residual(model, lam, psi)
    mix = 0.5
    for _ in range(max_scf):
        if res <= residual_tol:
            break
        w, vecs = linalg.eig_hermitian(model.hamiltonian_matrix(lam, psi))
        # tunnelling doublets are degenerate to working precision: project onto
        # the lowest cluster instead of trusting eigh's arbitrary basis
        low = vecs[:, w < w[0] + 1e-6]
        g = low @ (low.conj().T @ psi)
        g /= np.linalg.norm(g)
        psi = (1 - mix) * psi + mix * g
        psi /= np.linalg.norm(psi)
        res, _ = _residual(model, lam, psi)
    if res > residual_tol:
        raise GroundStateError(f"ground state residual {res:.3e} above {residual_tol:.1e}")
    # fix the global phase: real and positive overlap with a Gaussian
    psi = psi * np.exp(-1j * np.angle(np.sum(psi)))
    psi = psi.real.astype(np.complex128) if np.max(np.abs(psi.imag)) < 1e-12 else psi
    psi /= np.linalg.norm(psi)
    log.debug("ground state lam=%g: E=%.12f residual=%.2e", lam, energy, res)
    return psi
