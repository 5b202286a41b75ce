"""Hamiltonian model interfaces.

Two families are supported:

* :class:`DenseModel` -- ``H(u) = H0 + sum_c u_c A_c + sum_c u_c**2 B_c`` as
  dense Hermitian matrices, propagated by Crank-Nicolson. With
  ``density=True`` states are operators evolved by two-sided conjugation.
* :class:`SplitOperatorModel` -- ``H(u) = K + V(u, x) + kappa |psi(x)|**2`` on
  a periodic grid, propagated by Strang splitting with ``K`` diagonal in
  Fourier space.
"""

from __future__ import annotations

import numpy as np

from ..linalg import is_hermitian

__all__ = ["HamiltonianModel", "DenseModel", "SplitOperatorModel", "CapabilityError"]

CN_DENSE = "cn-dense"
STRANG_SPLIT = "strang-split"
NONLINEAR_STRANG = "nonlinear-strang"


class CapabilityError(TypeError):
    """An operation was requested that the model does not support."""


class HamiltonianModel:
    kind: str
    dim: int
    channels: int
    density: bool = False
    name: str = "model"

    @property
    def state_shape(self) -> tuple[int, ...]:
        return (self.dim, self.dim) if self.density else (self.dim,)

    @property
    def linear(self) -> bool:
        return self.kind != NONLINEAR_STRANG

    def describe(self) -> dict:
        return {"name": self.name, "kind": self.kind, "dim": self.dim, "channels": self.channels}


class DenseModel(HamiltonianModel):
    kind = CN_DENSE

    def __init__(self, h0, controls, quadratic=None, *, density=False, name="dense"):
        h0 = np.asarray(h0, dtype=np.complex128)
        controls = np.asarray(controls, dtype=np.complex128)
        if controls.ndim == 2:
            controls = controls[None]
        d = h0.shape[0]
        if h0.shape != (d, d) or controls.shape[1:] != (d, d):
            raise ValueError("operator shapes are inconsistent")
        if quadratic is not None:
            quadratic = np.asarray(quadratic, dtype=np.complex128)
            if quadratic.shape != controls.shape:
                raise ValueError("quadratic terms must match the linear control terms")
            if not np.any(quadratic):
                quadratic = None
        for op in [h0, *controls, *(quadratic if quadratic is not None else [])]:
            if not is_hermitian(op, 1e-12):
                raise ValueError("model operators must be Hermitian")
        self.h0 = h0
        self.ops = controls
        self.quad_ops = quadratic
        self.dim = d
        self.channels = controls.shape[0]
        self.density = bool(density)
        self.name = name

    def hamiltonian(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).reshape(self.channels)
        h = self.h0 + np.tensordot(u, self.ops, axes=1)
        if self.quad_ops is not None:
            h = h + np.tensordot(u**2, self.quad_ops, axes=1)
        return h

    def hamiltonians(self, samples) -> np.ndarray:
        """Stack ``H(u_j)`` for ``samples`` of shape ``(C, J)``."""
        s = np.asarray(samples, dtype=np.float64)
        h = self.h0[None] + np.einsum("cj,cab->jab", s, self.ops)
        if self.quad_ops is not None:
            h = h + np.einsum("cj,cab->jab", s**2, self.quad_ops)
        return h

    def dh_du(self, u) -> np.ndarray:
        """``dH/du_c`` at ``u``, shape ``(C, d, d)``."""
        if self.quad_ops is None:
            return self.ops.copy()
        u = np.asarray(u, dtype=np.float64).reshape(self.channels)
        return self.ops + 2.0 * u[:, None, None] * self.quad_ops


class SplitOperatorModel(HamiltonianModel):
    """Grid model with kinetic spectrum ``spectrum[k]`` and potential ``V(u, x)``.

    States are unit-norm coefficient vectors, so the local density entering
    the nonlinearity is ``|psi_k|**2 / dx``.

    Subclasses provide :meth:`potential` and :meth:`dpotential`.
    """

    def __init__(self, x, spectrum, kappa=0.0, *, channels=1, name="split"):
        self.x = np.asarray(x, dtype=np.float64)
        self.spectrum = np.asarray(spectrum, dtype=np.float64)
        if self.spectrum.shape != self.x.shape:
            raise ValueError("spectrum and grid sizes differ")
        self.dx = float(self.x[1] - self.x[0]) if self.x.size > 1 else 1.0
        self.kappa = float(kappa)
        self.dim = self.x.size
        self.channels = channels
        self.density = False
        self.name = name

    @property
    def kind(self) -> str:
        return NONLINEAR_STRANG if self.kappa != 0.0 else STRANG_SPLIT

    def potential(self, u) -> np.ndarray:
        raise NotImplementedError

    def dpotential(self, u) -> np.ndarray:
        """``dV/du_c`` on the grid, shape ``(C, M)``."""
        raise NotImplementedError

    def potentials(self, samples) -> np.ndarray:
        s = np.asarray(samples, dtype=np.float64)
        return np.array([self.potential(s[:, j]) for j in range(s.shape[1])])

    def dpotentials(self, samples) -> np.ndarray:
        s = np.asarray(samples, dtype=np.float64)
        return np.array([self.dpotential(s[:, j]) for j in range(s.shape[1])])

    def kinetic_matrix(self) -> np.ndarray:
        """Dense kinetic operator ``F^-1 diag(spectrum) F``."""
        eye = np.eye(self.dim)
        f = np.fft.fft(eye, axis=0, norm="ortho")
        return np.fft.ifft(self.spectrum[:, None] * f, axis=0, norm="ortho")

    def hamiltonian_matrix(self, u, psi=None) -> np.ndarray:
        """Dense mean-field Hamiltonian at control ``u`` (density from ``psi``)."""
        v = self.potential(np.atleast_1d(u))
        if psi is not None and self.kappa:
            v = v + self.kappa * np.abs(psi) ** 2 / self.dx
        return self.kinetic_matrix() + np.diag(v)

    def describe(self) -> dict:
        d = super().describe()
        d.update(kappa=self.kappa, grid_points=self.dim)
        return d
