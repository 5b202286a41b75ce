"""Linear rigid rotor driven by a linearly polarized field (m = 0 block)."""

from __future__ import annotations

import numpy as np

from .base import DenseModel

__all__ = ["RotorModel", "cos_theta_matrix", "HCN"]

#: HCN parameters in atomic units.
HCN = dict(B=6.6376e-6, mu0=1.1413, alpha_par=20.055, alpha_perp=8.638)


def cos_theta_matrix(j_max: int) -> np.ndarray:
    """``<j'|cos(theta)|j>`` for ``m = 0``, ``j, j' <= j_max``."""
    j = np.arange(j_max)
    off = (j + 1) / np.sqrt((2 * j + 1) * (2 * j + 3))
    return np.diag(off, 1) + np.diag(off, -1)


class RotorModel(DenseModel):
    """``H(E) = B J^2 - mu0 cos(theta) E - (E^2/2) [(a_par - a_perp) cos^2(theta) + a_perp]``.

    ``cos^2(theta)`` is the square of the truncated ``cos(theta)`` matrix.
    """

    def __init__(self, j_max: int = 30, B=HCN["B"], mu0=HCN["mu0"],
                 alpha_par=HCN["alpha_par"], alpha_perp=HCN["alpha_perp"]):
        if j_max < 1:
            raise ValueError("j_max must be at least 1")
        j = np.arange(j_max + 1)
        cos = cos_theta_matrix(j_max)
        h0 = np.diag(B * j * (j + 1)).astype(np.complex128)
        lin = -mu0 * cos
        cos2 = cos @ cos
        cos2 = 0.5 * (cos2 + cos2.T)  # exactly symmetric, not just to rounding
        quad = -0.5 * ((alpha_par - alpha_perp) * cos2 + alpha_perp * np.eye(j_max + 1))
        super().__init__(h0, lin[None], quad[None], name=f"rotor{j_max}")
        self.j_max = j_max
        self.B, self.mu0 = B, mu0
        self.alpha_par, self.alpha_perp = alpha_par, alpha_perp
        self.cos = cos

    def describe(self) -> dict:
        d = super().describe()
        d.update(j_max=self.j_max, B=self.B, mu0=self.mu0,
                 alpha_par=self.alpha_par, alpha_perp=self.alpha_perp)
        return d
