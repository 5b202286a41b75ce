"""Selectively addressable coupled spin-1/2 network (density-matrix form)."""

from __future__ import annotations

from functools import reduce

import numpy as np

from .base import DenseModel

__all__ = ["SpinChainModel", "spin_operators", "DEFAULT_TOPOLOGY", "DEFAULT_COUPLING"]

DEFAULT_TOPOLOGY = ((1, 2), (1, 3), (2, 3), (2, 5), (3, 4))
DEFAULT_COUPLING = 140.0

_IX = np.array([[0, 0.5], [0.5, 0]], dtype=np.complex128)
_IY = np.array([[0, -0.5j], [0.5j, 0]], dtype=np.complex128)
_IZ = np.array([[0.5, 0], [0, -0.5]], dtype=np.complex128)
_PAULI = {"x": _IX, "y": _IY, "z": _IZ}


def spin_operators(n_spins: int, k: int, axis: str) -> np.ndarray:
    """``I_axis`` acting on spin ``k`` (1-based) of ``n_spins``."""
    if not 1 <= k <= n_spins:
        raise ValueError(f"spin index {k} out of range 1..{n_spins}")
    factors = [np.eye(2, dtype=np.complex128)] * n_spins
    factors[k - 1] = _PAULI[axis]
    return reduce(np.kron, factors)


class SpinChainModel(DenseModel):
    """``H = H0 + sum_k (u_x^k I_x^(k) + u_y^k I_y^(k))``.

    ``H0 = 2 pi sum_(k,l) J_kl I_z^(k) I_z^(l)``. Channels are ordered
    ``x_1, y_1, x_2, y_2, ...``.
    """

    def __init__(self, n_spins: int = 5, topology=None, coupling: float = DEFAULT_COUPLING):
        if topology is None:
            topology = [p for p in DEFAULT_TOPOLOGY if max(p) <= n_spins]
        couplings = {}
        for pair in topology:
            if len(pair) == 3:
                k, l, jkl = pair
            else:
                (k, l), jkl = pair, coupling
            couplings[(int(k), int(l))] = float(jkl)
        d = 2**n_spins
        h0 = np.zeros((d, d), dtype=np.complex128)
        for (k, l), jkl in couplings.items():
            h0 += 2 * np.pi * jkl * spin_operators(n_spins, k, "z") @ spin_operators(n_spins, l, "z")
        ops = []
        for k in range(1, n_spins + 1):
            ops.append(spin_operators(n_spins, k, "x"))
            ops.append(spin_operators(n_spins, k, "y"))
        super().__init__(h0, np.array(ops), density=True, name=f"spin{n_spins}")
        self.n_spins = n_spins
        self.couplings = couplings
        self.coupling = float(coupling)

    def operator(self, k: int, axis: str) -> np.ndarray:
        return spin_operators(self.n_spins, k, axis)

    def channel_label(self, c: int) -> str:
        return f"{'xy'[c % 2]}{c // 2 + 1}"

    def describe(self) -> dict:
        d = super().describe()
        d.update(
            n_spins=self.n_spins,
            couplings=[[k, l, j] for (k, l), j in sorted(self.couplings.items())],
        )
        return d
