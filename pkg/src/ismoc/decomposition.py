"""Partition of ``[0, T]`` into subintervals aligned with the fine grid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .controls import ControlError, TimeGrid

__all__ = ["Decomposition"]


@dataclass(frozen=True)
class Decomposition:
    grid: TimeGrid
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) < 2 or idx[0] != 0 or idx[-1] != self.grid.steps:
            raise ControlError("decomposition must start at 0 and end at the last grid point")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ControlError("decomposition boundaries must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def uniform(cls, grid: TimeGrid, n: int) -> "Decomposition":
        if n < 1:
            raise ControlError(f"need at least one subinterval, got N={n}")
        if grid.steps % n:
            raise ControlError(f"J={grid.steps} steps is not divisible by N={n}")
        m = grid.steps // n
        return cls(grid, tuple(range(0, grid.steps + 1, m)))

    @classmethod
    def from_times(cls, grid: TimeGrid, times: Sequence[float]) -> "Decomposition":
        """Boundaries given as times; each must sit on a grid point."""
        idx = []
        for t in times:
            j = (t - grid.t_start) / grid.tau
            jr = int(round(j))
            if abs(j - jr) > 1e-9 or not 0 <= jr <= grid.steps:
                raise ControlError(f"boundary t={t} is not aligned with the time grid")
            idx.append(jr)
        return cls(grid, tuple(idx))

    @property
    def n(self) -> int:
        return len(self.indices) - 1

    def index_range(self, n: int) -> tuple[int, int]:
        if not 0 <= n < self.n:
            raise ControlError(f"subinterval {n} out of range for N={self.n}")
        return self.indices[n], self.indices[n + 1]

    def subgrid(self, n: int) -> TimeGrid:
        return self.grid.sub(*self.index_range(n))

    @property
    def times(self) -> np.ndarray:
        return np.array([self.grid.time_at(j) for j in self.indices])

    def fraction(self, n: int) -> float:
        """``(t_{n+1} - t_n) / T`` from integer step counts."""
        j0, j1 = self.index_range(n)
        return (j1 - j0) / self.grid.steps

    def alpha_scale(self, n: int) -> float:
        return self.fraction(n)

    def beta(self, n: int) -> float:
        j0, j1 = self.index_range(n)
        return self.grid.steps / (j1 - j0)

    def interpolation_weight(self, n: int) -> float:
        """``t_n / T`` for boundary ``n`` (0 and 1 exactly at the ends)."""
        return self.indices[n] / self.grid.steps
