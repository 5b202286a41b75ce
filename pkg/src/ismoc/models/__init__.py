"""Benchmark Hamiltonians."""

from .base import CapabilityError, DenseModel, HamiltonianModel, SplitOperatorModel
from .gpe import GpeModel, GroundStateError, ground_state, trap_potential
from .rotor import RotorModel, cos_theta_matrix
from .spin import SpinChainModel, spin_operators

__all__ = [
    "CapabilityError",
    "DenseModel",
    "HamiltonianModel",
    "SplitOperatorModel",
    "GpeModel",
    "GroundStateError",
    "ground_state",
    "trap_potential",
    "RotorModel",
    "cos_theta_matrix",
    "SpinChainModel",
    "spin_operators",
]
