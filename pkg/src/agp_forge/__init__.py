"""Algebraic adiabatic gauge potentials for spin Hamiltonians."""

from .agp import AgpBasis, AgpSolution, AgpSolver, generate_basis, solve_exact, solve_restricted
from .models import ParametricHamiltonian, Schedule, transverse_ising_chain, two_spin_system
from .pauli import PauliOperator, PauliString

__version__ = "0.1.0"

__all__ = [
    "AgpBasis",
    "AgpSolution",
    "AgpSolver",
    "ParametricHamiltonian",
    "PauliOperator",
    "PauliString",
    "Schedule",
    "generate_basis",
    "solve_exact",
    "solve_restricted",
    "transverse_ising_chain",
    "two_spin_system",
]
