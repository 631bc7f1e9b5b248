"""Finite-volume quantum spin systems: local algebras, dynamics, KMS states,
modular theory and entropy production in reservoir setups."""

from . import dynamics, interaction, linalg, modular, ness, quasilocal, states
from .errors import SpinstatError
from .interaction import Interaction, ReservoirPartition, build_heisenberg_chain, build_ising_chain
from .quasilocal import Lattice, LocalOperator, Region
from .states import DensityState

__all__ = [
    "DensityState",
    "Interaction",
    "Lattice",
    "LocalOperator",
    "Region",
    "ReservoirPartition",
    "SpinstatError",
    "build_heisenberg_chain",
    "build_ising_chain",
    "dynamics",
    "interaction",
    "linalg",
    "modular",
    "ness",
    "quasilocal",
    "states",
]

__version__ = "0.1.0"
