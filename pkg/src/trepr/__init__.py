"""Lindblad dynamics and linear-response EPR spectra of radical-triplet spin systems."""

from .config import ExperimentConfig, parse_config, serialize_config
from .liouville import SuperOperator, hamiltonian_superop, liouvillian
from .model import ModelParams, UnitSystem, build_hamiltonian, build_jump_channels, build_space
from .propagate import Protocol, evolve_protocol
from .response import Probe, SpectrumConfig, SpectrumResult, chi_nonstationary, epr_sweep, trepr_surface

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "ModelParams",
    "Probe",
    "Protocol",
    "SpectrumConfig",
    "SpectrumResult",
    "SuperOperator",
    "UnitSystem",
    "build_hamiltonian",
    "build_jump_channels",
    "build_space",
    "chi_nonstationary",
    "epr_sweep",
    "evolve_protocol",
    "hamiltonian_superop",
    "liouvillian",
    "parse_config",
    "serialize_config",
    "trepr_surface",
]
