"""Simulation and limit-setting for current-on/off searches for Pauli-forbidden X-rays."""

from pepsim.config import ExperimentConfig, load_config, n_new_electrons
from pepsim.quon import QuonParameter, build_ik_operators, check_quon_relation

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "QuonParameter",
    "build_ik_operators",
    "check_quon_relation",
    "load_config",
    "n_new_electrons",
]
