"""Simulation of entanglement distillation for three-particle W-class states."""

__version__ = "0.1.0"

from .protocols import (  # noqa: E402
    Classification,
    ProtocolOutcome,
    WCoefficients,
    analytic_probabilities,
    run_protocol1,
    run_protocol2,
)
from .cavity import CavityParams, run_cavity_protocol  # noqa: E402

__all__ = [
    "Classification",
    "ProtocolOutcome",
    "WCoefficients",
    "analytic_probabilities",
    "run_protocol1",
    "run_protocol2",
    "CavityParams",
    "run_cavity_protocol",
]
