"""Autoencoder risk landscapes: least-squares risk, Jacobian penalties, and saddle finding."""

from .network import ArchSpec, Net, init, parse_arch, encode, decode, reconstruct
from .risks import (
    Penalty,
    PenaltyKind,
    RiskSpec,
    contractive_penalty,
    normalized_ortho_penalty,
    ortho_contractive_penalty,
    total_objective,
    uls_risk,
)
from .training import TrainConfig, train

__version__ = "0.1.0"
