"""Simulation and training of variational measurement-based quantum computation
(VMBQC) models on a 1D cluster-state ring.

Qubit ``q`` of a width-``N`` register is bit ``q`` of a basis index; bitstrings
are printed with qubit 0 first.
"""

__version__ = "0.1.0"

from .errors import CapacityError, ConfigError, NumericalError, VMBQCError
from .mmd import KernelConfig, full_gradient, mmd_exact, mmd_from_samples
from .models import (
    CorrectionSchedule,
    ModelSpec,
    exact_channel_distribution,
    make_restricted,
    placement_model,
    random_target,
    sample_model,
)
from .pauli import PauliString, lightcone, propagate
from .statevector import ClusterGeometry, SampleSet
from .train import TrainingConfig, box_summary, learning_curve, train_model

__all__ = [
    "CapacityError",
    "ClusterGeometry",
    "ConfigError",
    "CorrectionSchedule",
    "KernelConfig",
    "ModelSpec",
    "NumericalError",
    "PauliString",
    "SampleSet",
    "TrainingConfig",
    "VMBQCError",
    "box_summary",
    "exact_channel_distribution",
    "full_gradient",
    "learning_curve",
    "lightcone",
    "make_restricted",
    "mmd_exact",
    "mmd_from_samples",
    "placement_model",
    "propagate",
    "random_target",
    "sample_model",
    "train_model",
]
