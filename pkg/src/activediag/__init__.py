"""Group-based active diagnosis under persistent sensor faults."""

from activediag.errors import (
    ContradictionError,
    DiagnosisError,
    ExhaustedError,
    ModelError,
    SizeCapError,
    UnknownIdentifierError,
)
from activediag.model import (
    BeliefState,
    DiagnosisModel,
    PartialRealization,
    PosteriorTable,
    compatible_states,
    initial_belief,
    load_model,
    posterior,
    reward,
    update_belief,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefState",
    "ContradictionError",
    "DiagnosisError",
    "DiagnosisModel",
    "ExhaustedError",
    "ModelError",
    "PartialRealization",
    "PosteriorTable",
    "SizeCapError",
    "UnknownIdentifierError",
    "compatible_states",
    "initial_belief",
    "load_model",
    "posterior",
    "reward",
    "update_belief",
]
