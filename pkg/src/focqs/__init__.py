"""FALQON and FOCQS feedback control on a dense statevector simulator."""

__version__ = "0.1.0"

from .controllers import (
    ControlSchedule,
    FeedbackRecord,
    FocqsParams,
    estimate_Phi,
    falqon_run,
    focqs_run,
    focqs_windowed_run,
    iterative_focqs_run,
    measure_phi,
    measure_phi_tilde,
)
from .pauli import PauliSum, PauliTerm, commutator, to_dense, transverse_field
from .problems import ProblemInstance, exact_ground_energy, gen_ising, gen_mis
from .statevector import EvolutionScheme, StateVector, apply_layer, expectation, init_mixer_ground

__all__ = [
    "ControlSchedule",
    "EvolutionScheme",
    "FeedbackRecord",
    "FocqsParams",
    "PauliSum",
    "PauliTerm",
    "ProblemInstance",
    "StateVector",
    "apply_layer",
    "commutator",
    "estimate_Phi",
    "exact_ground_energy",
    "expectation",
    "falqon_run",
    "focqs_run",
    "focqs_windowed_run",
    "gen_ising",
    "gen_mis",
    "init_mixer_ground",
    "iterative_focqs_run",
    "measure_phi",
    "measure_phi_tilde",
    "to_dense",
    "transverse_field",
]
