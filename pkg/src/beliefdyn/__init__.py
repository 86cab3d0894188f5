"""Markov and quantum random-walk models of belief change during evidence monitoring."""

from .estimators import MarkovBeliefModel, MarkovVBeliefModel, QuantumBeliefModel, make_model
from .inference import FitResult, GeneralizationReport, fit, generalization_test, log_likelihood
from .models import (
    DEFAULT_TIMINGS,
    MarkovParams,
    MarkovVParams,
    QuantumParams,
    TimingPair,
    interference_effect,
    joint_table,
    marginal,
)

__all__ = [
    "DEFAULT_TIMINGS",
    "FitResult",
    "GeneralizationReport",
    "MarkovBeliefModel",
    "MarkovParams",
    "MarkovVBeliefModel",
    "MarkovVParams",
    "QuantumBeliefModel",
    "QuantumParams",
    "TimingPair",
    "fit",
    "generalization_test",
    "interference_effect",
    "joint_table",
    "log_likelihood",
    "make_model",
    "marginal",
]
