"""Dissipative mechanical squeezing in two-tone driven optomechanics.

Lindblad propagation in a truncated Fock space, an exact Gaussian moment
engine, Krotov pulse optimization and the analytic drive protocols.
"""
from .analysis import SqueezeMetrics, metrics, squeezing_db, variance
from .errors import (
    ConfigError,
    CutoffError,
    IntegrationError,
    KrotovStepError,
    NotReachedError,
    OptoSqueezeError,
    SqueezeParameterError,
    StepSizeError,
    SteadyStateError,
)
from .fock import FockCutoffs, initial_state
from .krotov import KrotovConfig, OptimizationRecord, evaluate, optimize
from .model import TWO_PI, Liouvillian, PulsePair, SystemParams, TimeGrid
from .moments import GaussianState, evolve_moments, steady_state
from .propagator import make_grid, propagate_backward, propagate_forward
from .protocols import ProtocolSpec, cooling_delay_time, line_search_ratio, make_pulses

__version__ = "0.1.0"
