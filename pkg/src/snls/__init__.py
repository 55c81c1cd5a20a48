"""Stochastic nonlinear Schroedinger simulator with blow-up diagnostics.

Solves i du = (Delta u + |u|^{2 sigma} u) dt + u o dW on a periodic box with
a Strang split-step Fourier scheme, where W is a real Q-Wiener process with a
Gaussian convolution kernel. Around the integrator sit the conserved and
evolving functionals, a blow-up detector, Monte Carlo checks of the
expectation identities, and the control-then-noise blow-up pipeline.
"""

from .control import ControlResult, construct_control, replay, two_phase_batch, two_phase_run
from .diagnostics import DiagnosticsRecord, blowup_functional, record
from .dynamics import (
    BlowupDetectorParams,
    ModelSpec,
    Trajectory,
    TruncationParams,
    UnderResolvedError,
    evolve,
    evolve_batch,
    strang_step,
)
from .ensemble import EnsembleStats, run_ensemble, wilson_interval
from .grid import ComplexField, Grid, field_from_function, make_grid
from .noise import CovarianceOperator, KernelSpec, ResolutionError, build_operator

__version__ = "0.1.0"

__all__ = [
    "BlowupDetectorParams",
    "ComplexField",
    "ControlResult",
    "CovarianceOperator",
    "DiagnosticsRecord",
    "EnsembleStats",
    "Grid",
    "KernelSpec",
    "ModelSpec",
    "ResolutionError",
    "Trajectory",
    "TruncationParams",
    "UnderResolvedError",
    "blowup_functional",
    "build_operator",
    "construct_control",
    "evolve",
    "evolve_batch",
    "field_from_function",
    "make_grid",
    "record",
    "replay",
    "run_ensemble",
    "strang_step",
    "two_phase_batch",
    "two_phase_run",
    "wilson_interval",
]
