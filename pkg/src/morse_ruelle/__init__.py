"""Gradient-flow dynamics, resonance spectra and Morse topology on small manifolds."""
from .errors import ArtifactError, ContractViolation
from .manifold import ManifoldModel, builtin, custom_model, model_from_config
from .critical import CriticalPointRecord, check_hypotheses, find_critical_points
from .spectrum import SpectrumTable, enumerate_resonances, multiplicity_alpha, weyl_check
from .flowsim import basin_map, count_connections, flow, limits
from .morse_complex import ComplexData, build, lefschetz
from .correlation import CorrelationTrace, DecayFit, fit_decay, trace_k0, trace_kn

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "ContractViolation",
    "ManifoldModel",
    "builtin",
    "custom_model",
    "model_from_config",
    "CriticalPointRecord",
    "check_hypotheses",
    "find_critical_points",
    "SpectrumTable",
    "enumerate_resonances",
    "multiplicity_alpha",
    "weyl_check",
    "basin_map",
    "count_connections",
    "flow",
    "limits",
    "ComplexData",
    "build",
    "lefschetz",
    "CorrelationTrace",
    "DecayFit",
    "fit_decay",
    "trace_k0",
    "trace_kn",
]
