"""Quantum and quasiclassical out-of-time-ordered correlators for small
Bose-Hubbard lattices."""

__version__ = "0.1.0"

from .model import (BasisError, BoseHubbardParams, FockBasis, SparseOperator, build_basis,
                    build_hamiltonian, build_observable)
from .quantum import (PropagationError, PropagatorConfig, StateVector, coherent_state, evolve,
                      fock_state, quantum_otoc)
from .classical import (FlowConfig, FlowError, conserved, flow, grad_observable, hcl,
                        lyapunov)
from .sampling import SampleBatch, SamplerSpec, estimate, sample
from .profile import ErgodicProfile
from .otoc import (EstimatorError, OTOCSeries, ProfileConfig, cinf, classical_otoc,
                   fit_growth_rate, weyl_square)
from .families import family_count
from .sections import SectionPoint, poincare, stroboscopic

__all__ = [
    "BasisError", "BoseHubbardParams", "FockBasis", "SparseOperator", "build_basis",
    "build_hamiltonian", "build_observable", "PropagationError", "PropagatorConfig",
    "StateVector", "coherent_state", "evolve", "fock_state", "quantum_otoc", "FlowConfig",
    "FlowError", "conserved", "flow", "grad_observable", "hcl", "lyapunov", "SampleBatch",
    "SamplerSpec", "estimate", "sample", "ErgodicProfile", "EstimatorError", "OTOCSeries",
    "ProfileConfig", "cinf", "classical_otoc", "fit_growth_rate", "weyl_square", "family_count", "SectionPoint",
    "poincare", "stroboscopic",
]
