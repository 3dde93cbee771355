"""Two-stage sparse Hamiltonian learning from short-time evolution data."""

from .channels import AnalyticOracle, CircuitOracle, NoiseConfig, QueryMeter
from .estimator import (EstimationResult, HamiltonianLearner, learn,
                        threshold_sweep)
from .model import (SparseHamiltonian, random_sparse, read_hamiltonian,
                    tfim_random, write_hamiltonian)

__all__ = [
    "AnalyticOracle",
    "CircuitOracle",
    "EstimationResult",
    "HamiltonianLearner",
    "NoiseConfig",
    "QueryMeter",
    "SparseHamiltonian",
    "learn",
    "random_sparse",
    "read_hamiltonian",
    "tfim_random",
    "threshold_sweep",
    "write_hamiltonian",
]

__version__ = "0.1.0"
