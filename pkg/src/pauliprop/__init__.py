"""Sparse Pauli-operator back-propagation for spin-1/2 chains.

Evolves local observables in the Heisenberg picture under Trotterized
dynamics, keeping the operator as a sparse sum of Pauli words with a
configurable truncation budget, and provides the matching error-bound
calculators, operator-complexity analytics, and a dense-matrix oracle.
"""

__version__ = "0.1.0"

from .pauli import PauliWord, commutes, multiply, weight
from .sparse import (
    PauliSum,
    TruncationPolicy,
    accumulate,
    pauli_norm2,
    squared_tail,
    top_k_bucket,
    top_k_exact,
    weight_truncate,
)
from .hamiltonian import Hamiltonian, build_xxz_chain, parse_hamiltonian
from .propagation import (
    EngineAbort,
    ProductState,
    RunConfig,
    TrajectoryRecord,
    backpropagate,
    conjugate_rotation,
    expectation_product_state,
    staggered_magnetization,
)
from .analytics import (
    BoundReport,
    OseResult,
    delta_bound,
    distributions,
    k_prescription,
    ose,
    truncation_error,
    weight_truncation_bound,
    xy_structure_check,
)
from .oracle import (
    dense_heisenberg_coefficients,
    dense_trotter_expectation,
    local_scrambling_mc,
)

__all__ = [
    "PauliWord",
    "commutes",
    "multiply",
    "weight",
    "PauliSum",
    "TruncationPolicy",
    "accumulate",
    "pauli_norm2",
    "top_k_exact",
    "top_k_bucket",
    "weight_truncate",
    "squared_tail",
    "Hamiltonian",
    "build_xxz_chain",
    "parse_hamiltonian",
    "RunConfig",
    "ProductState",
    "TrajectoryRecord",
    "EngineAbort",
    "conjugate_rotation",
    "backpropagate",
    "expectation_product_state",
    "staggered_magnetization",
    "OseResult",
    "BoundReport",
    "ose",
    "delta_bound",
    "k_prescription",
    "truncation_error",
    "xy_structure_check",
    "weight_truncation_bound",
    "distributions",
    "dense_trotter_expectation",
    "dense_heisenberg_coefficients",
    "local_scrambling_mc",
    "__version__",
]
