"""Direct and inverse spectral computations for 2x2 canonical systems."""

from .model import (
    Atom,
    ComparabilityError,
    GridConfig,
    Hamiltonian,
    InvariantViolation,
    NumericalError,
    ReconstructionResult,
    SpectralMeasure,
    TransferMatrix,
    ValidationError,
    load_hamiltonian,
    load_measure,
    normalize_trace,
    save_hamiltonian,
    save_measure,
)
from .forward import (
    WeylValue,
    exponential_type,
    find_zeros,
    herglotz_constants,
    propagate,
    spectral_measure,
    weyl_function,
    weyl_titchmarsh,
)
from .pwspace import PWBasis, PWOperator, build_operator, frame_bounds, sinc_kernel
from .inverse import RecoveryPipeline, reconstruct, zeta

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "ComparabilityError",
    "GridConfig",
    "Hamiltonian",
    "InvariantViolation",
    "NumericalError",
    "ReconstructionResult",
    "SpectralMeasure",
    "TransferMatrix",
    "ValidationError",
    "WeylValue",
    "PWBasis",
    "PWOperator",
    "RecoveryPipeline",
    "build_operator",
    "exponential_type",
    "find_zeros",
    "frame_bounds",
    "herglotz_constants",
    "load_hamiltonian",
    "load_measure",
    "normalize_trace",
    "propagate",
    "reconstruct",
    "save_hamiltonian",
    "save_measure",
    "sinc_kernel",
    "spectral_measure",
    "weyl_function",
    "weyl_titchmarsh",
    "zeta",
]
