"""Biorthogonal spectra, topological indices and degeneracies of pseudo-Hermitian Ising chains."""

from ._core import (
    Arrangement,
    Classification,
    CrossingEvent,
    ManifoldTrace,
    MetricLabel,
    OracleCheck,
    ParamPoint,
    PseudospecError,
    Termination,
    crossings,
    free_fermion_spectrum,
    hamiltonian,
    oracle_check,
    spectrum,
    sweep,
    trace_manifolds,
)

__all__ = [
    "Arrangement",
    "Classification",
    "CrossingEvent",
    "ManifoldTrace",
    "MetricLabel",
    "OracleCheck",
    "ParamPoint",
    "PseudospecError",
    "Termination",
    "crossings",
    "free_fermion_spectrum",
    "hamiltonian",
    "oracle_check",
    "spectrum",
    "sweep",
    "trace_manifolds",
]
