"""Multiparty delegated quantum computation, simulated exactly.

Clients jointly prepare encrypted qubits on an untrusted server, drive a
measurement-based computation on a brickwork graph through a trusted
classical oracle holding additive secret shares, and decrypt their own
output wires. See the module docstrings for the conventions; the short
version: angles are integers mod 8, qubit 0 is the leftmost factor, and
measuring a qubit removes it.
"""
from .brickwork import (
    BrickworkGraph,
    MeasurementPattern,
    build_brickwork,
    compute_flow,
    pattern_from_json,
    random_pattern,
    reference_execute,
)
from .protocol import ProtocolRun, ServerStrategy, Transcript, run_full_protocol
from .quantum import DensityMatrix, PureState, plus_state, trace_distance

__version__ = "0.1.0"

__all__ = [
    "BrickworkGraph",
    "DensityMatrix",
    "MeasurementPattern",
    "ProtocolRun",
    "PureState",
    "ServerStrategy",
    "Transcript",
    "build_brickwork",
    "compute_flow",
    "pattern_from_json",
    "plus_state",
    "random_pattern",
    "reference_execute",
    "run_full_protocol",
    "trace_distance",
    "__version__",
]
