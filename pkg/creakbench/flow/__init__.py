"""Conditional continuous normalizing flow over speaker embeddings."""
from creakbench.flow.dynamics import DynamicsNet
from creakbench.flow.model import (
    ATTRIBUTE_NAMES,
    CREAK_INDEX,
    AttributeVector,
    FlowModel,
    TraceMethod,
    decode,
    encode,
    log_likelihood,
    manipulate,
    sample,
    shift_creak,
    shift_creak_array,
)
from creakbench.flow.solver import SolverConfig, SolverMethod, integrate
from creakbench.flow.train import TrainHyper, train

__all__ = [
    "ATTRIBUTE_NAMES",
    "CREAK_INDEX",
    "AttributeVector",
    "DynamicsNet",
    "FlowModel",
    "SolverConfig",
    "SolverMethod",
    "TraceMethod",
    "TrainHyper",
    "decode",
    "encode",
    "integrate",
    "log_likelihood",
    "manipulate",
    "sample",
    "shift_creak",
    "shift_creak_array",
    "train",
]
