"""Bayesian Kronecker-factored regression for 3-D tensor predictors with
mixed continuous/binary responses, fit by a blocked Gibbs sampler with
global-local shrinkage priors and Polya-Gamma augmentation."""

from .errors import (
    ChainDivergedError,
    FactorizationError,
    IncompleteChainError,
    KronregError,
    MetricError,
    NumericalError,
    ParameterError,
    ShapeError,
    TensorFormatError,
)
from .gibbs import ChainOutput, predict, run_chain
from .model import Hyperparams, ResponseSpec, Standardizer, UnfoldedDataset
from .rng import RngStream
from .tensor import BlockShape, bilinear_inner, kron3, refold, unfold, unvec3, vec3

__all__ = [
    "BlockShape",
    "ChainDivergedError",
    "ChainOutput",
    "FactorizationError",
    "Hyperparams",
    "IncompleteChainError",
    "KronregError",
    "MetricError",
    "NumericalError",
    "ParameterError",
    "ResponseSpec",
    "RngStream",
    "ShapeError",
    "Standardizer",
    "TensorFormatError",
    "UnfoldedDataset",
    "bilinear_inner",
    "kron3",
    "predict",
    "refold",
    "run_chain",
    "unfold",
    "unvec3",
    "vec3",
]

__version__ = "0.1.0"
