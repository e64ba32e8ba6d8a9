"""Exception types shared across the package."""

from __future__ import annotations


class KronregError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(KronregError, ValueError):
    """Dimension mismatch; the message names the offending mode/axis."""


class ParameterError(KronregError, ValueError):
    """Invalid distribution or configuration parameter."""


class NumericalError(KronregError, RuntimeError):
    """Linear-algebra failure (non-SPD matrix, singular system, ...)."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class FactorizationError(KronregError, ValueError):
    """A tensor dimension does not factor as requested; lists valid splits."""


class TensorFormatError(KronregError, ValueError):
    """Malformed tensor file.  ``code`` is one of 'bad-magic', 'bad-version',
    'truncated', 'dim-overflow', 'bad-header'."""

    def __init__(self, message: str, code: str):
        super().__init__(message)
        self.code = code


class IncompleteChainError(KronregError, RuntimeError):
    """Chain directory is missing its completion marker."""


class MetricError(KronregError, ValueError):
    """Undefined evaluation metric (e.g. AUC with a single class)."""


class ChainDivergedError(KronregError, RuntimeError):
    """Non-finite sampler state; carries the iteration and block name."""

    def __init__(self, message: str, iteration: int, block: str):
        super().__init__(message)
        self.iteration = iteration
        self.block = block
