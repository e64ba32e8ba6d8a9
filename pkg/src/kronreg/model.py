"""Problem definition and sampler state.

A dataset holds n unfolded predictor matrices (p x d), a mixed-type response
matrix, and a dense covariate matrix.  Continuous responses are modeled with
unit observation noise, so they should be standardized before fitting; the
loaders do this by default and record the affine transform so predictions can
be mapped back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError, ShapeError
from .rng import RngStream
from .tensor import BlockShape

__all__ = [
    "ResponseSpec",
    "Standardizer",
    "UnfoldedDataset",
    "Hyperparams",
    "TPBNBlock",
    "ResponseState",
    "ChainState",
    "linear_predictor",
    "working_response",
    "compose_coefficient",
    "default_tau",
]

RESPONSE_KINDS = ("continuous", "binary")


@dataclass(frozen=True)
class ResponseSpec:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in RESPONSE_KINDS:
            raise ParameterError(
                f"response kind must be one of {RESPONSE_KINDS}, got {self.kind!r}"
            )


@dataclass(frozen=True)
class Standardizer:
    """Affine transform y_std = (y - mean) / sd recorded at load time."""

    mean: float
    sd: float

    def apply(self, y: np.ndarray) -> np.ndarray:
        return (y - self.mean) / self.sd

    def invert(self, y_std: np.ndarray) -> np.ndarray:
        return self.mean + self.sd * y_std


@dataclass
class UnfoldedDataset:
    """Immutable-by-convention container shared by all sampler tasks.

    ``xs`` stacks the unfolded predictors as an (n, p, d) array, ``y`` is the
    (n, K) response matrix (continuous columns already standardized when a
    standardizer is recorded), ``z`` the (q, n) covariate matrix.
    """

    shape: BlockShape
    xs: np.ndarray
    y: np.ndarray
    specs: list[ResponseSpec]
    z: np.ndarray
    dims: tuple[int, int, int]
    standardizers: list[Standardizer | None] = field(default_factory=list)

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.float64)
        n = self.xs.shape[0]
        if self.xs.ndim != 3 or self.xs.shape[1:] != (
            self.shape.p_size,
            self.shape.d_size,
        ):
            raise ShapeError(
                f"xs must be (n, {self.shape.p_size}, {self.shape.d_size}), "
                f"got {self.xs.shape}"
            )
        if self.y.shape != (n, len(self.specs)):
            raise ShapeError(f"y must be ({n}, {len(self.specs)}), got {self.y.shape}")
        if self.z.ndim != 2 or self.z.shape[1] != n:
            raise ShapeError(f"z must be (q, {n}), got {self.z.shape}")
        if not self.standardizers:
            self.standardizers = [None] * len(self.specs)
        for k, spec in enumerate(self.specs):
            col = self.y[:, k]
            if spec.kind == "binary":
                if not np.all(np.isin(col, (0.0, 1.0))):
                    raise ParameterError(
                        f"binary response {spec.name!r} has values outside {{0,1}}"
                    )
            elif not np.all(np.isfinite(col)):
                raise ParameterError(
                    f"continuous response {spec.name!r} has non-finite values"
                )
        # flattened view reused by every inner-product evaluation
        self.xs_flat = self.xs.reshape(n, self.shape.p_size * self.shape.d_size)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def n_responses(self) -> int:
        return len(self.specs)

    @property
    def q(self) -> int:
        return self.z.shape[0]

    def raw_response(self, k: int) -> np.ndarray:
        """Response column k on its original (pre-standardization) scale."""
        col = self.y[:, k]
        st = self.standardizers[k]
        return col if st is None else st.invert(col)

    def subset(self, idx: np.ndarray) -> "UnfoldedDataset":
        """Row subset (used by cross-validation); shares standardizers."""
        idx = np.asarray(idx)
        return UnfoldedDataset(
            shape=self.shape,
            xs=self.xs[idx],
            y=self.y[idx],
            specs=list(self.specs),
            z=self.z[:, idx],
            dims=self.dims,
            standardizers=list(self.standardizers),
        )


def default_tau(m: int, n: int) -> float:
    """Global shrinkage scale 1/(m*sqrt(n)), clipped into (0, 1)."""
    return min(1.0 / (m * math.sqrt(max(n, 2))), 0.999)


@dataclass(frozen=True)
class Hyperparams:
    """Sampler configuration; ``tpbn`` holds (a, u, tau) for the covariate,
    row-factor and column-factor blocks in that order."""

    rank: int
    tpbn: tuple[tuple[float, float, float], ...]
    c0: float = 2.0
    c1: float = 1.0
    iterations: int = 1000
    burn_in: int = 500
    thin: int = 1
    seed: int = 0
    warmup: int = 50
    store_draws: bool = False
    parallel: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise ParameterError(f"rank must be >= 1, got {self.rank}")
        if self.warmup < 0:
            raise ParameterError("warmup must be >= 0")
        if len(self.tpbn) != 3:
            raise ParameterError("tpbn must hold three (a, u, tau) triples")
        for a, u, tau in self.tpbn:
            if not (0 < a < 1 and 0 < u < 1):
                raise ParameterError(f"TPBN a, u must lie in (0,1), got ({a}, {u})")
            if not (0 < tau < 1):
                raise ParameterError(f"TPBN tau must lie in (0,1), got {tau}")
        if self.c0 <= 0 or self.c1 <= 0:
            raise ParameterError("c0 and c1 must be positive")
        if not (0 <= self.burn_in < self.iterations):
            raise ParameterError(
                f"need 0 <= burn_in < iterations, got {self.burn_in}, {self.iterations}"
            )
        if self.thin < 1:
            raise ParameterError("thin must be >= 1")

    @classmethod
    def with_defaults(
        cls, *, rank: int, q: int, p: int, d: int, n: int, **kwargs
    ) -> "Hyperparams":
        """Horseshoe-type defaults: a = u = 1/2 and tau = 1/(m sqrt(n)) per block."""
        tpbn = kwargs.pop(
            "tpbn",
            (
                (0.5, 0.5, default_tau(q, n)),
                (0.5, 0.5, default_tau(p, n)),
                (0.5, 0.5, default_tau(d, n)),
            ),
        )
        return cls(rank=rank, tpbn=tpbn, **kwargs)


@dataclass
class TPBNBlock:
    """One shrinkage-regularized coefficient block with its local scales.

    ``coef`` is (m, R); row j has prior N(0, zeta_j I_R) with the
    Gamma-Gamma hierarchy zeta_j | xi_j ~ G(u, xi_j), xi_j ~ G(a, tau).
    """

    coef: np.ndarray
    zeta: np.ndarray
    xi: np.ndarray
    hyper: tuple[float, float, float]

    def __post_init__(self):
        if np.any(self.zeta <= 0) or np.any(self.xi <= 0):
            raise ParameterError("zeta and xi must be strictly positive")


@dataclass
class ResponseState:
    """Per-response sampler variables: covariate block, the two Kronecker
    factor blocks, and the Polya-Gamma weights/working responses."""

    gamma: TPBNBlock  # (q, 1)
    a: TPBNBlock  # (p, R)
    b: TPBNBlock  # (d, R)
    omega: np.ndarray  # (n,)
    ytilde: np.ndarray  # (n,)


@dataclass
class ChainState:
    responses: list[ResponseState]
    u: np.ndarray  # (n, K) latent cross-response effects
    sigma: np.ndarray  # (K, K) SPD
    rng: RngStream
    clamp_events: int = 0


def compose_coefficient(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unfolded coefficient matrix A @ B.T (p x d) from the factor blocks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"rank mismatch composing coefficient: {a.shape[1]} vs {b.shape[1]}"
        )
    return a @ b.T


def linear_predictor(
    state: ChainState, data: UnfoldedDataset, k: int
) -> np.ndarray:
    """Theta_ik = <X_i, A_k B_k^T> + z_i . gamma_k + u_ik for all i."""
    rs = state.responses[k]
    coef = compose_coefficient(rs.a.coef, rs.b.coef)
    return (
        data.xs_flat @ coef.ravel()
        + data.z.T @ rs.gamma.coef[:, 0]
        + state.u[:, k]
    )


def working_response(
    y_ik: float, kind: str, omega_ik: float
) -> tuple[float, float]:
    """Map one observation to its working (y~, omega) pair: identity with unit
    weight for continuous, (y - 1/2)/omega for binary."""
    if kind == "continuous":
        return float(y_ik), 1.0
    if y_ik not in (0.0, 1.0):
        raise ParameterError(f"binary response value must be 0 or 1, got {y_ik}")
    if not omega_ik > 0:
        raise ParameterError("binary working response requires omega > 0")
    return (y_ik - 0.5) / omega_ik, float(omega_ik)
