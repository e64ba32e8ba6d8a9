"""Synthetic data generation, evaluation metrics, and CV splitting.

The generator produces image-style tensor predictors: every sample is
Gaussian noise, and a configurable fraction additionally carries a fixed
grayscale signal pattern.  Two responses are attached: a continuous one equal
to the signal inner product plus noise, and a binary one drawn from a logistic
model on the same inner product.  The default signal is a procedural two-blob
pattern in [0, 1]; any P5 PGM grayscale file can substitute.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .errors import MetricError, ParameterError, ShapeError
from .model import ResponseSpec, Standardizer, UnfoldedDataset
from .rng import RngStream
from .tensor import BlockShape, unfold

__all__ = [
    "SimConfig",
    "EvalReport",
    "blob_signal",
    "generate",
    "generate_tensors",
    "rmse",
    "auc",
    "kfold_split",
    "evaluate",
]


@dataclass(frozen=True)
class SimConfig:
    n: int
    dims: tuple[int, int, int]
    signal: str = "blobs"  # "blobs" or a path to a P5 PGM file
    noise_sd: float = 0.2682
    pure_noise_sd: float | None = None  # defaults to noise_sd
    signal_fraction: float = 0.5
    response_noise_var: float = 0.1
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.noise_sd <= 0:
            raise ParameterError("noise_sd must be positive")
        if any(v < 1 for v in self.dims):
            raise ParameterError("dims must be positive")
        if not (0 <= self.signal_fraction <= 1):
            raise ParameterError("signal_fraction must lie in [0, 1]")


@dataclass
class EvalReport:
    rmse: dict[str, float] = field(default_factory=dict)
    auc: dict[str, float] = field(default_factory=dict)
    signal_corr: float | None = None
    fold: int | None = None

    def lines(self) -> list[str]:
        out = []
        for name, v in self.rmse.items():
            out.append(f"rmse[{name}] = {v:.4f}")
        for name, v in self.auc.items():
            out.append(f"auc[{name}] = {v:.4f}")
        if self.signal_corr is not None:
            out.append(f"signal_corr = {self.signal_corr:.4f}")
        return out


def blob_signal(dims: tuple[int, int, int]) -> np.ndarray:
    """Deterministic sparse two-blob grayscale pattern in [0, 1].

    Values below a threshold are zeroed, leaving a support of roughly five
    percent of the volume, so the pattern has line-drawing-like sparsity.
    """
    axes = [
        (np.arange(d) + 0.5) / d if d > 1 else np.array([0.5]) for d in dims
    ]
    x, y, z = np.meshgrid(*axes, indexing="ij")
    centers = ((0.35, 0.38, 0.45), (0.68, 0.67, 0.58))
    widths = (0.055, 0.04)
    heights = (1.0, 0.85)
    img = np.zeros(dims)
    for (cx, cy, cz), w, h in zip(centers, widths, heights):
        d2 = (x - cx) ** 2 + (y - cy) ** 2
        if dims[2] > 1:
            d2 = d2 + (z - cz) ** 2
        img += h * np.exp(-d2 / (2.0 * w**2))
    img = np.clip(img, 0.0, 1.0)
    img[img < 0.2] = 0.0
    return img


def generate_tensors(
    config: SimConfig, signal: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw sample tensors (n, D1, D2, D3), raw responses (n, 2), signal mask."""
    rng = RngStream(config.seed)
    n = config.n
    n_signal = int(round(config.signal_fraction * n))
    carrier = np.zeros(n, dtype=bool)
    carrier[rng.substream(0).gen.permutation(n)[:n_signal]] = True

    pure_sd = config.pure_noise_sd if config.pure_noise_sd is not None else config.noise_sd
    xs = np.empty((n,) + tuple(config.dims))
    for i in range(n):
        gen_i = rng.substream(1, i).gen
        sd = config.noise_sd if carrier[i] else pure_sd
        xs[i] = sd * gen_i.standard_normal(config.dims)
        if carrier[i]:
            xs[i] += signal

    inner = xs.reshape(n, -1) @ signal.ravel()
    gen_y = rng.substream(2).gen
    y_cont = inner + np.sqrt(config.response_noise_var) * gen_y.standard_normal(n)
    y_bin = (gen_y.uniform(size=n) < expit(inner)).astype(float)
    return xs, np.column_stack([y_cont, y_bin]), carrier


def generate(
    config: SimConfig, shape: BlockShape, signal: np.ndarray | None = None
) -> tuple[UnfoldedDataset, np.ndarray]:
    """Simulated dataset unfolded under ``shape``, plus the true signal tensor.

    The continuous response is standardized (transform recorded on the
    dataset) unless ``config.standardize`` is off.  The covariate matrix is a
    single intercept row.
    """
    if signal is None:
        signal = blob_signal(config.dims)
    if signal.shape != tuple(config.dims):
        raise ShapeError(
            f"signal pattern is {signal.shape}, config dims are {config.dims}"
        )
    shape.check_dims(tuple(config.dims))
    xs_raw, y, _carrier = generate_tensors(config, signal)
    xs = np.stack([unfold(xs_raw[i], shape) for i in range(config.n)])
    standardizers: list[Standardizer | None] = [None, None]
    if config.standardize:
        st = Standardizer(mean=float(y[:, 0].mean()), sd=float(y[:, 0].std() or 1.0))
        y = y.copy()
        y[:, 0] = st.apply(y[:, 0])
        standardizers[0] = st
    data = UnfoldedDataset(
        shape=shape,
        xs=xs,
        y=y,
        specs=[
            ResponseSpec("signal_trace", "continuous"),
            ResponseSpec("signal_class", "binary"),
        ],
        z=np.ones((1, config.n)),
        dims=tuple(config.dims),
        standardizers=standardizers,
    )
    return data, signal


def rmse(pred: np.ndarray, actual: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.size == 0 or pred.size != actual.size:
        raise MetricError(
            f"rmse needs equal non-empty inputs, got {pred.size} vs {actual.size}"
        )
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC: P(score+ > score-) + P(tie)/2, via average ranks."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size != labels.size:
        raise MetricError("scores and labels must have equal length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: both classes must be present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def kfold_split(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of range(n) into ``folds`` parts of near-equal size."""
    if folds < 2:
        raise ParameterError("folds must be >= 2")
    if folds > n:
        raise ParameterError(f"cannot split {n} samples into {folds} folds")
    perm = RngStream(seed).gen.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def evaluate(
    preds: np.ndarray,
    data: UnfoldedDataset,
    c_median: list[np.ndarray] | None = None,
    truth: np.ndarray | None = None,
    fold: int | None = None,
) -> EvalReport:
    """Per-response metrics on the original response scale, plus correlation
    of the recovered coefficient with the true signal when supplied."""
    report = EvalReport(fold=fold)
    for k, spec in enumerate(data.specs):
        actual = data.raw_response(k)
        if spec.kind == "continuous":
            report.rmse[spec.name] = rmse(preds[:, k], actual)
        else:
            report.auc[spec.name] = auc(preds[:, k], actual)
    if truth is not None and c_median is not None:
        flat_truth = unfold(truth, data.shape).ravel()
        flat_est = c_median[0].ravel()
        denom = np.linalg.norm(flat_truth) * np.linalg.norm(flat_est)
        report.signal_corr = (
            float(flat_truth @ flat_est / denom) if denom > 0 else 0.0
        )
    return report
