"""Blocked Gibbs sampler: full-conditional updates, chain driver, prediction.

Update order per sweep, for each response k: Polya-Gamma weights, covariate
block, row factor, column factor, then the local shrinkage scales of all three
blocks; afterwards the shared latent matrix U and the cross-response
covariance.  Responses are conditionally independent given (U, Sigma), so the
per-response sweep can optionally run on a thread pool; every task owns a
dedicated RNG substream keyed by (sweep, response), which makes parallel
execution bit-identical to sequential.

Before the recorded iterations the driver runs a short warm-up in which only
the per-response blocks and their scales are refreshed while (U, Sigma) stay
at their initial values.  This lets the shrinkage fit claim the explainable
signal before the free per-observation latent effects can soak it up; the
kernel afterwards is exactly the full sweep, so the stationary law is
untouched.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .distributions import (
    sample_gig_vector,
    sample_inverse_wishart,
    sample_matrix_normal,
    sample_mvn_precision,
    sample_mvn_structured,
    sample_pg_ones,
)
from .errors import ChainDivergedError, NumericalError, ShapeError
from .model import (
    ChainState,
    Hyperparams,
    ResponseState,
    Standardizer,
    TPBNBlock,
    UnfoldedDataset,
    compose_coefficient,
    linear_predictor,
)
from .rng import RngStream

__all__ = [
    "ChainOutput",
    "run_chain",
    "predict",
    "init_state",
    "gibbs_sweep",
    "update_omega",
    "update_gamma",
    "update_a",
    "update_b",
    "update_local_scales",
    "update_u",
    "update_sigma",
]

SCALE_FLOOR = 1e-12
SCALE_CEIL = 1e12
# rows whose squared norm falls below this are numerically zero for the zeta
# conditional; exact zeros dispatch to the Gamma boundary when it is proper
CHI_FLOOR = 1e-100


def _clamp(values: np.ndarray, state: ChainState) -> np.ndarray:
    clipped = np.clip(values, SCALE_FLOOR, SCALE_CEIL)
    state.clamp_events += int(np.count_nonzero(clipped != values))
    return clipped


def _draw_gaussian(
    rng: RngStream,
    design: np.ndarray,
    weights: np.ndarray,
    prior_var: np.ndarray,
    resid: np.ndarray,
) -> np.ndarray:
    """N(P^-1 b, P^-1) with P = X'WX + D^-1; structured path when m > n."""
    n, m = design.shape
    if m > n:
        return sample_mvn_structured(rng, design, weights, prior_var, resid)
    prec = design.T @ (weights[:, None] * design)
    prec[np.diag_indices(m)] += 1.0 / prior_var
    return sample_mvn_precision(rng, prec, design.T @ (weights * resid))


def _trace_terms(data: UnfoldedDataset, rs: ResponseState) -> np.ndarray:
    """<X_i, A B^T> for all i."""
    return data.xs_flat @ compose_coefficient(rs.a.coef, rs.b.coef).ravel()


def update_omega(state: ChainState, data: UnfoldedDataset, k: int, rng: RngStream):
    """Refresh the augmentation weights and working responses of response k."""
    rs = state.responses[k]
    y = data.y[:, k]
    if data.specs[k].kind == "continuous":
        rs.omega = np.ones(data.n)
        rs.ytilde = y.copy()
        return
    theta = linear_predictor(state, data, k)
    rs.omega = _clamp(sample_pg_ones(rng, theta), state)
    rs.ytilde = (y - 0.5) / rs.omega


def update_gamma(state: ChainState, data: UnfoldedDataset, k: int, rng: RngStream):
    rs = state.responses[k]
    resid = rs.ytilde - _trace_terms(data, rs) - state.u[:, k]
    draw = _draw_gaussian(rng, data.z.T, rs.omega, rs.gamma.zeta, resid)
    rs.gamma.coef = draw[:, None]


def update_a(state: ChainState, data: UnfoldedDataset, k: int, rng: RngStream):
    """Gaussian conditional of the row factor: the design row for sample i is
    vec(X_i B), since <X_i, A B^T> = vec(A) . vec(X_i B)."""
    rs = state.responses[k]
    n = data.n
    p, rank = rs.a.coef.shape
    xb = np.einsum("npd,dr->npr", data.xs, rs.b.coef)
    design = xb.transpose(0, 2, 1).reshape(n, rank * p)
    resid = rs.ytilde - data.z.T @ rs.gamma.coef[:, 0] - state.u[:, k]
    draw = _draw_gaussian(rng, design, rs.omega, np.tile(rs.a.zeta, rank), resid)
    rs.a.coef = draw.reshape(rank, p).T


def update_b(state: ChainState, data: UnfoldedDataset, k: int, rng: RngStream):
    rs = state.responses[k]
    n = data.n
    d, rank = rs.b.coef.shape
    xta = np.einsum("npd,pr->ndr", data.xs, rs.a.coef)
    design = xta.transpose(0, 2, 1).reshape(n, rank * d)
    resid = rs.ytilde - data.z.T @ rs.gamma.coef[:, 0] - state.u[:, k]
    draw = _draw_gaussian(rng, design, rs.omega, np.tile(rs.b.zeta, rank), resid)
    rs.b.coef = draw.reshape(rank, d).T


def update_local_scales(block: TPBNBlock, rng: RngStream, state: ChainState):
    """Conjugate refresh of (zeta, xi): zeta_j ~ GIG(u - R/2, |row_j|^2, 2 xi_j)
    and xi_j ~ Gamma(a + u, rate tau + zeta_j)."""
    a_h, u_h, tau = block.hyper
    rank = block.coef.shape[1]
    lam = u_h - rank / 2.0
    chi = np.einsum("jr,jr->j", block.coef, block.coef)
    if not np.all(np.isfinite(chi)):
        raise NumericalError("non-finite coefficient rows in local-scale update")
    gen = rng.gen
    zeta = np.empty_like(chi)
    zero = chi == 0.0
    if lam > 0 and np.any(zero):
        # exact Gamma boundary of the GIG at chi = 0: rate psi/2 = xi
        zeta[zero] = gen.gamma(lam, 1.0 / block.xi[zero])
    else:
        # boundary improper for lam <= 0; tiny rows are floored below instead
        zero = np.zeros_like(zero)
    live = ~zero
    if np.any(live):
        chi_live = chi[live]
        n_small = int(np.count_nonzero(chi_live < CHI_FLOOR))
        if n_small:
            state.clamp_events += n_small
            chi_live = np.maximum(chi_live, CHI_FLOOR)
        zeta[live] = sample_gig_vector(rng, lam, chi_live, 2.0 * block.xi[live])
    block.zeta = _clamp(zeta, state)
    block.xi = _clamp(gen.gamma(a_h + u_h, 1.0 / (tau + block.zeta)), state)


def _sweep_response(
    state: ChainState,
    data: UnfoldedDataset,
    k: int,
    rng: RngStream,
):
    rs = state.responses[k]
    update_omega(state, data, k, rng.substream(0))
    update_gamma(state, data, k, rng.substream(1))
    update_a(state, data, k, rng.substream(2))
    update_b(state, data, k, rng.substream(3))
    update_local_scales(rs.gamma, rng.substream(4), state)
    update_local_scales(rs.a, rng.substream(5), state)
    update_local_scales(rs.b, rng.substream(6), state)


def update_u(state: ChainState, data: UnfoldedDataset, rng: RngStream):
    """Latent matrix refresh, row-wise over observations.

    The joint nK-dimensional Gaussian decouples by observation because both
    the prior precision and the augmented-likelihood precision are block
    diagonal once grouped by i: row i has precision Sigma^-1 + diag(omega_i.)
    and linear term diag(omega_i.) m_i.
    """
    n, n_resp = state.u.shape
    omega = np.stack([rs.omega for rs in state.responses], axis=1)
    resid = np.stack(
        [
            rs.ytilde - _trace_terms(data, rs) - data.z.T @ rs.gamma.coef[:, 0]
            for rs in state.responses
        ],
        axis=1,
    )
    try:
        sig_inv = np.linalg.inv(state.sigma)
        prec = np.broadcast_to(sig_inv, (n, n_resp, n_resp)).copy()
        idx = np.arange(n_resp)
        prec[:, idx, idx] += omega
        cov = np.linalg.inv(prec)
        low = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"latent-update covariance not SPD: {exc}") from exc
    mean = np.einsum("nij,nj->ni", cov, omega * resid)
    z = rng.gen.standard_normal((n, n_resp))
    state.u = mean + np.einsum("nij,nj->ni", low, z)


def update_sigma(
    state: ChainState,
    data: UnfoldedDataset,
    hyper: Hyperparams,
    rng: RngStream,
    dof_offset: float = 0.0,
):
    n, n_resp = state.u.shape
    dof = n + n_resp + hyper.c0 + dof_offset
    scale = state.u.T @ state.u + hyper.c1 * np.eye(n_resp)
    state.sigma = sample_inverse_wishart(rng, dof, scale)


def gibbs_sweep(
    state: ChainState,
    data: UnfoldedDataset,
    hyper: Hyperparams,
    sweep: int,
    *,
    sigma_dof_offset: float = 0.0,
    executor: ThreadPoolExecutor | None = None,
):
    """One full sweep of Algorithm-style updates; ``sweep`` keys the RNG
    substreams so results do not depend on scheduling."""
    n_resp = data.n_responses
    rngs = [state.rng.substream(1, sweep, k) for k in range(n_resp)]
    if executor is not None:
        list(
            executor.map(
                lambda k: _sweep_response(state, data, k, rngs[k]), range(n_resp)
            )
        )
    else:
        for k in range(n_resp):
            _sweep_response(state, data, k, rngs[k])
    update_u(state, data, state.rng.substream(2, sweep))
    update_sigma(state, data, hyper, state.rng.substream(3, sweep), sigma_dof_offset)


def init_state(
    data: UnfoldedDataset,
    hyper: Hyperparams,
    rng: RngStream,
    init_rotation: np.ndarray | None = None,
) -> ChainState:
    """Spread initialization: factor blocks from matrix normals with variance
    shrinking in the block size, Sigma = I, U = 0.

    Local scales start at each block's global level tau, and the coefficient
    draws are damped to match: the sampler grows signal rows out of the
    shrunk state.  Starting the scales at unit size instead parks the chain in
    a dense, non-sparse mode that the local-scale updates cannot prune.

    ``init_rotation`` right-multiplies the initial factor blocks by an R x R
    orthogonal matrix; the likelihood only sees A B^T, so rotated chains
    explore the same posterior over the composed coefficient.
    """
    n, n_resp = data.n, data.n_responses
    p, d, q, rank = data.shape.p_size, data.shape.d_size, data.q, hyper.rank
    tau_g, tau_a, tau_b = (triple[2] for triple in hyper.tpbn)
    responses = []
    state = ChainState(
        responses=responses,
        u=np.zeros((n, n_resp)),
        sigma=np.eye(n_resp),
        rng=rng,
    )

    def scales(m: int, triple: tuple[float, float, float]) -> tuple[np.ndarray, np.ndarray]:
        a_h, _, tau = triple
        return np.full(m, tau), np.full(m, a_h / tau)

    for k in range(n_resp):
        sub = rng.substream(0, k)
        a = sample_matrix_normal(sub.substream(0), p, rank, p**-0.5, rank**-0.5)
        b = sample_matrix_normal(sub.substream(1), d, rank, d**-0.5, rank**-0.5)
        if init_rotation is not None:
            a = a @ init_rotation
            b = b @ init_rotation
        gam = q**-0.25 * sub.substream(2).gen.standard_normal((q, 1))
        rs = ResponseState(
            gamma=TPBNBlock(math.sqrt(tau_g) * gam, *scales(q, hyper.tpbn[0]), hyper.tpbn[0]),
            a=TPBNBlock(math.sqrt(tau_a) * a, *scales(p, hyper.tpbn[1]), hyper.tpbn[1]),
            b=TPBNBlock(math.sqrt(tau_b) * b, *scales(d, hyper.tpbn[2]), hyper.tpbn[2]),
            omega=np.ones(n),
            ytilde=data.y[:, k].copy(),
        )
        if data.specs[k].kind == "binary":
            rs.omega = _clamp(sample_pg_ones(sub.substream(3), np.zeros(n)), state)
            rs.ytilde = (data.y[:, k] - 0.5) / rs.omega
        responses.append(rs)
    return state


@dataclass
class ChainOutput:
    """Posterior summaries over the kept draws.

    Coefficient summaries are element-wise quantiles of the composed, unfolded
    coefficient matrix A B^T -- never of the factors themselves, which are
    only identified up to a shared orthogonal rotation.
    """

    kept: int
    block_shape: object
    dims: tuple[int, int, int]
    response_names: list[str]
    response_kinds: list[str]
    c_median: list[np.ndarray]
    c_q025: list[np.ndarray]
    c_q975: list[np.ndarray]
    gamma_median: np.ndarray  # (q, K)
    gamma_q025: np.ndarray
    gamma_q975: np.ndarray
    sigma_median: np.ndarray
    sigma_q025: np.ndarray
    sigma_q975: np.ndarray
    standardizers: list[Standardizer | None]
    diagnostics: dict
    c_draws: list[np.ndarray] | None = None  # (M, p, d) per response when stored


def _check_finite(state: ChainState, sweep: int):
    for k, rs in enumerate(state.responses):
        for name, arr in (
            ("gamma", rs.gamma.coef),
            ("a", rs.a.coef),
            ("b", rs.b.coef),
            ("omega", rs.omega),
        ):
            if not np.all(np.isfinite(arr)):
                raise ChainDivergedError(
                    f"non-finite values in block {name!r} of response {k} at sweep "
                    f"{sweep}; |max|={np.nanmax(np.abs(arr)):.3e}",
                    iteration=sweep,
                    block=f"{name}[{k}]",
                )
    if not (np.all(np.isfinite(state.u)) and np.all(np.isfinite(state.sigma))):
        raise ChainDivergedError(
            f"non-finite latent state at sweep {sweep}", iteration=sweep, block="u/sigma"
        )


def run_chain(
    data: UnfoldedDataset,
    hyper: Hyperparams,
    progress: Callable[[int, float], None] | None = None,
    init_rotation: np.ndarray | None = None,
) -> ChainOutput:
    """Run the full sampler and summarize the kept draws element-wise."""
    t_start = time.monotonic()
    rng = RngStream(hyper.seed)
    state = init_state(data, hyper, rng, init_rotation)
    n_resp = data.n_responses
    executor = (
        ThreadPoolExecutor(max_workers=min(n_resp, 8)) if hyper.parallel else None
    )

    keep_c: list[list[np.ndarray]] = [[] for _ in range(n_resp)]
    keep_gamma: list[np.ndarray] = []
    keep_sigma: list[np.ndarray] = []
    try:
        for w in range(hyper.warmup):
            for k in range(n_resp):
                _sweep_response(state, data, k, state.rng.substream(4, w, k))
        for sweep in range(hyper.iterations):
            try:
                gibbs_sweep(state, data, hyper, sweep, executor=executor)
            except NumericalError as exc:
                raise NumericalError(
                    f"sweep {sweep}: {exc}", pivot=getattr(exc, "pivot", None)
                ) from exc
            _check_finite(state, sweep)
            if sweep >= hyper.burn_in and (sweep - hyper.burn_in) % hyper.thin == 0:
                for k, rs in enumerate(state.responses):
                    keep_c[k].append(compose_coefficient(rs.a.coef, rs.b.coef))
                keep_gamma.append(
                    np.column_stack([rs.gamma.coef[:, 0] for rs in state.responses])
                )
                keep_sigma.append(state.sigma.copy())
            if progress is not None and (sweep + 1) % 100 == 0:
                progress(sweep + 1, _log_post_proxy(state, data))
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    kept = len(keep_sigma)
    qs = (0.025, 0.5, 0.975)
    c_q = [np.quantile(np.stack(keep_c[k]), qs, axis=0) for k in range(n_resp)]
    g_q = np.quantile(np.stack(keep_gamma), qs, axis=0)
    s_q = np.quantile(np.stack(keep_sigma), qs, axis=0)
    elapsed = time.monotonic() - t_start
    return ChainOutput(
        kept=kept,
        block_shape=data.shape,
        dims=data.dims,
        response_names=[s.name for s in data.specs],
        response_kinds=[s.kind for s in data.specs],
        c_median=[c_q[k][1] for k in range(n_resp)],
        c_q025=[c_q[k][0] for k in range(n_resp)],
        c_q975=[c_q[k][2] for k in range(n_resp)],
        gamma_median=g_q[1],
        gamma_q025=g_q[0],
        gamma_q975=g_q[2],
        sigma_median=s_q[1],
        sigma_q025=s_q[0],
        sigma_q975=s_q[2],
        standardizers=list(data.standardizers),
        diagnostics={
            "clamp_events": state.clamp_events,
            "seed": hyper.seed,
            "iterations": hyper.iterations,
            "burn_in": hyper.burn_in,
            "thin": hyper.thin,
            "runtime_s": elapsed,
        },
        c_draws=(
            [np.stack(keep_c[k]) for k in range(n_resp)]
            if hyper.store_draws
            else None
        ),
    )


def _log_post_proxy(state: ChainState, data: UnfoldedDataset) -> float:
    """Quantity proportional to the log joint over the Gaussianized blocks;
    used only as a progress monitor."""
    total = 0.0
    for k, rs in enumerate(state.responses):
        resid = (
            rs.ytilde
            - _trace_terms(data, rs)
            - data.z.T @ rs.gamma.coef[:, 0]
            - state.u[:, k]
        )
        total -= 0.5 * float(np.sum(rs.omega * resid**2))
        for block in (rs.gamma, rs.a, rs.b):
            total -= 0.5 * float(
                np.sum(np.sum(block.coef**2, axis=1) / block.zeta)
            )
    return total


def predict(output: ChainOutput, data: UnfoldedDataset) -> np.ndarray:
    """Plug-in predictions from the posterior-median coefficients with the
    latent effect set to its prior mean (zero).

    Continuous responses are returned on their original scale when the fit
    recorded a standardization; binary responses are returned as
    probabilities.
    """
    if data.xs.shape[1:] != (output.block_shape.p_size, output.block_shape.d_size):
        raise ShapeError(
            f"dataset unfolds to {data.xs.shape[1:]}, chain was trained on "
            f"({output.block_shape.p_size}, {output.block_shape.d_size})"
        )
    n = data.n
    preds = np.empty((n, len(output.response_names)))
    for k, kind in enumerate(output.response_kinds):
        theta = data.xs_flat @ output.c_median[k].ravel() + data.z.T @ output.gamma_median[:, k]
        if kind == "binary":
            preds[:, k] = expit(theta)
        else:
            st = output.standardizers[k]
            preds[:, k] = theta if st is None else st.invert(theta)
    return preds
