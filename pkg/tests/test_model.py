import numpy as np
import pytest

from kronreg.errors import ParameterError, ShapeError
from kronreg.gibbs import init_state
from kronreg.model import (
    Hyperparams,
    ResponseSpec,
    Standardizer,
    UnfoldedDataset,
    compose_coefficient,
    default_tau,
    linear_predictor,
    working_response,
)
from kronreg.rng import RngStream
from kronreg.tensor import BlockShape, bilinear_inner, kron3, unfold, unvec3


def make_dataset(n=6, seed=0, kinds=("continuous", "binary"), q=2):
    rng = np.random.default_rng(seed)
    shape = BlockShape(p=(2, 1, 1), d=(2, 1, 1))
    xs = rng.normal(size=(n, 2, 2))
    cols = []
    for kind in kinds:
        if kind == "binary":
            cols.append((rng.uniform(size=n) < 0.5).astype(float))
        else:
            cols.append(rng.normal(size=n))
    y = np.column_stack(cols)
    specs = [ResponseSpec(f"r{i}", kind) for i, kind in enumerate(kinds)]
    z = rng.normal(size=(q, n))
    return UnfoldedDataset(
        shape=shape, xs=xs, y=y, specs=specs, z=z, dims=(4, 2, 1)
    )


def make_hyper(data, rank=1, **kw):
    return Hyperparams.with_defaults(
        rank=rank,
        q=data.q,
        p=data.shape.p_size,
        d=data.shape.d_size,
        n=data.n,
        iterations=kw.pop("iterations", 6),
        burn_in=kw.pop("burn_in", 3),
        **kw,
    )


class TestDatasetValidation:
    def test_binary_outside_01_rejected(self):
        data = make_dataset()
        y = data.y.copy()
        y[0, 1] = 0.5
        with pytest.raises(ParameterError, match="outside"):
            UnfoldedDataset(
                shape=data.shape,
                xs=data.xs,
                y=y,
                specs=data.specs,
                z=data.z,
                dims=data.dims,
            )

    def test_shape_mismatches(self):
        data = make_dataset()
        with pytest.raises(ShapeError):
            UnfoldedDataset(
                shape=data.shape,
                xs=data.xs[:, :, :1],
                y=data.y,
                specs=data.specs,
                z=data.z,
                dims=data.dims,
            )
        with pytest.raises(ShapeError):
            UnfoldedDataset(
                shape=data.shape,
                xs=data.xs,
                y=data.y,
                specs=data.specs,
                z=data.z[:, :3],
                dims=data.dims,
            )

    def test_subset_preserves_layout(self):
        data = make_dataset(n=8)
        sub = data.subset(np.array([1, 3, 5]))
        assert sub.n == 3
        assert np.array_equal(sub.xs[1], data.xs[3])
        assert np.array_equal(sub.z[:, 2], data.z[:, 5])

    def test_raw_response_inverts_standardizer(self):
        data = make_dataset()
        raw = data.y[:, 0].copy()
        st = Standardizer(mean=float(raw.mean()), sd=float(raw.std()))
        data.y[:, 0] = st.apply(raw)
        data.standardizers[0] = st
        assert np.allclose(data.raw_response(0), raw, rtol=1e-12)


class TestHyperparams:
    def test_defaults_satisfy_invariants(self):
        h = Hyperparams.with_defaults(rank=2, q=1, p=1024, d=4, n=200)
        for a, u, tau in h.tpbn:
            assert 0 < a < 1 and 0 < u < 1 and 0 < tau < 1

    def test_default_tau_decay(self):
        # scales like 1/(m sqrt(n)) per the global-shrinkage decay convention
        assert default_tau(4, 100) == pytest.approx(1.0 / 40.0)
        assert default_tau(1, 1) < 1.0

    def test_invalid_configs_rejected(self):
        good = dict(rank=1, tpbn=((0.5, 0.5, 0.1),) * 3)
        with pytest.raises(ParameterError):
            Hyperparams(rank=0, tpbn=good["tpbn"])
        with pytest.raises(ParameterError):
            Hyperparams(rank=1, tpbn=((1.5, 0.5, 0.1),) * 3)
        with pytest.raises(ParameterError):
            Hyperparams(rank=1, tpbn=good["tpbn"], iterations=5, burn_in=5)
        with pytest.raises(ParameterError):
            Hyperparams(rank=1, tpbn=good["tpbn"], thin=0)


class TestWorkingResponse:
    def test_continuous_identity(self):
        assert working_response(3.2, "continuous", 7.0) == (3.2, 1.0)

    def test_binary_examples(self):
        assert working_response(1.0, "binary", 0.25) == (2.0, 0.25)
        assert working_response(0.0, "binary", 0.5) == (-1.0, 0.5)

    def test_binary_roundtrip_exact(self):
        for y in (0.0, 1.0):
            for om in (0.1, 0.25, 2.0):
                ytil, w = working_response(y, "binary", om)
                assert w * ytil + 0.5 == y

    def test_binary_rejects_bad_values(self):
        with pytest.raises(ParameterError):
            working_response(0.5, "binary", 1.0)
        with pytest.raises(ParameterError):
            working_response(1.0, "binary", 0.0)


class TestComposeAndPredictor:
    def test_rank_one_outer_product(self):
        a = np.array([[1.0], [2.0]])
        b = np.array([[3.0], [4.0], [5.0]])
        assert np.array_equal(compose_coefficient(a, b), np.outer(a, b))

    def test_zero_factor(self):
        assert not compose_coefficient(np.zeros((3, 2)), np.ones((4, 2))).any()

    def test_rank_additivity(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(3, 3))
        b = rng.normal(size=(4, 3))
        total = sum(
            compose_coefficient(a[:, [r]], b[:, [r]]) for r in range(3)
        )
        assert np.allclose(compose_coefficient(a, b), total, rtol=1e-12)

    def test_rank_mismatch(self):
        with pytest.raises(ShapeError):
            compose_coefficient(np.zeros((3, 2)), np.zeros((4, 3)))

    def test_linear_predictor_zero_state(self):
        data = make_dataset()
        hyper = make_hyper(data)
        state = init_state(data, hyper, RngStream(0))
        rs = state.responses[0]
        rs.a.coef = np.zeros_like(rs.a.coef)
        rs.gamma.coef = np.zeros_like(rs.gamma.coef)
        state.u[:] = 0
        assert np.array_equal(linear_predictor(state, data, 0), np.zeros(data.n))

    def test_linear_predictor_scalar_case(self):
        shape = BlockShape(p=(1, 1, 1), d=(1, 1, 1))
        data = UnfoldedDataset(
            shape=shape,
            xs=np.array([[[2.0]]]),
            y=np.array([[1.0]]),
            specs=[ResponseSpec("r", "continuous")],
            z=np.array([[3.0]]),
            dims=(1, 1, 1),
        )
        hyper = Hyperparams.with_defaults(
            rank=1, q=1, p=1, d=1, n=1, iterations=2, burn_in=1
        )
        state = init_state(data, hyper, RngStream(1))
        rs = state.responses[0]
        rs.a.coef = np.array([[1.5]])
        rs.b.coef = np.array([[-0.5]])
        rs.gamma.coef = np.array([[2.0]])
        state.u[0, 0] = 0.25
        # a*x*b + z*gamma + u = 1.5*2*(-0.5) + 3*2 + 0.25
        assert linear_predictor(state, data, 0)[0] == pytest.approx(4.75)

    def test_linear_predictor_matches_tensor_oracle(self):
        # equals <X_i, sum_r kron(A_r, B_r)> + z.gamma + u via tensor-core
        shape = BlockShape(p=(2, 2, 1), d=(2, 2, 1))
        rng = np.random.default_rng(8)
        n = 5
        xs_raw = rng.normal(size=(n, 4, 4, 1))
        xs = np.stack([unfold(t, shape) for t in xs_raw])
        data = UnfoldedDataset(
            shape=shape,
            xs=xs,
            y=rng.normal(size=(n, 1)),
            specs=[ResponseSpec("r", "continuous")],
            z=rng.normal(size=(2, n)),
            dims=(4, 4, 1),
        )
        hyper = Hyperparams.with_defaults(
            rank=2, q=2, p=4, d=4, n=n, iterations=2, burn_in=1
        )
        state = init_state(data, hyper, RngStream(2))
        rs = state.responses[0]
        rs.a.coef = rng.normal(size=(4, 2))
        rs.b.coef = rng.normal(size=(4, 2))
        rs.gamma.coef = rng.normal(size=(2, 1))
        state.u[:, 0] = rng.normal(size=n)
        theta = linear_predictor(state, data, 0)
        composite = sum(
            kron3(unvec3(rs.a.coef[:, r], shape.p), unvec3(rs.b.coef[:, r], shape.d))
            for r in range(2)
        )
        for i in range(n):
            want = (
                float(np.sum(xs_raw[i] * composite))
                + float(data.z[:, i] @ rs.gamma.coef[:, 0])
                + state.u[i, 0]
            )
            assert theta[i] == pytest.approx(want, abs=1e-10)

    def test_rotation_invariance(self):
        data = make_dataset()
        hyper = make_hyper(data, rank=2)
        state = init_state(data, hyper, RngStream(3))
        theta0 = linear_predictor(state, data, 0)
        # random orthogonal via QR
        g = np.linalg.qr(np.random.default_rng(4).normal(size=(2, 2)))[0]
        rs = state.responses[0]
        rs.a.coef = rs.a.coef @ g
        rs.b.coef = rs.b.coef @ g
        theta1 = linear_predictor(state, data, 0)
        assert np.abs(theta0 - theta1).max() < 1e-10
