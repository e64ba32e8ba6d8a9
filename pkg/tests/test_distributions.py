import math

import numpy as np
import pytest
from scipy.special import kve

from kronreg.distributions import (
    GIGParams,
    PGParams,
    sample_gig,
    sample_gig_vector,
    sample_inverse_wishart,
    sample_matrix_normal,
    sample_mvn_precision,
    sample_mvn_structured,
    sample_pg,
    sample_pg_ones,
)
from kronreg.errors import NumericalError, ParameterError
from kronreg.rng import RngStream


def pg_mean(c: float) -> float:
    return 0.25 if c == 0 else math.tanh(c / 2.0) / (2.0 * c)


def pg_series_mean_oracle(c: float, terms: int = 200_000) -> float:
    """Brute-force the tilted series mean: E = (1/2pi^2) sum 1/((l-1/2)^2 + c^2/4pi^2),
    plus the integral tail beyond the truncation."""
    ell = np.arange(1, terms + 1) - 0.5
    partial = np.sum(1.0 / (ell**2 + (c / (2 * math.pi)) ** 2))
    tail = 1.0 / (terms - 0.5)
    return float((partial + tail) / (2 * math.pi**2))


def gig_mean_oracle(lam: float, chi: float, psi: float) -> float:
    """Bessel-ratio evaluation of the GIG mean."""
    b = math.sqrt(chi * psi)
    return math.sqrt(chi / psi) * kve(lam + 1, b) / kve(lam, b)


class TestReproducibility:
    def test_same_stream_same_draws(self):
        a = RngStream(123, (4, 5)).gen.standard_normal(8)
        b = RngStream(123, (4, 5)).gen.standard_normal(8)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = RngStream(123, (0,)).gen.standard_normal(8)
        b = RngStream(123, (1,)).gen.standard_normal(8)
        assert not np.array_equal(a, b)

    def test_substream_extends_path(self):
        s = RngStream(9).substream(3, 1)
        assert s.path == (3, 1)

    def test_pg_draws_reproducible(self):
        d1 = sample_pg_ones(RngStream(7), np.array([0.0, 1.0, 2.0]))
        d2 = sample_pg_ones(RngStream(7), np.array([0.0, 1.0, 2.0]))
        assert np.array_equal(d1, d2)


class TestPolyaGamma:
    def test_series_identity_against_tanh_form(self):
        # the closed form used in tests equals the brute-forced series mean
        for c in (0.0, 0.5, 1.0, 2.5, 5.0):
            assert pg_series_mean_oracle(c) == pytest.approx(pg_mean(c), abs=1e-10)

    @pytest.mark.parametrize("c", [0.0, 0.5, 1.0, 2.5, 5.0])
    def test_mean_law(self, c):
        n = 100_000
        draws = sample_pg_ones(RngStream(11, (int(c * 4),)), np.full(n, c))
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean() - pg_mean(c)) < 3 * se

    def test_tilted_mean_frozen_value(self):
        # (1/(2*2.5)) * tanh(1.25), frozen from the series oracle
        assert pg_series_mean_oracle(2.5) == pytest.approx(0.1696567280, abs=1e-9)
        n = 100_000
        draws = sample_pg_ones(RngStream(13), np.full(n, 2.5))
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean() - 0.1696567280) < 3 * se

    def test_strictly_positive(self):
        draws = sample_pg_ones(RngStream(17), np.linspace(-30, 30, 2000))
        assert np.all(draws > 0)

    def test_variance_at_zero_tilt(self):
        # Var = (1/4pi^4) sum (l-1/2)^-4 = 1/24
        n = 400_000
        draws = sample_pg_ones(RngStream(19), np.zeros(n))
        batches = draws.reshape(100, -1).var(axis=1, ddof=1)
        se = batches.std(ddof=1) / math.sqrt(100)
        assert abs(draws.var(ddof=1) - 1.0 / 24.0) < 3 * se

    def test_negative_tilt_symmetric_in_law(self):
        n = 60_000
        pos = sample_pg_ones(RngStream(23, (0,)), np.full(n, 1.5))
        neg = sample_pg_ones(RngStream(23, (1,)), np.full(n, -1.5))
        se = math.hypot(pos.std() / math.sqrt(n), neg.std() / math.sqrt(n))
        assert abs(pos.mean() - neg.mean()) < 3 * se

    def test_integer_shape_sums(self):
        n = 30_000
        draws = np.array(
            [sample_pg(RngStream(29, (i,)), PGParams(b=3, c=1.0)) for i in range(n)]
        )
        target = 3 * pg_mean(1.0)
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean() - target) < 3 * se

    def test_noninteger_shape_series_mean(self):
        n = 30_000
        draws = np.array(
            [
                sample_pg(RngStream(31, (i,)), PGParams(b=1.5, c=0.5))
                for i in range(n)
            ]
        )
        target = 1.5 * math.tanh(0.25) / (4 * 0.25)
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean() - target) < 3 * se

    def test_rejects_bad_shape(self):
        with pytest.raises(ParameterError):
            PGParams(b=0.0, c=1.0)


class TestGIG:
    def test_gamma_boundary_matches_direct_gamma(self):
        # chi=0, lam=a>0 reduces to Gamma(a, rate=psi/2)
        n = 50_000
        draws = np.array(
            [
                sample_gig(RngStream(37, (i,)), GIGParams(lam=1.3, chi=0.0, psi=4.0))
                for i in range(n)
            ]
        )
        direct = RngStream(38).gen.gamma(1.3, 0.5, size=n)
        se = math.hypot(
            draws.std(ddof=1) / math.sqrt(n), direct.std(ddof=1) / math.sqrt(n)
        )
        assert abs(draws.mean() - direct.mean()) < 3 * se
        # second moment in law too
        se2 = math.hypot(
            (draws**2).std(ddof=1) / math.sqrt(n),
            (direct**2).std(ddof=1) / math.sqrt(n),
        )
        assert abs((draws**2).mean() - (direct**2).mean()) < 3 * se2

    def test_inverse_gamma_boundary(self):
        n = 50_000
        draws = np.array(
            [
                sample_gig(RngStream(39, (i,)), GIGParams(lam=-2.5, chi=3.0, psi=0.0))
                for i in range(n)
            ]
        )
        # 1/X ~ Gamma(2.5, rate 3/2), so E[1/X] = 2.5/1.5
        inv = 1.0 / draws
        se = inv.std(ddof=1) / math.sqrt(n)
        assert abs(inv.mean() - 2.5 / 1.5) < 3 * se

    @pytest.mark.parametrize(
        "lam,chi,psi",
        [
            (0.5, 1.0, 1.0),
            (-0.5, 1.0, 1.0),
            (0.0, 1e-8, 2.0),  # R=1 horseshoe case at tiny row norm
            (-0.5, 1e-6, 2.0),  # R=2 case
            (-3.5, 2.0, 4.0),
            (2.5, 3.0, 0.5),
            (0.5, 1e4, 1e-4),
        ],
    )
    def test_mean_against_bessel_ratio(self, lam, chi, psi):
        n = 100_000
        draws = sample_gig_vector(
            RngStream(41, (int(lam * 2) & 0xFF, int(math.log10(chi + 1e-300)) & 0xFF)),
            lam,
            np.full(n, chi),
            np.full(n, psi),
        )
        target = gig_mean_oracle(lam, chi, psi)
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean() - target) < 3 * se
        inv = 1.0 / draws
        inv_target = kve(lam - 1, math.sqrt(chi * psi)) / kve(
            lam, math.sqrt(chi * psi)
        ) / math.sqrt(chi / psi)
        se_inv = inv.std(ddof=1) / math.sqrt(n)
        assert abs(inv.mean() - inv_target) < 3 * se_inv

    def test_strictly_positive(self):
        draws = sample_gig_vector(
            RngStream(43), -0.5, np.full(5000, 1e-12), np.full(5000, 2.0)
        )
        assert np.all(draws > 0)

    def test_rejects_invalid_params(self):
        with pytest.raises(ParameterError):
            GIGParams(lam=0.5, chi=0.0, psi=0.0)
        with pytest.raises(ParameterError):
            GIGParams(lam=-1.0, chi=0.0, psi=1.0)
        with pytest.raises(ParameterError):
            GIGParams(lam=1.0, chi=1.0, psi=-1.0)


class TestMvnPrecision:
    def test_standard_normal_case(self):
        n = 50_000
        draws = np.array(
            [
                sample_mvn_precision(RngStream(47, (i,)), np.eye(2), np.zeros(2))
                for i in range(n)
            ]
        )
        assert np.abs(draws.mean(0)).max() < 3 / math.sqrt(n)
        assert np.abs(np.cov(draws.T) - np.eye(2)).max() < 0.03

    def test_scalar_closed_form(self):
        n = 50_000
        draws = np.array(
            [
                sample_mvn_precision(
                    RngStream(53, (i,)), np.array([[4.0]]), np.array([8.0])
                )[0]
                for i in range(n)
            ]
        )
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean() - 2.0) < 3 * se
        assert draws.var(ddof=1) == pytest.approx(0.25, rel=0.05)

    def test_correlated_matches_inverse_oracle(self):
        prec = np.array([[2.0, 0.7], [0.7, 1.5]])
        lin = np.array([1.0, -2.0])
        cov = np.linalg.inv(prec)
        mean = cov @ lin
        n = 80_000
        draws = np.array(
            [
                sample_mvn_precision(RngStream(59, (i,)), prec, lin)
                for i in range(n)
            ]
        )
        se = draws.std(0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(draws.mean(0) - mean) < 3 * se)
        assert np.abs(np.cov(draws.T) - cov).max() < 0.02

    def test_non_spd_reports_pivot(self):
        bad = np.array([[1.0, 0.0], [0.0, -1.0]])
        with pytest.raises(NumericalError) as err:
            sample_mvn_precision(RngStream(61), bad, np.zeros(2))
        assert err.value.pivot == 2


class TestMvnStructured:
    def test_prior_reduction_at_zero_rows(self):
        pv = np.array([1.0, 2.0, 3.0])
        n = 60_000
        draws = np.array(
            [
                sample_mvn_structured(
                    RngStream(67, (i,)),
                    np.zeros((0, 3)),
                    np.zeros(0),
                    pv,
                    np.zeros(0),
                )
                for i in range(n)
            ]
        )
        assert np.abs(draws.mean(0)).max() < 3 * math.sqrt(3.0 / n)
        assert np.allclose(draws.var(0, ddof=1), pv, rtol=0.05)

    def test_law_matches_precision_form(self):
        g = np.random.default_rng(3)
        design = g.normal(size=(3, 5))
        weights = g.gamma(2.0, 1.0, 3)
        prior_var = g.gamma(2.0, 1.0, 5)
        resid = g.normal(size=3)
        prec = design.T @ (weights[:, None] * design) + np.diag(1.0 / prior_var)
        mean = np.linalg.solve(prec, design.T @ (weights * resid))
        cov = np.linalg.inv(prec)
        n = 80_000
        draws = np.array(
            [
                sample_mvn_structured(
                    RngStream(71, (i,)), design, weights, prior_var, resid
                )
                for i in range(n)
            ]
        )
        se = draws.std(0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(draws.mean(0) - mean) < 3.5 * se)
        assert np.abs(np.cov(draws.T) - cov).max() < 0.03 * np.abs(cov).max() + 0.01

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(ParameterError):
            sample_mvn_structured(
                RngStream(73),
                np.ones((2, 3)),
                np.array([1.0, 0.0]),
                np.ones(3),
                np.zeros(2),
            )


class TestInverseWishart:
    def test_k1_reduces_to_inverse_chi2(self):
        # mean scale/(dof-2) for K=1
        n = 100_000
        draws = np.array(
            [
                sample_inverse_wishart(
                    RngStream(79, (i,)), 6.0, np.array([[3.0]])
                )[0, 0]
                for i in range(n)
            ]
        )
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean() - 0.75) < 3 * se

    def test_mean_formula_k2(self):
        n = 60_000
        draws = np.stack(
            [
                sample_inverse_wishart(RngStream(83, (i,)), 10.0, np.eye(2))
                for i in range(n)
            ]
        )
        mean = draws.mean(0)
        se = draws.std(0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(mean - np.eye(2) / 7.0) < 3 * se + 1e-12)

    def test_draws_spd(self):
        for i in range(200):
            sig = sample_inverse_wishart(
                RngStream(89, (i,)), 5.0, np.array([[2.0, 0.3], [0.3, 1.0]])
            )
            np.linalg.cholesky(sig)

    def test_rejects_small_dof_and_bad_scale(self):
        with pytest.raises(ParameterError):
            sample_inverse_wishart(RngStream(97), 1.0, np.eye(2))
        with pytest.raises(ParameterError):
            sample_inverse_wishart(
                RngStream(97), 5.0, np.array([[1.0, 2.0], [2.0, 1.0]])
            )


class TestMatrixNormal:
    def test_entry_variance_factorizes(self):
        n = 30_000
        draws = np.stack(
            [
                sample_matrix_normal(RngStream(101, (i,)), 3, 2, 0.5, 0.25)
                for i in range(n)
            ]
        )
        assert draws.var() == pytest.approx(0.125, rel=0.05)

    def test_empty_matrix(self):
        assert sample_matrix_normal(RngStream(103), 0, 4, 1.0, 1.0).shape == (0, 4)

    def test_entries_uncorrelated(self):
        n = 30_000
        draws = np.stack(
            [
                sample_matrix_normal(RngStream(107, (i,)), 2, 2, 1.0, 1.0)
                for i in range(n)
            ]
        ).reshape(n, 4)
        corr = np.corrcoef(draws.T) - np.eye(4)
        assert np.abs(corr).max() < 0.03
