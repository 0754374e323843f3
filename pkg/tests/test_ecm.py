import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from cgssl.cgquic import CglassoProblem, CgquicOptions, solve
from cgssl.ecm import (EcmOptions, build_omega_penalty, e_step, ecm_fit, run_ecm, supports,
                       update_eta)
from cgssl.errors import NumericalError
from cgssl.model import ChainGraphParams, Dataset, SslConfig, log_posterior, standardize_design
from cgssl.psi import compute_z
from cgssl.penalty import MixtureRates, lambda_star
from cgssl.sim import OmegaPattern, gen_dataset, gen_omega, gen_psi


def _sim(seed, n=100, p=5, q=4, pattern="ar1"):
    rng = np.random.default_rng(seed)
    Omega0 = gen_omega(OmegaPattern(pattern, q))
    Psi0 = gen_psi(p, q, 0.3, rng)
    data, _ = gen_dataset(Psi0, Omega0, n, rng)
    return data


CFG = SslConfig(30.0, 1.0, 30.0, 1.0, a_theta=1.0, b_theta=20.0, a_eta=1.0, b_eta=4.0)


class TestEStep:
    def test_degenerate_mixture(self):
        cfg = SslConfig(5.0, 1.0, 2.0, 2.0)
        Q = e_step(np.array([[2.0, 0.3, 0.0], [0.3, 1.0, -0.5], [0.0, -0.5, 3.0]]), 0.37, cfg)
        off = ~np.eye(3, dtype=bool)
        np.testing.assert_allclose(Q[off], 0.37, atol=1e-15)
        assert np.all(np.diag(Q) == 0)

    def test_spike_dominates_at_zero(self):
        cfg = SslConfig(5.0, 1.0, 100.0, 0.01)
        Q = e_step(np.eye(2), 0.5, cfg)
        assert Q[0, 1] == pytest.approx(0.5 * 0.01 / (0.5 * 0.01 + 0.5 * 100), rel=1e-12)
        assert Q[0, 1] == pytest.approx(9.999e-5, rel=1e-4)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((5, 5))
        Om = A @ A.T + np.eye(5)
        Q = e_step(Om, 0.2, CFG)
        assert np.array_equal(Q, Q.T)
        assert np.all((Q >= 0) & (Q <= 1))

    def test_rejects_boundary_eta(self):
        with pytest.raises(ValueError):
            e_step(np.eye(2), 1.0, CFG)


class TestUpdateEta:
    def test_empty_slab_clamped(self):
        assert update_eta(np.zeros((4, 4)), 1.0, 3.0, 4) == 1e-8

    def test_full_slab(self):
        Q = np.ones((10, 10))
        np.fill_diagonal(Q, 0.0)
        assert update_eta(Q, 1.0, 10.0, 10) == pytest.approx(45 / 54, abs=1e-15)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert update_eta(np.full((3, 3), lo), 2.0, 3.0, 3) <= update_eta(np.full((3, 3), hi), 2.0, 3.0, 3)

    def test_errors(self):
        with pytest.raises(ValueError):
            update_eta(np.zeros((1, 1)), 1.0, 1.0, 1)
        with pytest.raises(ValueError):
            update_eta(np.zeros((2, 2)), 0.1, 0.1, 2)


class TestOmegaPenalty:
    def test_extremes(self):
        cfg = SslConfig(5.0, 1.0, 40.0, 2.0, xi_diag=3.0)
        Q = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.25], [0.0, 0.25, 0.0]])
        Xi = build_omega_penalty(Q, cfg, 20)
        assert Xi[0, 1] == pytest.approx(2.0 / 20, abs=1e-15)
        assert Xi[0, 2] == pytest.approx(40.0 / 20, abs=1e-15)
        assert Xi[1, 2] == pytest.approx((0.25 * 2.0 + 0.75 * 40.0) / 20, abs=1e-15)
        np.testing.assert_allclose(np.diag(Xi), 2 * 3.0 / 20, atol=1e-15)
        assert np.array_equal(Xi, Xi.T)

    @pytest.mark.parametrize("seed", range(3))
    def test_argmin_invariance(self, seed):
        # unscaled Omega block of the log posterior at fixed Psi and slab weights
        rng = np.random.default_rng(seed)
        n = 40
        Y = rng.standard_normal((n, 2)) @ np.array([[1.0, 0.6], [0.0, 0.8]])
        XPsi = rng.standard_normal((n, 2)) * 0.3
        cfg = SslConfig(5.0, 1.0, 3.0, 0.5, xi_diag=0.5)
        qstar = float(rng.uniform(0.2, 0.9))
        xi_pair = cfg.xi1 * qstar + cfg.xi0 * (1 - qstar)

        def neg_post(v):
            Om = np.array([[v[0], v[1]], [v[1], v[2]]])
            if v[0] <= 0 or v[0] * v[2] - v[1] ** 2 <= 0:
                return math.inf
            R = Y @ Om - XPsi
            quad = np.trace(R @ np.linalg.inv(Om) @ R.T)
            return -(n / 2 * math.log(np.linalg.det(Om)) - quad / 2
                     - xi_pair * abs(v[1]) - cfg.xi_diag * (v[0] + v[2]))

        best = None
        for start in ([1.0, 0.0, 1.0], [1.5, -0.3, 1.2], [0.8, 0.4, 1.6]):
            r = minimize(neg_post, start, method="Nelder-Mead",
                         options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 40000, "maxfev": 80000})
            if best is None or r.fun < best.fun:
                best = r
        Q = np.array([[0.0, qstar], [qstar, 0.0]])
        prob = CglassoProblem(Y.T @ Y / n, XPsi.T @ XPsi / n, build_omega_penalty(Q, cfg, n))
        Om = solve(prob, CgquicOptions(outer_tol=1e-12)).Omega
        np.testing.assert_allclose([Om[0, 0], Om[0, 1], Om[1, 1]], best.x, atol=1e-6)


class TestEcmFit:
    def test_null_model(self):
        rng = np.random.default_rng(42)
        n = 100
        X, _, _ = standardize_design(rng.standard_normal((n, 2)))
        data = Dataset(X, rng.standard_normal((n, 2)))
        cfg = SslConfig(30.0, 1.0, 30.0, 1.0, a_theta=1.0, b_theta=4.0, a_eta=1.0, b_eta=2.0)
        fit = ecm_fit(data, cfg)
        assert fit.converged and not fit.guardrail_triggered
        assert np.array_equal(fit.params.Psi, np.zeros((2, 2)))
        assert np.all(np.abs(np.diag(fit.params.Omega) - 1) <= 0.2)
        assert fit.support_psi == set()

    @pytest.mark.parametrize("pattern", ["ar1", "ar2", "block", "star", "dense"])
    def test_monotone_and_safe(self, pattern):
        data = _sim(1, pattern=pattern)
        fit = ecm_fit(data, CFG)
        assert np.all(np.diff(fit.log_posterior_trace) >= -1e-8)
        np.linalg.cholesky(fit.params.Omega)
        assert 0 < fit.params.theta < 1 and 0 < fit.params.eta < 1

    def test_trace_matches_log_posterior(self):
        data = _sim(2)
        fit = ecm_fit(data, CFG)
        assert fit.log_posterior_trace[-1] == pytest.approx(log_posterior(fit.params, data, CFG), abs=1e-9)

    def test_psi_kkt_at_convergence(self):
        data = _sim(3)
        fit = ecm_fit(data, CFG)
        P = fit.params
        V = np.linalg.inv(P.Omega)
        R = data.Y @ P.Omega - data.X @ P.Psi
        r = MixtureRates(CFG.lambda0, CFG.lambda1, P.theta)
        for j, k in zip(*np.nonzero(P.Psi)):
            z = compute_z(j, k, P.Psi, R, V, data.X)
            psi = P.Psi[j, k]
            # the Psi step used the previous Omega; allow for the final Omega move
            target = math.copysign(max(abs(z) - lambda_star(psi, r) / V[k, k], 0.0), z) / data.n
            assert abs(psi - target) <= 0.05 * (1 + abs(psi))

    def test_supports_match_zeros(self):
        fit = ecm_fit(_sim(4), CFG)
        ps, po = supports(fit.params)
        assert ps == fit.support_psi and po == fit.support_omega
        assert all(fit.params.Psi[j, k] != 0 for j, k in ps)
        assert all(k < l and fit.params.Omega[k, l] != 0 for k, l in po)

    def test_deterministic(self):
        data = _sim(5)
        a, b = ecm_fit(data, CFG), ecm_fit(data, CFG)
        assert np.array_equal(a.params.Psi, b.params.Psi)
        assert np.array_equal(a.params.Omega, b.params.Omega)
        assert a.log_posterior_trace == b.log_posterior_trace

    def test_fixed_point(self):
        data = _sim(6)
        first = ecm_fit(data, CFG, opts=EcmOptions(ecm_tol=1e-8))
        again = ecm_fit(data, CFG, init=first.params)
        assert again.ecm_iterations <= 2
        np.testing.assert_allclose(again.params.Psi, first.params.Psi, atol=1e-6)
        np.testing.assert_allclose(again.params.Omega, first.params.Omega, atol=1e-6)

    def test_guardrail(self):
        # more predictors than samples and almost no spike: Psi can interpolate Y
        rng = np.random.default_rng(7)
        n, p, q = 20, 40, 3
        X, _, _ = standardize_design(rng.standard_normal((n, p)))
        data = Dataset(X, rng.standard_normal((n, q)))
        cfg = SslConfig(1.0001e-3, 1e-3, 2.0, 1.0)
        fit = ecm_fit(data, cfg)
        assert fit.guardrail_triggered and not fit.converged
        assert np.array_equal(fit.params.Psi, np.zeros((p, q)))
        assert np.array_equal(fit.params.Omega, np.eye(q))

    def test_frozen_blocks(self):
        data = _sim(8)
        init = ChainGraphParams.default(data.p, data.q)
        only_omega = run_ecm(data, CFG, init, fit_psi=False)
        assert np.array_equal(only_omega.params.Psi, init.Psi)
        only_psi = run_ecm(data, CFG, init, fit_omega=False)
        assert np.array_equal(only_psi.params.Omega, init.Omega)

    def test_errors_carry_iteration(self, monkeypatch):
        from cgssl import ecm
        from cgssl.errors import LineSearchError

        def boom(*args, **kwargs):
            raise LineSearchError("line search failed")

        monkeypatch.setattr(ecm.cgquic, "solve", boom)
        with pytest.raises(NumericalError, match="ECM iteration 1"):
            ecm_fit(_sim(9), CFG)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            ecm_fit(_sim(10), CFG, init=ChainGraphParams.default(2, 2))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_ascent_property(seed):
    data = _sim(seed, n=60, p=4, q=4, pattern=["ar1", "star", "block"][seed % 3])
    fit = ecm_fit(data, CFG)
    assert np.all(np.diff(fit.log_posterior_trace) >= -1e-8)
