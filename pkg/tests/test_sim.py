import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cgssl.errors import NotPositiveDefiniteError
from cgssl.sim import (PATTERNS, BenchmarkConfig, OmegaPattern, aggregate, format_report,
                       gen_dataset, gen_omega, gen_psi, replicate_seed, run_benchmark,
                       run_replicate, sample_noise, support_metrics, worker_count)


def _offdiag_pairs(om):
    return int(np.count_nonzero(om[np.triu_indices(om.shape[0], k=1)]))


class TestGenOmega:
    def test_ar1_q3(self):
        om = gen_omega(OmegaPattern("AR1", 3))
        d = 1 - 0.49
        expected = np.array([[1 / d, -0.7 / d, 0.0], [-0.7 / d, 1.49 / d, -0.7 / d], [0.0, -0.7 / d, 1 / d]])
        np.testing.assert_allclose(om, expected, atol=1e-14)
        assert om[0, 2] == 0.0
        assert om[0, 0] == pytest.approx(1.9608, abs=1e-4)
        assert om[1, 1] == pytest.approx(2.9216, abs=1e-4)
        assert om[0, 1] == pytest.approx(-1.3725, abs=1e-4)

    @pytest.mark.parametrize("q", [4, 10, 30])
    def test_ar1_inverts_covariance(self, q):
        k = np.arange(q)
        sigma = 0.7 ** np.abs(k[:, None] - k[None, :])
        np.testing.assert_allclose(gen_omega(OmegaPattern("ar1", q)) @ sigma, np.eye(q), atol=1e-12)

    @pytest.mark.parametrize("q", [4, 10, 30])
    def test_block_inverts_covariance(self, q):
        m = q // 2
        blk = np.full((m, m), 0.5) + 0.5 * np.eye(m)
        sigma = np.zeros((q, q))
        sigma[:m, :m] = sigma[m:, m:] = blk
        np.testing.assert_allclose(gen_omega(OmegaPattern("block", q)) @ sigma, np.eye(q), atol=1e-12)

    def test_ar2_and_star_values(self):
        om = gen_omega(OmegaPattern("ar2", 5))
        assert om[0, 0] == 1.0 and om[0, 1] == 0.5 and om[0, 2] == 0.25 and om[0, 3] == 0.0
        star = gen_omega(OmegaPattern("star", 4))
        assert _offdiag_pairs(star) == 3
        assert np.all(star[0, 1:] == 0.1) and np.all(np.diag(star) == 1.0)

    def test_dense_values(self):
        om = gen_omega(OmegaPattern("dense", 6))
        assert np.all(om[~np.eye(6, dtype=bool)] == 2.0)
        assert np.all(np.diag(om) == 11.0)

    @pytest.mark.parametrize("q", [4, 10, 30])
    @pytest.mark.parametrize("kind", PATTERNS)
    def test_positive_definite(self, kind, q):
        om = gen_omega(OmegaPattern(kind, q))
        np.linalg.cholesky(om)
        assert np.array_equal(om, om.T)

    @pytest.mark.parametrize("kind,count", [("ar1", 9), ("ar2", 17), ("block", 20), ("star", 9), ("dense", 45)])
    def test_offdiagonal_counts(self, kind, count):
        assert _offdiag_pairs(gen_omega(OmegaPattern(kind, 10))) == count

    def test_errors(self):
        with pytest.raises(ValueError):
            OmegaPattern("ar2", 2)
        with pytest.raises(ValueError):
            OmegaPattern("block", 5)
        with pytest.raises(ValueError):
            OmegaPattern("banded", 4)
        with pytest.raises(ValueError):
            OmegaPattern("star", 1)


class TestGenPsi:
    def test_count(self):
        psi = gen_psi(10, 10, 0.2, np.random.default_rng(0))
        assert np.count_nonzero(psi) == 20
        assert np.all(np.abs(psi[psi != 0]) < 2)

    def test_full_density(self):
        assert np.count_nonzero(gen_psi(4, 3, 1.0, np.random.default_rng(1))) == 12

    def test_deterministic(self):
        assert np.array_equal(gen_psi(5, 5, 0.3, 7), gen_psi(5, 5, 0.3, 7))

    def test_bad_density(self):
        with pytest.raises(ValueError):
            gen_psi(3, 3, 0.0)

    @given(st.integers(1, 12), st.integers(1, 12), st.floats(0.01, 1.0))
    def test_count_rule(self, p, q, density):
        psi = gen_psi(p, q, density, np.random.default_rng(0))
        assert np.count_nonzero(psi) == int(round(density * p * q))


class TestGenDataset:
    def test_noise_covariance(self):
        om = np.array([[2.0, 1.0], [1.0, 2.0]])
        E = sample_noise(om, 100_000, np.random.default_rng(3))
        np.testing.assert_allclose(np.cov(E.T), np.linalg.inv(om), atol=0.01)

    def test_zero_psi_gives_noise(self):
        om = gen_omega(OmegaPattern("ar1", 3))
        data, raw = gen_dataset(np.zeros((2, 3)), om, 50, np.random.default_rng(4))
        rng = np.random.default_rng(4)
        rng.standard_normal((50, 2))
        np.testing.assert_allclose(data.Y, sample_noise(om, 50, rng), atol=1e-14)
        assert raw.shape == (50, 2)

    def test_mean_structure(self):
        # with almost no noise Y is X Psi0 Omega0^{-1}
        psi0 = np.array([[1.0, -2.0], [0.5, 0.0]])
        om = 1e8 * np.array([[2.0, 1.0], [1.0, 2.0]])
        data, raw = gen_dataset(psi0 * 1e8, om, 30, np.random.default_rng(5))
        np.testing.assert_allclose(data.Y, raw @ psi0 @ np.linalg.inv(om / 1e8), atol=1e-3)

    def test_deterministic(self):
        om = gen_omega(OmegaPattern("star", 4))
        psi = gen_psi(3, 4, 0.5, 1)
        a, _ = gen_dataset(psi, om, 20, 9)
        b, _ = gen_dataset(psi, om, 20, 9)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)

    def test_errors(self):
        with pytest.raises(ValueError):
            gen_dataset(np.zeros((5, 2)), np.eye(2), 5)
        with pytest.raises(NotPositiveDefiniteError):
            gen_dataset(np.zeros((1, 2)), -np.eye(2), 5)


class TestSupportMetrics:
    def test_perfect(self):
        truth = np.array([[1.0, 0.0], [0.0, -2.0]])
        m = support_metrics(truth, truth)
        assert (m.sensitivity, m.precision, m.frob) == (1.0, 1.0, 0.0)

    def test_empty_estimate(self):
        m = support_metrics(np.zeros((2, 3)), np.array([[1.0, 0, 2], [0, 0, 3]]))
        assert (m.tp, m.fn, m.sensitivity, m.precision) == (0, 3, 0.0, None)

    def test_hand_count(self):
        m = support_metrics(np.array([[1.0, 1.0]]), np.array([[1.0, 0.0]]))
        assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 0, 0)
        assert m.precision == 0.5 and m.sensitivity == 1.0
        assert m.frob == 1.0

    def test_off_diagonal_only(self):
        truth = gen_omega(OmegaPattern("ar1", 4))
        est = np.eye(4)
        est[3, 0] = est[0, 3] = 0.1
        m = support_metrics(est, truth, off_diagonal_only=True)
        assert m.tp + m.tn + m.fp + m.fn == 6
        assert (m.tp, m.fp, m.fn) == (0, 1, 3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            support_metrics(np.zeros((2, 2)), np.zeros((2, 3)))

    @given(arrays(float, (4, 5), elements=st.sampled_from([0.0, 1.0, -0.5])),
           arrays(float, (4, 5), elements=st.sampled_from([0.0, 2.0])))
    def test_count_identities(self, est, truth):
        m = support_metrics(est, truth)
        assert m.tp + m.fn == np.count_nonzero(truth)
        assert m.tp + m.fp == np.count_nonzero(est)
        assert m.tp + m.tn + m.fp + m.fn == 20
        assert m.frob == pytest.approx(math.sqrt(np.sum((est - truth) ** 2)))


class TestSeeds:
    def test_known_value(self):
        # first output of the reference splitmix64 generator seeded with 0
        assert replicate_seed(0, 0) == 0xE220A8397B1DCDAF

    def test_distinct(self):
        assert len({replicate_seed(3, i) for i in range(1000)}) == 1000


class TestBenchmark:
    CFG = BenchmarkConfig(n=30, p=3, q=4, pattern="ar1", replicates=1, seed=11)

    def test_single_replicate(self):
        res = run_benchmark(self.CFG, workers=1)
        row = res["replicates"][0]
        assert row["ok"]
        agg = res["aggregate"]
        assert agg["replicates_ok"] == 1 and agg["replicates_failed"] == 0
        for block in ("psi", "omega"):
            for metric in ("sensitivity", "precision", "frob"):
                stat = agg[block][metric]
                assert stat["sd"] is None
                assert stat["mean"] == row[block][metric]

    def test_deterministic_and_parallel_safe(self):
        cfg = BenchmarkConfig(n=30, p=3, q=4, pattern="star", replicates=2, seed=5, method="dcpe")
        a = run_benchmark(cfg, workers=1)
        b = run_benchmark(cfg, workers=2)
        assert a == b
        assert format_report(a) == format_report(b)

    def test_failed_replicates_are_counted(self, monkeypatch):
        from cgssl import sim

        def boom(*args, **kwargs):
            raise ArithmeticError("boom")

        monkeypatch.setattr(sim, "dpe", boom)
        row = run_replicate(self.CFG, 0)
        assert not row["ok"] and "boom" in row["error"]
        agg = aggregate([row])
        assert agg["replicates_failed"] == 1 and agg["psi"]["precision"]["mean"] is None
        assert "failed replicates: 1" in format_report({"config": vars(self.CFG), "aggregate": agg})

    def test_aggregate_skips_absent_precision(self):
        rows = [{"ok": True, "psi": {"sensitivity": s, "precision": p, "frob": 1.0},
                 "omega": {"sensitivity": 1.0, "precision": 1.0, "frob": 0.0}}
                for s, p in [(0.5, None), (1.0, 0.8), (0.0, 0.6)]]
        agg = aggregate(rows)
        assert agg["psi"]["precision"]["count"] == 2
        assert agg["psi"]["precision"]["mean"] == pytest.approx(0.7)
        assert agg["psi"]["sensitivity"]["sd"] == pytest.approx(0.5)

    def test_config_errors(self):
        with pytest.raises(ValueError):
            BenchmarkConfig(method="glasso")
        with pytest.raises(ValueError):
            BenchmarkConfig(replicates=0)
        with pytest.raises(ValueError):
            BenchmarkConfig(n=5, p=10)

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("CGSSL_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("CGSSL_THREADS", "zero")
        with pytest.raises(ValueError):
            worker_count()
        monkeypatch.delenv("CGSSL_THREADS")
        assert worker_count() >= 1
