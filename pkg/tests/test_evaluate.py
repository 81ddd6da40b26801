import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog
from scipy.stats import wasserstein_distance

from salesrisk import datagen as dg, evaluate as ev, quantreg as qr
from salesrisk.errors import DataError, DomainError

from conftest import linear_truth_beta


def transport_lp(a, b):
    """O(n^2) optimal-transport LP between two equal-weight point sets."""
    n, m = len(a), len(b)
    C = np.abs(np.subtract.outer(a, b)).ravel()
    A_eq = []
    b_eq = []
    for i in range(n):
        row = np.zeros((n, m))
        row[i, :] = 1.0
        A_eq.append(row.ravel())
        b_eq.append(1.0 / n)
    for j in range(m):
        row = np.zeros((n, m))
        row[:, j] = 1.0
        A_eq.append(row.ravel())
        b_eq.append(1.0 / m)
    res = linprog(C, A_eq=np.array(A_eq), b_eq=np.array(b_eq),
                  bounds=[(0, None)] * (n * m), method="highs")
    assert res.success
    return res.fun


class TestWasserstein:
    def test_identical_is_zero(self):
        a = np.array([3.0, 1.0, 2.0])
        assert ev.wasserstein1(a, a) == 0.0

    def test_unit_shift(self):
        assert ev.wasserstein1(np.array([0.0, 1.0]), np.array([1.0, 2.0])) == pytest.approx(1.0)

    def test_matches_transport_lp(self):
        rng = np.random.default_rng(3)
        for _ in range(3):
            a = rng.normal(size=20)
            b = rng.normal(1.0, 2.0, size=20)
            assert ev.wasserstein1(a, b) == pytest.approx(transport_lp(a, b), abs=1e-9)

    def test_unequal_sizes_match_scipy(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=37)
        b = rng.gamma(2.0, size=111)
        assert ev.wasserstein1(a, b) == pytest.approx(wasserstein_distance(a, b), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            ev.wasserstein1(np.array([]), np.array([1.0]))

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40),
           st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
    @settings(max_examples=60, deadline=None)
    def test_symmetric_and_order_invariant(self, xs, ys):
        a, b = np.array(xs), np.array(ys)
        rng = np.random.default_rng(0)
        w1 = ev.wasserstein1(a, b)
        assert w1 == pytest.approx(ev.wasserstein1(b, a), rel=1e-12, abs=1e-12)
        assert w1 == pytest.approx(ev.wasserstein1(rng.permutation(a), b), rel=1e-12, abs=1e-12)
        assert w1 >= 0.0


class TestKs:
    def test_identical_is_zero(self):
        a = np.array([1.0, 2.0, 3.0])
        assert ev.ks_statistic(a, a) == 0.0

    def test_disjoint_supports(self):
        assert ev.ks_statistic(np.array([0.0, 1.0]), np.array([5.0, 6.0])) == 1.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=50)
        b = rng.normal(0.3, 1.3, size=50)
        pooled = np.concatenate([a, b])
        brute = max(abs((a <= t).mean() - (b <= t).mean()) for t in pooled)
        assert ev.ks_statistic(a, b) == pytest.approx(brute, abs=1e-15)

    def test_symmetric(self):
        rng = np.random.default_rng(6)
        a, b = rng.normal(size=30), rng.normal(size=44)
        assert ev.ks_statistic(a, b) == ev.ks_statistic(b, a)


def oracle_model(linear_truth, m):
    schema, params = linear_truth
    grid = qr.QuantileGrid(m)
    beta = linear_truth_beta(schema, params, grid)
    report = qr.FitReport(loss=np.zeros(m - 1), iterations=np.zeros(m - 1, int),
                          converged=np.ones(m - 1, bool))
    return qr.LinearQuantileModel(schema=schema, grid=grid, beta=beta, fit_report=report)


class TestCalibration:
    def test_perfect_oracle_within_binomial_bound(self, linear_truth):
        schema, params = linear_truth
        model = oracle_model(linear_truth, 20)
        test = dg.synth_generate(params, schema, 30000, seed=41)
        tau_hat = ev.calibration(model, test.rows, test.response)
        lv = model.grid.levels
        sel = (lv >= 0.05) & (lv <= 0.95)
        assert np.abs(tau_hat - lv)[sel].max() <= 0.01

    def test_constant_model_covers_everything(self, linear_truth):
        schema, params = linear_truth
        test = dg.synth_generate(params, schema, 500, seed=43)
        model = oracle_model(linear_truth, 10)
        model.beta[:] = 0.0
        model.beta[:, 0] = model.beta[:, 1] = test.response.max() + 1.0
        tau_hat = ev.calibration(model, test.rows, test.response)
        assert (tau_hat == 1.0).all()

    def test_empty_test_set_rejected(self, linear_truth):
        model = oracle_model(linear_truth, 10)
        with pytest.raises(DataError):
            ev.calibration(model, np.zeros((0, 4)), np.zeros(0))


class TestReplicationPlan:
    def test_seed_derivation_is_prefix_stable(self):
        plan = ev.ReplicationPlan(replications=5, base_seed=123)
        assert plan.seeds(5)[:3] == plan.seeds(3)

    def test_validation(self):
        with pytest.raises(DomainError):
            ev.ReplicationPlan(replications=0)
        with pytest.raises(DomainError):
            ev.ReplicationPlan(split=1.5)


class TestUnconditional:
    def test_row_count_equals_replications(self, linear_truth):
        schema, params = linear_truth
        model = oracle_model(linear_truth, 12)
        test = dg.synth_generate(params, schema, 400, seed=44)
        rep = ev.unconditional_test(model, test, ev.ReplicationPlan(replications=7, base_seed=1))
        assert len(rep.rows) == 7
        assert rep.aggregates["replications"] == 7
        assert set(rep.histograms) == {"generated", "observed"}
        assert len(rep.histograms["generated"]["edges"]) == 61

    def test_degenerate_constant_data(self, small_schema):
        c = 4.25
        grid = qr.QuantileGrid(8)
        beta = np.zeros((7, small_schema.width))
        beta[:, :3] = c  # every one-hot row predicts exactly c at every level
        model = qr.LinearQuantileModel(schema=small_schema, grid=grid, beta=beta,
                                       fit_report=qr.FitReport(np.zeros(7), np.zeros(7, int),
                                                               np.ones(7, bool)))
        rng = np.random.default_rng(0)
        X = dg.sample_covariates(small_schema, 300, rng)
        test = dg.Dataset(small_schema, X, np.full(300, c))
        rep = ev.unconditional_test(model, test, ev.ReplicationPlan(replications=3, base_seed=2))
        for row in rep.rows:
            assert row["wd"] == 0.0 and row["ks"] == 0.0

    def test_schema_mismatch_rejected(self, linear_truth, small_schema):
        model = oracle_model(linear_truth, 12)
        rng = np.random.default_rng(1)
        bad = dg.Dataset(small_schema, dg.sample_covariates(small_schema, 10, rng), np.ones(10))
        with pytest.raises(DataError):
            ev.unconditional_test(model, bad, ev.ReplicationPlan(replications=1))


class TestConditional:
    def test_oracle_model_within_noise_floor(self, linear_truth):
        schema, params = linear_truth
        model = oracle_model(linear_truth, 800)  # large grid: clamp effect below noise
        x = schema.encode_row({"g": "g_0", "x1": 0.5, "x2": 0.5})
        K = 10_000
        floor = np.mean([
            ev.wasserstein1(dg.true_conditional_sample(params, x, K, seed=100 + i),
                            dg.true_conditional_sample(params, x, K, seed=200 + i))
            for i in range(5)
        ])
        rep = ev.conditional_test(model, params, x, ev.ReplicationPlan(replications=5, base_seed=3), K=K)
        assert rep.aggregates["wd"] <= 3.0 * floor

    def test_requires_truth_params(self, linear_truth):
        model = oracle_model(linear_truth, 10)
        with pytest.raises(DomainError):
            ev.conditional_test(model, None, np.zeros(4), ev.ReplicationPlan(replications=1))

    def test_sd_deviation_flag(self, linear_truth):
        schema, params = linear_truth
        x = schema.encode_row({"g": "g_1", "x1": 0.5, "x2": 0.5})
        good = oracle_model(linear_truth, 800)
        plan = ev.ReplicationPlan(replications=3, base_seed=4)
        rep = ev.conditional_test(good, params, x, plan)
        assert rep.aggregates["sd_deviation_flag"] is False
        bad = oracle_model(linear_truth, 800)
        center = bad.beta[len(bad.beta) // 2].copy()
        bad.beta[:] = center[None, :] + 2.0 * (bad.beta - center[None, :])  # inflate spread 2x
        rep = ev.conditional_test(bad, params, x, plan)
        assert rep.aggregates["sd_deviation_flag"] is True


class TestSweep:
    def test_refit_per_replication(self, linear_truth):
        schema, params = linear_truth
        data = dg.synth_generate(params, schema, 1200, seed=50)

        def fit_fn(train, seed):
            return qr.fit_grid(train, qr.QuantileGrid(8))

        plan = ev.ReplicationPlan(replications=3, base_seed=5, split=0.8)
        uncond, cond = ev.replication_sweep(data, plan, fit_fn)
        assert cond is None
        assert len(uncond.rows) == 3
        assert {"gen_mean", "true_mean", "wd", "ks"} <= set(uncond.rows[0])

    def test_report_serialization(self, tmp_path, linear_truth):
        schema, params = linear_truth
        model = oracle_model(linear_truth, 12)
        test = dg.synth_generate(params, schema, 200, seed=51)
        rep = ev.unconditional_test(model, test, ev.ReplicationPlan(replications=2, base_seed=6))
        rep.to_json(tmp_path / "r.json")
        rep.to_csv(tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().count("\n") == 3


class TestHistogramExport:
    def test_histogram_csv(self, tmp_path, linear_truth):
        schema, params = linear_truth
        model = oracle_model(linear_truth, 12)
        test = dg.synth_generate(params, schema, 300, seed=60)
        rep = ev.unconditional_test(model, test, ev.ReplicationPlan(replications=1, base_seed=7))
        out = tmp_path / "hist.csv"
        rep.histograms_to_csv(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "series,bin_lo,bin_hi,count"
        assert len(lines) == 1 + 2 * 60  # generated + observed, 60 bins each
