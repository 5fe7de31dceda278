import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sddefeller.driftfree import NoiseStream, simulate_batch, simulate_driftfree
from sddefeller.girsanov import (
    DegeneracyError,
    LogWeightSeries,
    accumulate_log_weight,
    drift_adjustment,
    effective_sample_size,
    log_weight_arrays,
    weak_expectation,
    weight_diagnostics,
    weighted_run,
)
from sddefeller.model import ModelSpec, make_model
from sddefeller.segments import TimeGrid, embed_constant

GRID = TimeGrid(1.0, 1.0, 0.01)


def head(segs):
    return segs[:, -1, 0]


def _const_sigma_model(sig, bvec):
    sig = np.asarray(sig, dtype=float)
    bvec = np.asarray(bvec, dtype=float)
    return ModelSpec(name="custom", d=len(bvec), diffusion=lambda t, y: np.broadcast_to(sig, (y.shape[0], *sig.shape)),
                     singular_drift=lambda t, y: np.broadcast_to(bvec, y.shape), b_bounded=True,
                     constant_diffusion=True, c_sigma=100.0)


class TestDriftAdjustment:
    def test_zero_drift(self):
        p = simulate_driftfree(make_model("brownian"), embed_constant(0.0, GRID), 1.0, NoiseStream(1))
        assert drift_adjustment(make_model("brownian"), p, 0.5).tolist() == [0.0]

    def test_scaled_sigma(self):
        m = make_model("sgn-delay-drift", sigma=2.0)
        p = simulate_driftfree(m, embed_constant(1.0, GRID), 1.0, NoiseStream(1))
        assert drift_adjustment(m, p, 0.0).tolist() == [0.5]

    def test_forward_substitution(self):
        m = _const_sigma_model([[1.0, 0.0], [1.0, 1.0]], [1.0, 1.0])
        p = simulate_driftfree(m, embed_constant([0.0, 0.0], GRID), 1.0, NoiseStream(1))
        np.testing.assert_allclose(drift_adjustment(m, p, 0.3), [1.0, 0.0], atol=1e-15)

    def test_degenerate(self):
        m = _const_sigma_model([[1.0, 1.0], [1.0, 1.0]], [1.0, 0.0])
        g = TimeGrid(1.0, 0.1, 0.01)
        p = simulate_batch(m, embed_constant([0.0, 0.0], g), 0.1, 0, [0])[0]
        with pytest.raises(DegeneracyError, match="1.3"):
            drift_adjustment(m, p, 0.0)
        m1 = _const_sigma_model([[0.0]], [1.0])
        p1 = simulate_batch(m1, embed_constant(0.0, g), 0.1, 0, [0])[0]
        with pytest.raises(DegeneracyError):
            drift_adjustment(m1, p1, 0.0)


class TestLogWeight:
    def test_zero_adjustment(self):
        p = simulate_driftfree(make_model("brownian"), embed_constant(0.0, GRID), 1.0, NoiseStream(2))
        s = accumulate_log_weight(make_model("brownian"), p)
        assert np.all(s.log_d == 0) and s.weight(1.0) == 1.0

    def test_constant_adjustment_pathwise(self):
        c = 0.7
        m = make_model("constant-drift", c=c)
        batch = simulate_batch(m, embed_constant(0.0, GRID), 1.0, 3, np.arange(200))
        log_d, qv = log_weight_arrays(m, batch)
        W = np.concatenate([np.zeros((200, 1)), np.cumsum(batch.noise[:, :, 0], axis=1)], axis=1)
        t = np.arange(GRID.n_steps + 1) * GRID.dt
        np.testing.assert_allclose(log_d, c * W - 0.5 * c * c * t, atol=1e-12)
        np.testing.assert_allclose(qv, np.broadcast_to(c * c * t, qv.shape), atol=1e-12)

    def test_constant_adjustment_moments(self):
        c = 0.7
        m = make_model("constant-drift", c=c)
        N = 10**5
        log_w, _, _ = weighted_run(m, [embed_constant(0.0, GRID)], 1.0, [], N, 4)
        lw = log_w[0, 0]
        w = np.exp(lw)
        assert abs(w.mean() - 1) <= 3 * w.std(ddof=1) / math.sqrt(N)
        se_var = c * c * math.sqrt(2 / (N - 1))
        assert abs(lw.var(ddof=1) - c * c) <= 3 * se_var

    @given(st.integers(0, 1000), st.floats(-2, 2), st.sampled_from(["linear-delay", "sgn-delay-drift",
                                                                     "power-singularity", "constant-drift"]))
    def test_series_invariants(self, seed, x0, name):
        m = make_model(name)
        g = TimeGrid(1.0, 1.0, 0.05)
        p = simulate_driftfree(m, embed_constant(x0, g), 1.0, NoiseStream(seed))
        s = accumulate_log_weight(m, p)
        assert s.log_d[0] == 0 and np.all(np.diff(s.qv) >= 0) and np.all(np.isfinite(s.log_d))

    def test_no_overflow_large_adjustment(self):
        m = make_model("constant-drift", c=1e3)
        g = TimeGrid(1.0, 10.0, 1e-4)
        log_w, _, qv = weighted_run(m, [embed_constant(0.0, g)], 10.0, [], 2, 0)
        assert np.all(np.isfinite(log_w)) and np.all(np.isfinite(qv))
        assert np.all(np.exp(log_w) == 0.0)  # underflows to 0 cleanly, never NaN


class TestWeakExpectation:
    def test_no_drift_is_plain_monte_carlo(self):
        m = make_model("brownian")
        x = embed_constant(0.2, GRID)
        est = weak_expectation(m, x, head, 1.0, 5000, 6)
        plain = simulate_batch(m, x, 1.0, 6, np.arange(5000)).values[:, -1, 0]
        assert est.estimate == plain.mean() and est.mean_weight == 1.0 and est.ess == pytest.approx(5000)

    def test_constant_drift_shift(self):
        est = weak_expectation(make_model("constant-drift"), embed_constant(0.0, GRID), head, 1.0, 10**5, 7)
        assert abs(est.estimate - 1.0) <= 3 * est.se

    def test_sgn_drift_head(self):
        est = weak_expectation(make_model("sgn-delay-drift"), embed_constant(0.0, GRID), head, 1.0, 10**5, 8)
        assert abs(est.estimate - 1.0) <= 3 * est.se

    def test_constant_one_is_mean_weight(self):
        m = make_model("linear-delay")
        g = TimeGrid(1.0, 2.0, 0.01)
        est = weak_expectation(m, embed_constant(0.5, g), lambda s: np.ones(s.shape[0]), 2.0, 3000, 9)
        assert est.estimate == est.mean_weight

    def test_self_normalized_flag(self):
        m = make_model("constant-drift")
        raw = weak_expectation(m, embed_constant(0.0, GRID), head, 1.0, 20_000, 10)
        sn = weak_expectation(m, embed_constant(0.0, GRID), head, 1.0, 20_000, 10, self_normalized=True)
        assert raw.estimate != sn.estimate
        assert abs(sn.estimate - 1.0) <= 3 * sn.se

    def test_ess_warning(self):
        m = make_model("constant-drift", c=3.0)
        est = weak_expectation(m, embed_constant(0.0, GRID), head, 1.0, 2000, 11)
        assert est.warning is None or "effective sample size" in est.warning
        forced = weak_expectation(m, embed_constant(0.0, GRID), head, 1.0, 2000, 11, ess_floor=2001)
        assert forced.warning and "floor" in forced.warning

    def test_bound_enforced(self):
        with pytest.raises(ValueError):
            weak_expectation(make_model("brownian"), embed_constant(5.0, GRID), head, 1.0, 10, 0, f_bound=1.0)

    def test_t_positive(self):
        with pytest.raises(ValueError):
            weak_expectation(make_model("brownian"), embed_constant(0.0, GRID), head, 0.0, 10, 0)


class TestDiagnostics:
    def test_unit_weights(self):
        d = weight_diagnostics((np.zeros(50), np.zeros(50)))
        assert d.mean_weight == 1.0 and d.ess == pytest.approx(50) and d.novikov == 1.0

    def test_constant_adjustment(self):
        m = make_model("constant-drift", c=1.0)
        N = 10**5
        log_w, _, qv = weighted_run(m, [embed_constant(0.0, GRID)], 1.0, [], N, 12)
        d = weight_diagnostics((log_w[0, 0], qv[0, 0]))
        assert abs(d.mean_weight - 1) <= 3 * d.mean_weight_se
        assert abs(d.novikov - math.exp(0.5)) <= max(3 * d.novikov_se, 1e-12)

    def test_dominated(self):
        lw = np.full(1000, -50.0)
        lw[3] = 0.0
        assert effective_sample_size(lw) == pytest.approx(1.0, abs=1e-6)

    def test_series_input(self):
        m = make_model("constant-drift")
        batch = simulate_batch(m, embed_constant(0.0, GRID), 1.0, 1, np.arange(30))
        series = [accumulate_log_weight(m, batch[i]) for i in range(30)]
        assert isinstance(series[0], LogWeightSeries)
        d1 = weight_diagnostics(series, 0.5)
        log_d, qv = log_weight_arrays(m, batch)
        d2 = weight_diagnostics((log_d[:, 50], qv[:, 50]))
        assert d1.mean_weight == pytest.approx(d2.mean_weight, rel=1e-12)

    def test_martingale_across_catalog(self):
        # desk check at reduced N; the full-size run is acceptance criterion 1
        g = TimeGrid(1.0, 2.0, 0.01)
        for name in ("linear-delay", "sgn-delay-drift", "power-singularity", "constant-drift"):
            log_w, _, _ = weighted_run(make_model(name), [embed_constant(0.5, g)], 2.0, [], 20_000, 13,
                                       times=[0.5, 1.0, 2.0])
            w = np.exp(log_w[0])
            se = w.std(axis=1, ddof=1) / math.sqrt(w.shape[1])
            assert np.all(np.abs(w.mean(axis=1) - 1) <= np.maximum(3 * se, 1e-12)), name
