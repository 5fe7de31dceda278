import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sddefeller.direct import (
    CapabilityError,
    CoupledPair,
    HeuristicSchemeWarning,
    coupled_map,
    simulate_coupled,
    simulate_step_method,
    simulate_strong,
    scheme_is_heuristic,
    simulate_strong_batch,
    step_method_values,
    strong_values,
)
from sddefeller.driftfree import NoiseStream, increments_batch, simulate_driftfree
from sddefeller.model import ModelSpec, make_model
from sddefeller.segments import TimeGrid, embed_constant, extract_segment, sup_norm

GRID = TimeGrid(1.0, 2.0, 0.01)


def test_brownian_strong_equals_driftfree():
    m = make_model("brownian")
    x = embed_constant(0.4, GRID)
    a = simulate_strong(m, x, 2.0, NoiseStream(3, 5))
    b = simulate_driftfree(m, x, 2.0, NoiseStream(3, 5))
    assert np.array_equal(a.values, b.values)


def test_small_noise_linear_delay_ode():
    # x' = -x(t - 1), x = 1 on [-1, 0] gives x(t) = 1 - t on [0, 1]
    m = make_model("linear-delay", sigma=1e-8)
    g = TimeGrid(1.0, 1.0, 1e-3)
    for method in ("euler", "step"):
        p = simulate_strong_batch(m, embed_constant(1.0, g), 1.0, 0, np.arange(20), method=method)
        assert np.max(np.abs(p.values[:, -1, 0])) < 1e-6


def test_determinism():
    m = make_model("linear-delay")
    x = embed_constant(0.5, GRID)
    assert np.array_equal(simulate_strong(m, x, 2.0, NoiseStream(9, 1)).values,
                          simulate_strong(m, x, 2.0, NoiseStream(9, 1)).values)


class TestStepMethod:
    def test_sgn_drift_first_block(self):
        m = make_model("sgn-delay-drift")
        dW = increments_batch(1, np.arange(500), GRID.n_steps, GRID.dt, 1)
        k1 = GRID.n_lag + GRID.step_index(1.0)
        for c in (0.7, -0.3):
            v = step_method_values(m, embed_constant(c, GRID), GRID, dW)
            W1 = dW[:, : GRID.n_lag, 0].sum(axis=1)
            np.testing.assert_allclose(v[:, k1, 0], c + math.copysign(1.0, c) + W1, atol=1e-12)

    def test_sgn_diffusion_first_block(self):
        m = make_model("sgn-delay-diffusion")
        p = simulate_step_method(m, embed_constant(2.0, GRID), 2.0, NoiseStream(2))
        W = np.concatenate([[0.0], np.cumsum(p.noise[: GRID.n_lag, 0])])
        np.testing.assert_allclose(p.values[GRID.n_lag : 2 * GRID.n_lag + 1, 0], 2.0 + W, atol=1e-12)

    def test_matches_euler_for_pure_delay(self):
        dW = increments_batch(4, np.arange(200), GRID.n_steps, GRID.dt, 1)
        for name in ("linear-delay", "sgn-delay-drift", "sgn-delay-diffusion"):
            m = make_model(name)
            x = embed_constant(0.3, GRID)
            a = strong_values(m, x, GRID, dW, "step")
            b = strong_values(m, x, GRID, dW, "euler")
            np.testing.assert_allclose(a, b, atol=1e-10, err_msg=name)

    def test_rejects_non_delay(self):
        with pytest.raises(CapabilityError):
            simulate_step_method(_functional_model(), embed_constant(0.0, GRID), 1.0, NoiseStream(0))

    def test_unknown_method(self):
        dW = increments_batch(0, [0], GRID.n_steps, GRID.dt, 1)
        with pytest.raises(ValueError):
            strong_values(make_model("brownian"), embed_constant(0.0, GRID), GRID, dW, "rk4")


class TestCoupling:
    def test_same_initial_zero_distance(self):
        m = make_model("linear-delay")
        x = embed_constant(0.2, GRID)
        pair = simulate_coupled(m, x, x, 2.0, NoiseStream(1))
        assert pair.segment_distance(2.0) == 0.0

    def test_sgn_diffusion_distance(self):
        m = make_model("sgn-delay-diffusion")
        pair = simulate_coupled(m, embed_constant(1.0, GRID), embed_constant(-1.0, GRID), 2.0, NoiseStream(6))
        W1 = pair.x_path.noise[: GRID.n_lag, 0].sum()
        k1 = 2 * GRID.n_lag
        diff = pair.x_path.values[k1, 0] - pair.y_path.values[k1, 0]
        assert diff == pytest.approx(2 + 2 * W1, abs=1e-12)
        assert pair.segment_distance(2.0) >= abs(2 + 2 * W1) - 1e-12

    def test_linear_delay_gronwall(self):
        # the difference solves D' = A D(t - r) deterministically, so |D| <= delta e^{|A| t}
        m = make_model("linear-delay", A=-2.0)
        x = embed_constant(0.0, GRID)
        for delta in (0.5, 0.1, 0.01):
            pair = simulate_coupled(m, x, x.shifted(delta), 2.0, NoiseStream(2))
            for t in (0.5, 1.0, 2.0):
                assert pair.segment_distance(t) <= delta * math.exp(2.0 * t) * (1 + 1e-9)

    def test_noise_must_match(self):
        m = make_model("brownian")
        x = embed_constant(0.0, GRID)
        with pytest.raises(ValueError):
            CoupledPair(simulate_strong(m, x, 1.0, NoiseStream(1)), simulate_strong(m, x, 1.0, NoiseStream(2)))

    @settings(max_examples=25)
    @given(st.floats(-2, 2), st.floats(0, 1), st.integers(0, 100),
           st.sampled_from([("constant-drift", {}), ("linear-delay", {"A": 0.5}), ("brownian", {})]))
    def test_monotone_for_order_preserving(self, x0, gap, seed, spec):
        # additive noise and a drift nondecreasing in the past keep ordered paths ordered
        m = make_model(spec[0], **spec[1])
        g = TimeGrid(1.0, 2.0, 0.05)
        x = embed_constant(x0, g)
        pair = simulate_coupled(m, x, x.shifted(gap), 2.0, NoiseStream(seed))
        assert np.all(pair.x_path.values <= pair.y_path.values + 1e-12)

    def test_coupled_map_chunk_invariance(self):
        m = make_model("linear-delay")
        x = embed_constant(0.5, GRID)
        fn = lambda segs: segs[0][:, -1, 0] - segs[1][:, -1, 0]
        a = coupled_map(m, [x, x.shifted(0.1)], 2.0, 1000, 3, fn)
        b = coupled_map(m, [x, x.shifted(0.1)], 2.0, 1000, 3, fn, chunk=333, workers=2)
        assert np.array_equal(a, b)


def _functional_model():
    # drift through the whole segment and no Lipschitz declaration
    base = make_model("sgn-delay-drift")
    return ModelSpec(**{**base.__dict__, "name": "segment-sup", "lag_drift": None,
                        "delay_drift": lambda t, segs: np.sign(segs.max(axis=1))})


def test_functional_model_has_no_strong_scheme():
    with pytest.raises(CapabilityError):
        simulate_strong(_functional_model(), embed_constant(0.0, GRID), 1.0, NoiseStream(0))
    assert make_model("power-singularity").strong_solvable


def test_singular_drift_flagged_heuristic():
    m = make_model("power-singularity")
    with pytest.warns(HeuristicSchemeWarning):
        simulate_strong(m, embed_constant(0.0, GRID), 1.0, NoiseStream(0))
    assert not scheme_is_heuristic(make_model("constant-drift"))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        simulate_strong(make_model("constant-drift"), embed_constant(0.0, GRID), 1.0, NoiseStream(0))


def test_extract_after_strong():
    m = make_model("linear-delay")
    p = simulate_strong(m, embed_constant(0.5, GRID), 2.0, NoiseStream(0))
    seg = extract_segment(p, 2.0)
    assert seg.values.shape == (GRID.n_lag + 1, 1) and sup_norm(seg) < 50
