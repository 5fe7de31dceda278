import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sddefeller.analysis import (
    GriddedFunction,
    catalog_function,
    default_c2,
    deterministic_probe,
    maximal_function,
    maximal_function_grid,
    maximal_inequality_check,
    sample_pairs,
    stochastic_gronwall_check,
)
from sddefeller.driftfree import DomainError


def brute_maximal(v, i):
    n = len(v)
    return max(v[max(i - k, 0) : min(i + k, n - 1) + 1].mean() for k in range(1, (n - 1) // 2 + 1))


class TestMaximalFunction:
    def test_constant(self):
        for dim in (1, 2):
            phi = GriddedFunction(0.25, 2.0, np.full((17,) * dim, 3.0))
            np.testing.assert_allclose(maximal_function_grid(phi), 3.0, rtol=1e-12)

    def test_indicator_value(self):
        # radius 2 from x = 2 covers 401 nodes, 101 of them in [0, 1]; windows are
        # truncated at the grid edge, and on [-6, 6] the truncated ones average at most 101/801
        phi = catalog_function("indicator-unit", 0.01, 6.0)
        assert maximal_function(phi, 2.0) == pytest.approx(101 / 401, rel=1e-12)
        assert maximal_function_grid(phi)[phi.index(2.0)] == pytest.approx(101 / 401, rel=1e-9)

    @given(arrays(float, 21, elements=st.floats(-10, 10)), st.integers(0, 20))
    def test_grid_matches_enumeration(self, v, i):
        phi = GriddedFunction(0.1, 1.0, v)
        ref = brute_maximal(np.asarray(v), i)
        assert maximal_function_grid(phi)[i] == pytest.approx(ref, abs=1e-9)
        assert maximal_function(phi, phi.axis[i]) == pytest.approx(ref, abs=1e-12)

    @given(arrays(float, 21, elements=st.floats(0, 10)), arrays(float, 21, elements=st.floats(0, 10)),
           st.floats(0.1, 10))
    def test_homogeneous_and_subadditive(self, a, b, lam):
        A, B = GriddedFunction(0.1, 1.0, a), GriddedFunction(0.1, 1.0, b)
        MA, MB = maximal_function_grid(A), maximal_function_grid(B)
        np.testing.assert_allclose(maximal_function_grid(A.map(lambda v: lam * v)), lam * MA, atol=1e-9)
        assert np.all(maximal_function_grid(GriddedFunction(0.1, 1.0, a + b)) <= MA + MB + 1e-9)

    def test_two_dim_matches_pointwise(self):
        phi = catalog_function("gaussian-bump", 0.25, 2.0, dim=2)
        grid = maximal_function_grid(phi)
        for x in [(0.0, 0.0), (-2.0, 1.5), (1.0, -0.5)]:
            assert grid[phi.index(x)] == pytest.approx(maximal_function(phi, x), abs=1e-9)

    def test_off_grid_rejected(self):
        phi = catalog_function("sinusoid", 0.1, 1.0)
        with pytest.raises(ValueError):
            maximal_function(phi, 0.05)
        with pytest.raises(ValueError):
            GriddedFunction(0.3, 1.0, np.zeros(7))
        with pytest.raises(KeyError):
            catalog_function("spike", 0.1, 1.0)


class TestMaximalInequality:
    def test_constant_function(self):
        phi = GriddedFunction(0.1, 1.0, np.full(21, 2.0))
        chk = maximal_inequality_check(phi, 500)
        assert chk.c_d == 0.0 and chk.violations == 0

    def test_gaussian_bump(self):
        phi = catalog_function("gaussian-bump", 0.01, 4.0)
        chk = maximal_inequality_check(phi, 5000, seed=1)
        assert chk.violations == 0 and 0 < chk.c_d < 10 and chk.c_dp >= 1

    @pytest.mark.parametrize("name", ["gaussian-bump", "smoothed-step", "sinusoid"])
    def test_refinement_stable(self, name):
        coarse = catalog_function(name, 0.01, 4.0)
        fine = catalog_function(name, 0.005, 4.0)
        pairs = sample_pairs(coarse, 3000, seed=2)
        a = maximal_inequality_check(coarse, pairs)
        b = maximal_inequality_check(fine, pairs)
        assert abs(b.c_d - a.c_d) / a.c_d < 0.1
        assert abs(b.c_dp - a.c_dp) / a.c_dp < 0.1

    def test_pairs_distinct(self):
        phi = catalog_function("sinusoid", 0.1, 1.0, dim=2)
        pairs = sample_pairs(phi, 2000, 3)
        assert pairs.shape == (2000, 2, 2) and not np.any(np.all(pairs[:, 0] == pairs[:, 1], axis=1))

    def test_bad_p(self):
        with pytest.raises(ValueError):
            maximal_inequality_check(catalog_function("sinusoid", 0.1, 1.0), 10, p=1.0)


class TestGronwall:
    def test_defaults(self):
        assert default_c2(0.5) == 2.0

    @given(st.floats(0.01, 0.99), st.floats(0, 3), st.floats(0.01, 3))
    def test_probe_iff(self, p, c1, c2):
        assert deterministic_probe(p, c1, c2) == (c1 >= p and c2 >= 1)

    def test_zero(self):
        assert stochastic_gronwall_check("zero", 1.0, 1.0, 0.5, 1.0).passed

    def test_deterministic(self):
        ok = stochastic_gronwall_check("deterministic-exponential", 2.0, 3.0, 0.5, 1.0)
        assert ok.passed and ok.lhs == pytest.approx(3**0.5 * np.e)
        bad = stochastic_gronwall_check("deterministic-exponential", 10.0, 1.0, 0.5, 1.0, c1=0.1, c2=1.0)
        assert not bad.passed

    def test_martingale_perturbed(self):
        res = stochastic_gronwall_check("martingale-perturbed", 1.0, 1.0, 0.5, 1.0, N=5000, seed=4)
        assert res.passed and res.lhs > 1.0

    @pytest.mark.parametrize("p", [0.0, 1.0, 1.5, -0.2])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            stochastic_gronwall_check("zero", 1.0, 1.0, p, 1.0)
        with pytest.raises(DomainError):
            deterministic_probe(p, 1.0, 2.0)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            stochastic_gronwall_check("zero", -1.0, 1.0, 0.5, 1.0)
        with pytest.raises(ValueError):
            stochastic_gronwall_check("brownian", 1.0, 1.0, 0.5, 1.0)
