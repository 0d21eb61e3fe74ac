import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from l0nsaf.sparsity import (
    AttractorParams,
    attractor_decomposition,
    l0_norm_approx,
    zero_attractor_f,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
weights = hnp.arrays(np.float64, st.integers(1, 40), elements=finite)
thetas = st.floats(0.05, 50, allow_nan=False)


def f_branchwise(w, theta):
    """Independent scalar transcription of the piecewise attractor."""
    out = []
    for wj in w:
        if -1 / theta <= wj < 0:
            out.append(-theta**2 * wj - theta)
        elif 0 < wj <= 1 / theta:
            out.append(-theta**2 * wj + theta)
        else:
            out.append(0.0)
    return np.array(out)


class TestL0Approx:
    def test_zero_vector(self):
        assert l0_norm_approx(np.zeros(7), 5.0) == 0.0

    def test_ln2_example(self):
        assert l0_norm_approx(np.array([1.0, -1.0]), math.log(2)) == pytest.approx(1.0, abs=1e-15)

    def test_large_entries_count(self):
        w = np.array([0.0, 1e6, -1e6, 0.0, 3e5])
        assert l0_norm_approx(w, 5.0) == pytest.approx(3.0, abs=1e-12)

    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError):
            l0_norm_approx(np.ones(2), 0.0)


class TestAttractor:
    @pytest.mark.parametrize("wj,expected", [(0.1, 2.5), (-0.1, -2.5), (0.5, 0.0), (0.0, 0.0),
                                             (0.2, 0.0), (-0.2, 0.0)])
    def test_branch_values(self, wj, expected):
        assert zero_attractor_f(np.array([wj]), 5.0)[0] == pytest.approx(expected, abs=1e-14)

    def test_decomposition_examples(self):
        dec = attractor_decomposition(np.array([0.1]), 5.0)
        assert dec.s_diag.tolist() == [-25.0] and dec.g_vec.tolist() == [5.0]
        assert dec.apply(np.array([0.1]))[0] == pytest.approx(2.5)
        dec0 = attractor_decomposition(np.zeros(3), 5.0)
        assert not dec0.s_diag.any() and not dec0.g_vec.any()

    def test_boundary_continuity(self):
        w = np.array([0.2, -0.2])
        dec = attractor_decomposition(w, 5.0)
        np.testing.assert_allclose(dec.apply(w), 0.0, atol=1e-15)

    def test_rejects_nonpositive_theta(self):
        with pytest.raises(ValueError):
            zero_attractor_f(np.ones(2), 0.0)
        with pytest.raises(ValueError):
            AttractorParams(theta=-1.0)

    @given(weights, thetas)
    def test_matches_branchwise_oracle(self, w, theta):
        np.testing.assert_allclose(zero_attractor_f(w, theta), f_branchwise(w, theta),
                                   rtol=1e-12, atol=1e-12 * theta)

    @given(weights, thetas)
    def test_decomposition_identity_exact(self, w, theta):
        dec = attractor_decomposition(w, theta)
        assert np.array_equal(zero_attractor_f(w, theta), dec.s_diag * w + dec.g_vec)

    @given(weights, thetas)
    def test_decomposition_support(self, w, theta):
        dec = attractor_decomposition(w, theta)
        assert set(np.unique(dec.s_diag)) <= {-(theta * theta), 0.0}
        assert set(np.unique(dec.g_vec)) <= {-theta, 0.0, theta}
        assert np.array_equal(dec.s_diag == 0, dec.g_vec == 0)

    @given(weights, thetas)
    def test_dead_zone(self, w, theta):
        f = zero_attractor_f(w, theta)
        dead = (w == 0) | (np.abs(w) > 1 / theta)
        assert np.all(f[dead] == 0)

    @given(weights, thetas)
    def test_scale_relation(self, w, theta):
        tw = theta * w
        # skip taps where scaling underflows to zero or rounds across the boundary
        keep = ((tw != 0) == (w != 0)) & (np.abs(np.abs(tw) - 1.0) > 1e-12)
        lhs = zero_attractor_f(w, theta)[keep]
        rhs = theta * zero_attractor_f(tw, 1.0)[keep]
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * theta)

    @given(weights, thetas, st.floats(1e-6, 10.0))
    def test_attraction_points_to_zero(self, w, theta, kappa):
        dec = attractor_decomposition(w, theta)
        pull = dec.apply(w)
        live = (w != 0) & (np.abs(w) <= 1 / theta)
        assert np.all(pull[live] * np.sign(w[live]) >= 0)
        step = w - kappa * pull
        inner = live & (np.abs(w) < 1 / theta)
        assert np.all((step[inner] - w[inner]) * np.sign(w[inner]) < 0)

    @given(weights, thetas, st.floats(1e-6, 10.0))
    def test_contracts_without_overshoot(self, w, theta, kappa):
        # |w - kappa f| < |w| exactly when kappa * theta * (1 - theta |w|) < 2 |w|
        dec = attractor_decomposition(w, theta)
        step = w - kappa * dec.apply(w)
        a = np.abs(w)
        ok = (w != 0) & (a < 1 / theta) & (kappa * theta * (1 - theta * a) < 2 * a * (1 - 1e-9))
        assert np.all(np.abs(step[ok]) < a[ok])

    def test_large_kappa_can_overshoot(self):
        # kappa * theta^2 < 1 alone does not prevent crossing zero
        w = np.array([0.125])
        step = w - 0.5 * zero_attractor_f(w, 1.0)
        assert step[0] == pytest.approx(-0.3125)
