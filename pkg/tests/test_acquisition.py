import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tduebo import gp
from tduebo.acquisition import (
    AcqParams,
    Mode,
    PolicyState,
    ei_score,
    score_candidates,
    scores_from_moments,
    ucb_score,
    update_policy,
)
from tduebo.errors import InputError

INV_SQRT_2PI = 0.398942280401432677939946059934  # mpmath, 30 digits

finite = st.floats(-5, 5, allow_nan=False)
positive = st.floats(1e-3, 5, allow_nan=False)


class TestExpectedImprovement:
    def test_at_zero_z(self):
        assert ei_score(0.7, 1.0, 0.7, 0.0) == pytest.approx(INV_SQRT_2PI, rel=1e-15)

    def test_degenerate_limits(self):
        assert ei_score(0.5, 0.0, 0.5, 0.01) == 0.0
        assert ei_score(0.2, 0.0, 0.5, 0.0) == 0.0
        assert ei_score(1.5, 0.0, 0.5, 0.0) == 1.0

    def test_limit_is_continuous(self):
        assert ei_score(1.5, 1e-12, 0.5, 0.0) == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(InputError):
            ei_score(math.nan, 1.0, 0.0)
        with pytest.raises(InputError):
            ei_score(0.0, -1.0, 0.0)

    @given(finite, st.floats(0, 5), finite, st.floats(0, 1))
    def test_non_negative(self, mean, std, f_best, xi):
        assert ei_score(mean, std, f_best, xi) >= 0.0

    @given(finite, finite, st.floats(0, 1), positive, positive)
    def test_monotone_in_std(self, mean, f_best, xi, s1, s2):
        lo, hi = sorted((s1, s2))
        assert ei_score(mean, lo, f_best, xi) <= ei_score(mean, hi, f_best, xi) + 1e-15

    @given(finite, finite, finite, st.floats(0, 1), st.floats(0.05, 5))
    def test_strictly_increasing_in_mean(self, m1, m2, f_best, xi, std):
        if abs(m1 - m2) < 1e-6:
            return
        lo, hi = sorted((m1, m2))
        a, b = ei_score(lo, std, f_best, xi), ei_score(hi, std, f_best, xi)
        # strict in exact arithmetic; in floating point both can underflow to 0
        assert a < b or a == b == 0.0

    def test_monte_carlo(self):
        rng = np.random.default_rng(2024)
        for _ in range(5):
            mean, std, f_best, xi = rng.normal(), rng.uniform(0.1, 2), rng.normal(), rng.uniform(0, 0.2)
            s = rng.normal(mean, std, 10**6)
            gain = np.maximum(0.0, s - f_best - xi)
            se = gain.std(ddof=1) / math.sqrt(gain.size)
            assert abs(ei_score(mean, std, f_best, xi) - gain.mean()) <= 3 * se + 1e-12


class TestUCB:
    def test_values(self):
        assert ucb_score(1.0, 0.5, 2.0) == 2.0
        assert ucb_score(0.3, 0.9, 0.0) == 0.3
        assert ucb_score(0.3, 0.0, 17.0) == 0.3

    def test_errors(self):
        with pytest.raises(InputError):
            ucb_score(0.0, math.inf, 1.0)

    @given(st.lists(st.tuples(finite, st.floats(0, 3)), min_size=1, max_size=20), finite)
    def test_shift_moves_argmax_nowhere(self, pairs, c):
        m = np.array([p[0] for p in pairs])
        s = np.array([p[1] for p in pairs])
        a = scores_from_moments(m, s, Mode.UCB, AcqParams(kappa=2.0), 0.0)
        b = scores_from_moments(m + c, s, Mode.UCB, AcqParams(kappa=2.0), 0.0)
        np.testing.assert_allclose(b - a, c, atol=1e-12)


class TestAcqParams:
    def test_defaults(self):
        p = AcqParams()
        assert (p.xi, p.kappa) == (0.01, 2.0)

    def test_rejects_negative(self):
        with pytest.raises(InputError):
            AcqParams(xi=-0.1)
        with pytest.raises(InputError):
            AcqParams(kappa=-1.0)


class TestPolicy:
    def test_first_call_records_baseline(self):
        s = update_policy(PolicyState(), 1.0, 0)
        assert s.baseline_sigma_bar == 1.0 and s.mode is Mode.UCB

    def test_switches_below_threshold(self):
        s = update_policy(PolicyState(threshold_value=0.5), 1.0, 0)
        s = update_policy(s, 0.49, 4)
        assert s.mode is Mode.EI and s.switch_iteration == 4

    def test_boundary_is_strict(self):
        s = update_policy(PolicyState(threshold_value=0.5), 1.0, 0)
        s = update_policy(s, 0.5, 1)
        assert s.mode is Mode.UCB and s.switch_iteration is None

    def test_one_way(self):
        s = update_policy(PolicyState(), 1.0, 0)
        s = update_policy(s, 0.1, 2)
        s = update_policy(s, 10.0, 3)
        assert s.mode is Mode.EI and s.switch_iteration == 2

    def test_absolute_threshold(self):
        s = PolicyState(threshold_kind="absolute", threshold_value=0.2)
        s = update_policy(s, 0.3, 0)
        assert s.mode is Mode.UCB
        assert update_policy(s, 0.19, 1).mode is Mode.EI

    def test_fixed_modes_never_move(self):
        s = PolicyState(mode=Mode.UCB, switching=False)
        s = update_policy(update_policy(s, 1.0, 0), 0.0, 1)
        assert s.mode is Mode.UCB and s.switch_iteration is None
        e = update_policy(PolicyState(mode=Mode.EI, switching=False), 5.0, 0)
        assert e.mode is Mode.EI

    @given(st.lists(st.floats(0, 3, allow_nan=False), min_size=1, max_size=40))
    def test_one_transition_at_first_crossing(self, sigmas):
        s = PolicyState(threshold_value=0.5)
        modes = []
        for t, v in enumerate(sigmas):
            s = update_policy(s, v, t)
            modes.append(s.mode)
        flips = sum(1 for a, b in zip(modes, modes[1:]) if a != b)
        assert flips <= 1
        crossings = [t for t, v in enumerate(sigmas) if t > 0 and v < 0.5 * sigmas[0]]
        assert s.switch_iteration == (crossings[0] if crossings else None)
        assert (s.mode is Mode.EI) == (s.switch_iteration is not None)

    def test_rejects_negative_sigma(self):
        with pytest.raises(InputError):
            update_policy(PolicyState(), -0.1, 0)


class TestScoreCandidates:
    @pytest.fixture
    def model(self, rng):
        X = rng.random((6, 2))
        return gp.fit(X, rng.standard_normal(6), gp.HyperParams((0.4, 0.6), 1.0, 1e-3))

    def test_ucb_kappa_zero_is_mean(self, model, rng):
        pool = rng.random((9, 2))
        mean, _ = gp.predict(model, pool)
        s = score_candidates(model, pool, PolicyState(), AcqParams(kappa=0.0), 0.0)
        np.testing.assert_array_equal(s, mean)

    def test_elementwise_agreement(self, model, rng):
        pool = rng.random((3, 2))
        mean, var = gp.predict(model, pool)
        ei_state = PolicyState(mode=Mode.EI, switching=False)
        s_ei = score_candidates(model, pool, ei_state, AcqParams(), 0.4)
        s_ucb = score_candidates(model, pool, PolicyState(), AcqParams(), 0.4)
        for i in range(3):
            assert s_ei[i] == pytest.approx(ei_score(mean[i], math.sqrt(var[i]), 0.4, 0.01), rel=1e-12, abs=1e-15)
            assert s_ucb[i] == pytest.approx(ucb_score(mean[i], math.sqrt(var[i]), 2.0), rel=1e-14)

    def test_no_improvement_pool(self):
        s = scores_from_moments(np.array([0.1, -0.3]), np.zeros(2), Mode.EI, AcqParams(), 0.5)
        np.testing.assert_array_equal(s, 0.0)

    def test_empty_pool(self, model):
        with pytest.raises(InputError):
            score_candidates(model, np.empty((0, 2)), PolicyState(), AcqParams(), 0.0)
