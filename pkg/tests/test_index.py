import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semimarkov.exceptions import ConfigError, UsageError
from semimarkov.index import (IndexConfig, compute_index, index_at_time, index_ewma,
                              index_ewma_windowed, index_ma)
from semimarkov.smc import MarkovRenewalSample, extract_mrp

from .oracles import ewma_naive, ma_naive, minute_rewards

V3 = np.array([0.0, 1.0, 2.0])
V5 = np.arange(-2.0, 3.0)


def sample(J, T, end=None, values=V3):
    return MarkovRenewalSample(np.array(J), np.array(T),
                               end if end is not None else T[-1] + 1, values)


def random_sample(n, seed, values=V5, max_sojourn=6):
    rng = np.random.default_rng(seed)
    J = [int(rng.integers(len(values)))]
    for _ in range(n - 1):
        J.append(int((J[-1] + rng.integers(1, len(values))) % len(values)))
    T = np.concatenate([[0], np.cumsum(rng.integers(1, max_sojourn + 1, n - 1))])
    return sample(J, T, int(T[-1]) + int(rng.integers(1, max_sojourn + 1)), values)


@st.composite
def samples(draw, max_jumps=40):
    n = draw(st.integers(2, max_jumps))
    J = [draw(st.integers(0, 4))]
    for _ in range(n - 1):
        J.append((J[-1] + draw(st.integers(1, 4))) % 5)
    w = draw(st.lists(st.integers(1, 8), min_size=n, max_size=n))
    T = np.concatenate([[0], np.cumsum(w[:-1])])
    return sample(J, T, int(T[-1]) + w[-1], V5)


class TestMovingAverage:
    def test_hand_case(self):
        # sojourns of 3 minutes in value 1 then 2 minutes in value 2
        s = sample([1, 2, 0], [0, 3, 5])
        u = index_ma(s, IndexConfig("moving_average", m=1, initial_value=0.0))
        assert u.values[2] == pytest.approx(2.2, abs=1e-15)

    def test_constant_state(self):
        s = sample([2, 2, 2], [0, 3, 4], values=V3)
        cfg = IndexConfig("moving_average", m=2)
        assert np.allclose(index_ma(s, cfg).values, 4.0, rtol=0, atol=1e-15)

    def test_short_history_truncates_at_start(self):
        s = sample([1, 2, 0, 1], [0, 3, 5, 6])
        u = index_ma(s, IndexConfig("moving_average", m=5, initial_value=0.0)).values
        assert u[1] == 1.0
        assert u[3] == pytest.approx((3 * 1 + 2 * 4 + 0) / 6, abs=1e-15)

    def test_initial_value(self):
        s = sample([1, 2], [0, 3])
        assert index_ma(s, IndexConfig("moving_average", m=1, initial_value=7.5)).values[0] == 7.5

    def test_default_initial_value_is_time_mean(self):
        s = sample([1, 2], [0, 3], end=5)
        u = index_ma(s, IndexConfig("moving_average", m=1))
        assert u.values[0] == pytest.approx((3 * 1 + 2 * 4) / 5)
        assert u.config.initial_value == pytest.approx(2.2)

    def test_wrong_kind(self):
        with pytest.raises(ConfigError):
            index_ma(sample([1, 2], [0, 3]), IndexConfig("ewma", lam=0.9))

    def test_requires_m(self):
        with pytest.raises(ConfigError):
            IndexConfig("moving_average")

    def test_matches_naive(self):
        s = random_sample(2000, 3)
        f = V5 ** 2
        u = index_ma(s, IndexConfig("moving_average", m=4, initial_value=0.0)).values
        for n in range(1, 2000, 37):
            assert u[n] == pytest.approx(ma_naive(s.J, s.T, f, 4, n), rel=1e-12)


class TestEwma:
    def test_hand_case(self):
        s = sample([1, 2, 0], [0, 2, 3])
        u = index_ewma(s, IndexConfig("ewma", lam=0.5, initial_value=0.0))
        assert u.values[2] == pytest.approx(19 / 7, rel=1e-14)

    def test_lambda_one_is_time_average(self):
        s = random_sample(300, 1)
        u = index_ewma(s, IndexConfig("ewma", lam=1.0, initial_value=0.0)).values
        r = np.array(minute_rewards(s.J, s.T, V5 ** 2))
        for n in (1, 5, 100, 299):
            assert u[n] == pytest.approx(r[:s.T[n]].mean(), rel=1e-12)

    def test_constant_state_for_any_lambda(self):
        s = sample([1, 1, 1], [0, 4, 9], values=V3)
        for lam in (0.1, 0.5, 0.97, 1.0):
            u = index_ewma(s, IndexConfig("ewma", lam=lam)).values
            # constant f: weights must sum to one
            assert np.allclose(u, 1.0, rtol=0, atol=1e-12)

    def test_streaming_matches_double_sum(self):
        s = random_sample(10_000, 2)
        f = V5 ** 2
        u = index_ewma(s, IndexConfig("ewma", lam=0.97, initial_value=0.0)).values
        picks = np.random.default_rng(0).choice(np.arange(1, 10_000), 60, replace=False)
        for n in list(picks) + [1, 2, 9999]:
            assert u[n] == pytest.approx(ewma_naive(s.J, s.T, f, 0.97, n), rel=1e-10)

    def test_long_sojourns_do_not_underflow(self):
        s = sample([1, 2, 0], [0, 5000, 9000], end=9001)
        u = index_ewma(s, IndexConfig("ewma", lam=0.9, initial_value=0.0)).values
        assert np.isfinite(u).all() and u[2] == pytest.approx(4.0)

    def test_lambda_validated(self):
        for lam in (0.0, 1.5, -0.1):
            with pytest.raises(ConfigError):
                IndexConfig("ewma", lam=lam)

    def test_variance_decreases_with_lambda(self, clustered_small):
        s = extract_mrp(clustered_small)
        var = [index_ewma(s, IndexConfig("ewma", lam=lam)).values[1:].var()
               for lam in (0.8, 0.9, 0.95, 0.98, 0.995)]
        assert all(b <= a for a, b in zip(var, var[1:]))


class TestWindowed:
    def test_wide_window_equals_ewma(self):
        s = random_sample(200, 4)
        full = index_ewma(s, IndexConfig("ewma", lam=0.9, initial_value=0.0)).values
        win = index_ewma_windowed(
            s, IndexConfig("ewma_windowed", m=500, lam=0.9, initial_value=0.0)).values
        assert np.allclose(win, full, rtol=1e-12, atol=0)

    def test_lambda_one_m_one_is_last_sojourn(self):
        s = random_sample(100, 5)
        u = index_ewma_windowed(
            s, IndexConfig("ewma_windowed", m=1, lam=1.0, initial_value=0.0)).values
        assert np.array_equal(u[1:], (V5 ** 2)[s.J[:-1]])

    def test_hand_three_jumps(self):
        s = sample([1, 2, 0, 1], [0, 2, 3, 7])
        f = V3 ** 2
        u = index_ewma_windowed(
            s, IndexConfig("ewma_windowed", m=2, lam=0.8, initial_value=0.0)).values
        for n in (1, 2, 3):
            assert u[n] == pytest.approx(ewma_naive(s.J, s.T, f, 0.8, n, m=2), rel=1e-12)

    def test_matches_naive(self):
        s = random_sample(3000, 6)
        f = V5 ** 2
        u = index_ewma_windowed(
            s, IndexConfig("ewma_windowed", m=7, lam=0.95, initial_value=0.0)).values
        for n in range(1, 3000, 53):
            assert u[n] == pytest.approx(ewma_naive(s.J, s.T, f, 0.95, n, m=7), rel=1e-10)


class TestIndexAtTime:
    def test_jump_epoch_consistency(self):
        s = random_sample(50, 7)
        for kind, extra in (("ewma", {"lam": 0.9}), ("moving_average", {"m": 2}),
                            ("ewma_windowed", {"m": 3, "lam": 0.8})):
            cfg = IndexConfig(kind, initial_value=1.0, **extra)
            u = compute_index(s, cfg, minutes=True)
            for n in (0, 1, 10, 49):
                assert index_at_time(s, cfg, int(s.T[n])) == u.values[n]
                assert u.minutes[s.T[n] - s.T[0]] == u.values[n]

    def test_mid_sojourn_hand_case(self):
        # t=2 is the jump epoch T_1
        s = sample([1, 2, 0], [0, 2, 3])
        cfg = IndexConfig("ewma", lam=0.5, initial_value=0.0)
        assert index_at_time(s, cfg, 2) == pytest.approx(1.0)
        # at t=1, one minute of state 1 has elapsed
        assert index_at_time(s, cfg, 1) == pytest.approx(1.0)
        s2 = sample([1, 2, 0], [0, 2, 6])
        expect = (0.5 ** 4 + 0.5 ** 3 + 4 * (0.5 ** 2 + 0.5)) / (0.5 ** 4 + 0.5 ** 3 + 0.5 ** 2 + 0.5)
        assert index_at_time(s2, cfg, 4) == pytest.approx(expect, rel=1e-14)

    def test_minutes_match_pointwise(self):
        s = random_sample(40, 8)
        for kind, extra in (("ewma", {"lam": 0.9}), ("moving_average", {"m": 2}),
                            ("ewma_windowed", {"m": 3, "lam": 0.8})):
            cfg = IndexConfig(kind, initial_value=1.0, **extra)
            u = compute_index(s, cfg, minutes=True)
            assert len(u.minutes) == s.end_time - s.T[0]
            for t in range(0, s.end_time, 7):
                assert u.minutes[t] == pytest.approx(index_at_time(s, cfg, t), rel=1e-12)

    def test_constant_state(self):
        s = sample([1], [0], end=20, values=V3)
        cfg = IndexConfig("ewma", lam=0.9)
        assert all(index_at_time(s, cfg, t) == 1.0 for t in range(20))

    def test_out_of_range(self):
        s = sample([1, 2], [3, 5], end=8)
        cfg = IndexConfig("ewma", lam=0.9, initial_value=0.0)
        with pytest.raises(UsageError):
            index_at_time(s, cfg, 2)
        with pytest.raises(UsageError):
            index_at_time(s, cfg, 8)


@settings(max_examples=60, deadline=None)
@given(samples(), st.sampled_from(["moving_average", "ewma", "ewma_windowed"]),
       st.floats(0.05, 1.0), st.integers(1, 6))
def test_bounded_by_reward_range(s, kind, lam, m):
    cfg = IndexConfig(kind, m=m if kind != "ewma" else None,
                      lam=lam if kind != "moving_average" else None)
    u = compute_index(s, cfg, minutes=True)
    f = V5 ** 2
    for arr in (u.values, u.minutes):
        assert np.all(np.isfinite(arr))
        assert arr.min() >= f.min() - 1e-12 and arr.max() <= f.max() + 1e-12


@settings(max_examples=40, deadline=None)
@given(samples(max_jumps=15), st.floats(0.05, 1.0))
def test_ewma_streaming_matches_oracle(s, lam):
    f = V5 ** 2
    u = index_ewma(s, IndexConfig("ewma", lam=lam, initial_value=0.0)).values
    for n in range(1, len(s.J)):
        assert u[n] == pytest.approx(ewma_naive(s.J, s.T, f, lam, n), rel=1e-10)
