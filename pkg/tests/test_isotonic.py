import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adeqboot.isotonic import (
    PowerCurve,
    TrialRecord,
    adaptive_schedule,
    isotonic_fit,
    max_min_estimate,
    schedule_budget,
    solve_level,
)

trial_lists = st.lists(
    st.tuples(st.integers(1, 15), st.booleans()).map(lambda t: TrialRecord(*t)), min_size=1, max_size=50
)


def bernoulli_loglik(trials, curve):
    ll = 0.0
    for t in trials:
        p = curve(t.size)
        q = p if t.rejected else 1 - p
        ll += math.log(q) if q > 0 else -math.inf
    return ll


class TestIsotonicFit:
    def test_all_rejected(self):
        c = isotonic_fit([TrialRecord(s, True) for s in (3, 5, 9)])
        assert np.all(c.p_hat == 1.0)

    def test_small_example(self):
        c = isotonic_fit([TrialRecord(1, False), TrialRecord(2, True), TrialRecord(3, False)])
        assert c(1) == 0.0
        assert c(2) == 0.5 and c(3) == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            isotonic_fit([])

    def test_matches_max_min_on_random_trials(self):
        rng = np.random.default_rng(0)
        trials = [TrialRecord(int(s), bool(r)) for s, r in zip(rng.integers(1, 30, 50), rng.random(50) < 0.5)]
        c = isotonic_fit(trials)
        ref = max_min_estimate(trials)
        for s, p in c.knots:
            assert p == ref[s]

    @settings(max_examples=200, deadline=None)
    @given(trial_lists)
    def test_property_pava_equals_max_min(self, trials):
        c = isotonic_fit(trials)
        ref = max_min_estimate(trials)
        assert {s: p for s, p in c.knots} == ref

    @settings(max_examples=100, deadline=None)
    @given(trial_lists)
    def test_monotone_and_bounded(self, trials):
        c = isotonic_fit(trials)
        assert np.all(np.diff(c.p_hat) >= 0)
        assert np.all((c.p_hat >= 0) & (c.p_hat <= 1))
        assert np.all(np.diff(c.sizes) > 0)

    @settings(max_examples=60, deadline=None)
    @given(trial_lists, st.integers(1, 15))
    def test_extra_rejection_never_lowers(self, trials, s):
        before = isotonic_fit(trials)
        after = isotonic_fit(trials + [TrialRecord(s, True)])
        for size in range(s, 16):
            assert after(size) >= before(size)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 6), st.booleans()).map(lambda t: TrialRecord(*t)), min_size=2, max_size=20))
    def test_maximum_likelihood_against_perturbations(self, trials):
        c = isotonic_fit(trials)
        best = bernoulli_loglik(trials, c)
        for i in range(len(c.p_hat)):
            for d in (-0.01, 0.01):
                p = c.p_hat.copy()
                p[i] = min(1.0, max(0.0, p[i] + d))
                if np.all(np.diff(p) >= 0):
                    assert best >= bernoulli_loglik(trials, PowerCurve(c.sizes, p)) - 1e-12


class TestSolveLevel:
    def test_step_curve(self):
        c = PowerCurve(np.array([100, 300, 800]), np.array([0.2, 0.5, 0.9]))
        assert solve_level(c, 0.5) == 300

    def test_all_one(self):
        assert solve_level(PowerCurve(np.array([4, 8]), np.array([1.0, 1.0])), 0.5) == 4

    def test_saturation(self):
        assert solve_level(PowerCurve(np.array([4, 8]), np.array([0.0, 0.0])), 0.5) is None


class TestSchedule:
    def test_always_rejected(self):
        res = adaptive_schedule(lambda n, i: True, 2000, 0.5, 10)
        assert res.adequate_size == 10
        assert res.n_trials <= schedule_budget(2000, 10)

    def test_never_rejected(self):
        res = adaptive_schedule(lambda n, i: False, 2000, 0.5, 10)
        assert res.saturated and res.adequate_size == 2000

    def test_threshold_oracle(self):
        res = adaptive_schedule(lambda n, i: n > 500, 2000, 0.5, 10)
        assert abs(res.adequate_size - 500) <= 10

    def test_budget_bound_random(self):
        rng = np.random.default_rng(3)
        draws = rng.random(100_000)
        res = adaptive_schedule(lambda n, i: draws[i] < n / 3000, 3000, 0.5, 15)
        assert res.n_trials <= schedule_budget(3000, 15)

    def test_failed_trials_dropped(self):
        res = adaptive_schedule(lambda n, i: None if i % 3 == 0 else n > 300, 1000, 0.5, 10)
        assert res.n_failed > 0
        assert len(res.curve.trials) == res.n_trials - res.n_failed

    def test_small_n_clips(self):
        res = adaptive_schedule(lambda n, i: n > 3, 10, 0.5, 1)
        assert 1 <= res.adequate_size <= 10

    def test_indices_are_unique_and_ordered(self):
        seen = []
        adaptive_schedule(lambda n, i: seen.append(i) or (n > 100), 400, 0.5, 4)
        assert seen == list(range(len(seen)))

    def test_tsv(self):
        c = isotonic_fit([TrialRecord(1, False), TrialRecord(2, True)])
        assert c.to_tsv().splitlines() == ["size\tp_hat", "1\t0.0", "2\t1.0"]
        assert c.trials_tsv().splitlines()[1:] == ["1\t0", "2\t1"]
