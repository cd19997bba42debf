"""Posteriors, regret curves and Pareto fronts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from preqmdl.analysis import (model_log_posterior, model_posterior,
                              pareto_front, regret_curve)


class TestPosterior:
    def test_equal_lengths_give_uniform(self):
        np.testing.assert_allclose(model_posterior([5.0, 5.0, 5.0]), 1 / 3,
                                   rtol=1e-12)

    def test_gap_sets_odds(self):
        """A 300 nat gap means odds of e^300 in log space."""
        log_post = model_log_posterior([0.0, 300.0])
        np.testing.assert_allclose(log_post[0] - log_post[1], 300.0,
                                   rtol=1e-12)
        post = model_posterior([0.0, 300.0])
        np.testing.assert_allclose(post[0], 1.0, atol=1e-12)

    def test_no_overflow_for_huge_lengths(self):
        post = model_posterior([1e6, 1e6 + 1])
        assert np.all(np.isfinite(post))
        np.testing.assert_allclose(post.sum(), 1.0, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=8),
           st.floats(-50, 50))
    def test_shift_invariance(self, lengths, shift):
        base = model_posterior(np.array(lengths))
        shifted = model_posterior(np.array(lengths) + shift)
        np.testing.assert_allclose(base, shifted, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(base.sum(), 1.0, rtol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            model_posterior([])


class TestRegretCurve:
    def test_self_regret_is_zero(self):
        losses = np.random.default_rng(0).random(50)
        np.testing.assert_array_equal(regret_curve(losses, losses),
                                      np.zeros(50))

    def test_matches_manual_cumsum(self):
        a = np.array([1.0, 2.0, 3.0])
        b = np.array([0.5, 2.5, 1.0])
        np.testing.assert_allclose(regret_curve(a, b), [0.5, 0.0, 2.0],
                                   rtol=1e-15)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            regret_curve(np.zeros(3), np.zeros(4))


def _brute_force_front(flops, lengths):
    """Non-dominated indices by the definition, with first-of-duplicates."""
    keep = []
    seen = set()
    for i in range(len(flops)):
        point = (flops[i], lengths[i])
        if point in seen:
            continue
        dominated = False
        for j in range(len(flops)):
            if (flops[j] <= flops[i] and lengths[j] < lengths[i]) or \
                    (flops[j] < flops[i] and lengths[j] <= lengths[i]):
                dominated = True
                break
        if not dominated:
            keep.append(i)
            seen.add(point)
    return sorted(keep, key=lambda i: (flops[i], lengths[i]))


class TestParetoFront:
    def test_worked_example(self):
        """(3, 4) is beaten by (2, 3) on both axes."""
        idx = pareto_front([1.0, 2.0, 3.0], [5.0, 3.0, 4.0])
        np.testing.assert_array_equal(idx, [0, 1])

    def test_equal_flops_keeps_lower_length(self):
        idx = pareto_front([1.0, 1.0], [5.0, 3.0])
        np.testing.assert_array_equal(idx, [1])

    def test_duplicates_keep_first(self):
        idx = pareto_front([2.0, 2.0, 1.0], [3.0, 3.0, 9.0])
        np.testing.assert_array_equal(idx, [2, 0])

    def test_front_lengths_strictly_decreasing(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            n = int(rng.integers(1, 40))
            flops = rng.integers(1, 10, size=n).astype(float)
            lengths = rng.integers(1, 10, size=n).astype(float)
            idx = pareto_front(flops, lengths)
            assert np.all(np.diff(flops[idx]) > 0) or len(idx) == 1
            assert np.all(np.diff(lengths[idx]) < 0) or len(idx) == 1

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(1, 30))
            flops = rng.integers(1, 8, size=n).astype(float)
            lengths = rng.integers(1, 8, size=n).astype(float)
            got = sorted(pareto_front(flops, lengths).tolist())
            want = sorted(_brute_force_front(flops.tolist(),
                                             lengths.tolist()))
            assert got == want

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pareto_front([], [])
