"""Numeric primitive contracts: stable log-softmax, cross-entropy, top-k."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from reducr.errors import InvalidInputError
from reducr.numerics import (
    cross_entropy,
    log_softmax,
    make_rng,
    top_k_indices,
)


class TestLogSoftmax:
    def test_two_equal_logits(self):
        np.testing.assert_allclose(
            log_softmax([0.0, 0.0]), [-math.log(2)] * 2, rtol=0, atol=1e-15
        )

    @pytest.mark.parametrize("C", [2, 3, 10, 17])
    def test_uniform_case(self, C):
        out = log_softmax(np.full(C, 3.7))
        np.testing.assert_allclose(out, -math.log(C), rtol=1e-15)

    def test_extreme_logits_no_overflow(self):
        # reference values from the exact expansion: the losing entry is
        # -(1000 + log1p(e^-1000)) = -1000 to full precision, the winning
        # entry -log1p(e^-1000) with e^-1000 ~ 5e-435, i.e. zero at double
        # precision.
        out = log_softmax([1000.0, 0.0])
        assert np.all(np.isfinite(out))
        assert abs(out[0]) < 1e-300
        np.testing.assert_allclose(out[1], -1000.0, rtol=0, atol=1e-9)

    def test_normalization_holds_at_large_magnitude(self):
        rng = make_rng(3)
        for _ in range(200):
            scale = rng.choice([1.0, 10.0, 1e3])
            z = rng.uniform(-scale, scale, size=rng.integers(1, 12))
            total = np.exp(log_softmax(z)).sum()
            assert abs(total - 1.0) <= 1e-12

    @pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 1.0], [1.0, -np.inf]])
    def test_nonfinite_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            log_softmax(bad)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            log_softmax(np.empty(0))


class TestCrossEntropy:
    def test_uniform_predictor(self):
        lp = log_softmax(np.zeros(10))
        for label in range(10):
            np.testing.assert_allclose(cross_entropy(lp, label), math.log(10),
                                       rtol=1e-15)

    def test_perfect_prediction(self):
        lp = log_softmax([800.0, 0.0])
        assert cross_entropy(lp, 0) == pytest.approx(0.0, abs=1e-12)
        assert cross_entropy(lp, 0) >= 0.0

    def test_hand_value(self):
        lp = np.log([0.7, 0.3])
        assert cross_entropy(lp, 1) == pytest.approx(1.2039728043259361, rel=1e-12)

    def test_out_of_range_label(self):
        with pytest.raises(InvalidInputError):
            cross_entropy(np.log([0.5, 0.5]), 2)
        with pytest.raises(InvalidInputError):
            cross_entropy(np.log([0.5, 0.5]), -1)


def brute_force_top_k(scores, k):
    """All optimal size-k subsets by exhaustive enumeration."""
    best = None
    winners = []
    for combo in itertools.combinations(range(len(scores)), k):
        total = sum(scores[i] for i in combo)
        if best is None or total > best + 1e-12:
            best, winners = total, [set(combo)]
        elif abs(total - best) <= 1e-12:
            winners.append(set(combo))
    return winners


class TestTopK:
    def test_strict_ordering(self):
        rng = make_rng(0)
        out = top_k_indices(np.array([0.1, 0.9, 0.5]), 2, rng)
        assert set(out) == {1, 2}

    def test_all_ties_uniform(self):
        rng = make_rng(1)
        n, draws = 5, 100_000
        counts = np.zeros(n)
        scores = np.zeros(n)
        for _ in range(draws):
            counts[top_k_indices(scores, 1, rng)[0]] += 1
        np.testing.assert_allclose(counts / draws, 1 / n, atol=0.01)

    def test_matches_subset_oracle_random(self):
        rng = make_rng(2)
        for _ in range(50):
            scores = rng.standard_normal(8)
            out = set(top_k_indices(scores, 3, rng))
            assert out in brute_force_top_k(scores, 3)

    def test_matches_subset_oracle_small_sizes(self):
        rng = make_rng(3)
        for n in range(1, 11):
            for k in range(1, min(n, 4) + 1):
                scores = rng.standard_normal(n)
                out = set(top_k_indices(scores, k, rng))
                assert out in brute_force_top_k(scores, k)

    def test_boundary_ties_select_among_tied_only(self):
        rng = make_rng(4)
        scores = np.array([5.0, 1.0, 1.0, 1.0, 0.0])
        for _ in range(50):
            out = set(top_k_indices(scores, 2, rng))
            assert 0 in out
            assert out - {0} <= {1, 2, 3}

    def test_k_out_of_range(self):
        rng = make_rng(0)
        with pytest.raises(InvalidInputError):
            top_k_indices(np.array([1.0, 2.0]), 3, rng)
        with pytest.raises(InvalidInputError):
            top_k_indices(np.array([1.0, 2.0]), 0, rng)

    def test_nonfinite_scores_rejected(self):
        with pytest.raises(InvalidInputError):
            top_k_indices(np.array([1.0, np.nan]), 1, make_rng(0))

    @given(
        st.lists(st.floats(-50, 50), min_size=2, max_size=12),
        st.floats(-100, 100),
        st.integers(0, 10_000),
    )
    @settings(max_examples=80, deadline=None)
    def test_constant_shift_invariance(self, values, shift, seed):
        scores = np.asarray(values)
        k = 1 + seed % len(values)
        gaps = np.diff(np.sort(scores))
        assume(gaps.size == 0 or gaps.min() > 1e-6)  # tie-free, robustly
        before = set(top_k_indices(scores, k, make_rng(seed)))
        after = set(top_k_indices(scores + shift, k, make_rng(seed)))
        assert before == after


class TestRng:
    def test_same_seed_same_stream(self):
        a = make_rng(42).random(16)
        b = make_rng(42).random(16)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent(self):
        a = make_rng(42, stream=0).random(16)
        b = make_rng(42, stream=1).random(16)
        assert not np.array_equal(a, b)

    def test_negative_seed_rejected(self):
        with pytest.raises(InvalidInputError):
            make_rng(-1)
