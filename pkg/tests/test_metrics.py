from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualspace import metrics
from dualspace.metrics import average_precision, broadcast_to_frames, roc_auc


def brute_ap(scores, labels):
    """Sweep every distinct threshold; precision and recall from explicit counts."""
    n_pos = sum(labels)
    total, prev_recall = Fraction(0), Fraction(0)
    for t in sorted(set(scores), reverse=True):
        picked = [y for s, y in zip(scores, labels) if s >= t]
        recall = Fraction(sum(picked), n_pos)
        total += (recall - prev_recall) * Fraction(sum(picked), len(picked))
        prev_recall = recall
    return float(total)


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(Fraction(1) if p > n else Fraction(1, 2) if p == n else Fraction(0) for p in pos for n in neg)
    return float(wins / (len(pos) * len(neg)))


class TestExamples:
    def test_hand_example(self):
        s, y = [0.9, 0.8, 0.7], [1, 0, 1]
        assert average_precision(s, y) == pytest.approx(5 / 6, abs=1e-15)
        assert roc_auc(s, y) == 0.5

    def test_perfect(self):
        assert average_precision([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
        assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_constant_scores(self):
        assert roc_auc([0.5] * 6, [1, 0, 1, 0, 0, 0]) == 0.5
        assert average_precision([0.5] * 6, [1, 0, 1, 0, 0, 0]) == pytest.approx(1 / 3)

    def test_errors(self):
        with pytest.raises(ValueError):
            average_precision([0.1, 0.2], [0, 0])
        with pytest.raises(ValueError):
            roc_auc([0.1, 0.2], [1, 1])
        with pytest.raises(ValueError):
            roc_auc([0.1], [1, 0])
        with pytest.raises(ValueError):
            roc_auc([0.1, 0.2], [1, 2])


class TestOracles:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 300), st.sampled_from([3, 20, 1000]))
    def test_match_brute_force_exactly(self, seed, n, levels):
        rng = np.random.default_rng(seed)
        s = rng.integers(0, levels, n) / levels
        y = rng.integers(0, 2, n)
        y[0], y[1] = 1, 0
        assert average_precision(s, y) == brute_ap(s.tolist(), y.tolist())
        assert roc_auc(s, y) == brute_auc(s.tolist(), y.tolist())

    def test_float_fallback_close_to_exact(self, rng, monkeypatch):
        s, y = rng.random(500), rng.integers(0, 2, 500)
        exact = average_precision(s, y)
        monkeypatch.setattr(metrics, "EXACT_THRESHOLDS", 10)
        assert average_precision(s, y) == pytest.approx(exact, rel=1e-14)

    def test_order_invariance(self, rng):
        s, y = rng.random(200), rng.integers(0, 2, 200)
        perm = rng.permutation(200)
        assert average_precision(s[perm], y[perm]) == average_precision(s, y)
        assert roc_auc(s[perm], y[perm]) == roc_auc(s, y)


class TestBroadcast:
    def test_windows(self):
        np.testing.assert_array_equal(broadcast_to_frames([1.0, 2.0], 20), [1.0] * 16 + [2.0] * 4)

    def test_too_many_frames(self):
        with pytest.raises(ValueError):
            broadcast_to_frames([1.0], 17)
