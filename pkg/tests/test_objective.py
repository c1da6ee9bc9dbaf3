import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualspace import autodiff as ad
from dualspace.lorentz import euclid_to_lorentz
from dualspace.objective import (
    ClassifierParams,
    HvlglConfig,
    bce_from_log_probs,
    bce_loss,
    classify,
    hvlgl_loss,
    hvlgl_video_loss,
    mil_k,
    mil_log_probs,
    mil_video_score,
    negative_weight,
    topk_indices,
    total_loss,
)


def at_distance(d, dim=2):
    p = np.zeros(dim + 1)
    p[0], p[1] = math.cosh(d), math.sinh(d)
    return p


ORIGIN = np.array([1.0, 0.0, 0.0])


class TestClassifier:
    def test_orthogonal_weight(self):
        # W = 0 makes the Lorentz inner product vanish
        p = ClassifierParams(W=np.zeros(4), b=0.0)
        got = classify(np.ones((2, 3)), p).data
        np.testing.assert_allclose(got, float(1 / (1 + mp.exp(-1))), rtol=1e-14)
        assert got[0] == pytest.approx(0.731059, abs=1e-6)

    def test_zero_epsilon_constant(self, rng):
        p = ClassifierParams(W=rng.standard_normal(4), b=0.3, epsilon=0.0)
        np.testing.assert_allclose(classify(rng.standard_normal((5, 3)), p).data, 1 / (1 + math.exp(-0.3)))

    def test_formula(self, rng):
        X, W = rng.standard_normal((4, 3)), rng.standard_normal(4)
        z = euclid_to_lorentz(X).data
        inner = -z[:, 0] * W[0] + z[:, 1:] @ W[1:]
        want = 1 / (1 + np.exp(-(0.5 + 0.5 * inner - 0.2)))
        np.testing.assert_allclose(classify(X, ClassifierParams(W, -0.2, 0.5)).data, want, rtol=1e-12)

    def test_range(self, rng):
        s = classify(rng.standard_normal((50, 3)) * 3, ClassifierParams(rng.standard_normal(4), 0.0)).data
        assert np.all((s > 0) & (s < 1))


class TestMil:
    def test_k_rule(self):
        assert [mil_k(t) for t in (1, 15, 16, 31, 32, 64)] == [1, 1, 2, 2, 3, 5]

    def test_example(self):
        s = np.array([0.9, 0.1, 0.8, 0.2] + [0.0] * 12)
        assert float(mil_video_score(s).data) == pytest.approx(0.85)

    def test_single(self):
        assert float(mil_video_score(np.array([0.4])).data) == 0.4

    def test_ties_to_lower_index(self):
        np.testing.assert_array_equal(topk_indices(np.array([0.5, 0.7, 0.5, 0.7]), 3), [1, 3, 0])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            mil_video_score(np.zeros(0))

    def test_gradient_only_to_selected(self):
        s = ad.Tensor(np.linspace(0, 1, 20), requires_grad=True)
        ad.backward(mil_video_score(s))
        np.testing.assert_allclose(s.grad, [0] * 18 + [0.5, 0.5])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.integers(0, 2**32 - 1))
    def test_permutation_invariant_and_monotone(self, values, seed):
        s = np.array(values)
        rng = np.random.default_rng(seed)
        base = float(mil_video_score(s).data)
        assert float(mil_video_score(rng.permutation(s)).data) == pytest.approx(base, abs=1e-15)
        bumped = s.copy()
        bumped[rng.integers(len(s))] += 0.1
        assert float(mil_video_score(bumped).data) >= base - 1e-15


class TestLogSpace:
    def test_matches_probability_path(self, rng):
        z = rng.normal(0, 3, 40)
        lp, lq = mil_log_probs(z)
        s = float(mil_video_score(1 / (1 + np.exp(-z))).data)
        assert float(lp.data) == pytest.approx(math.log(s), rel=1e-12)
        assert float(lq.data) == pytest.approx(math.log1p(-s), rel=1e-12)

    def test_bce_agrees_inside_clamp(self, rng):
        z = rng.normal(0, 2, (6, 20))
        y = np.array([1, 0, 1, 0, 0, 1])
        pairs = [mil_log_probs(row) for row in z]
        got = bce_from_log_probs(ad.stack([p for p, _ in pairs]), ad.stack([q for _, q in pairs]), y)
        probs = np.array([float(mil_video_score(1 / (1 + np.exp(-row))).data) for row in z])
        assert float(got.data) == pytest.approx(float(bce_loss(probs, y).data), rel=1e-12)

    def test_gradient_survives_saturation(self):
        z = ad.Tensor(np.full(8, -200.0), requires_grad=True)
        lp, _ = mil_log_probs(z)
        loss = bce_from_log_probs(lp.reshape(1), _.reshape(1), [1])
        assert float(loss.data) == pytest.approx(200.0, rel=1e-6)
        ad.backward(loss)
        assert z.grad.min() < -0.4

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            mil_log_probs(np.zeros(0))
        with pytest.raises(ValueError):
            bce_from_log_probs(np.zeros(2), np.zeros(2), [1])


class TestBce:
    def test_half(self):
        assert float(bce_loss(np.array([0.5]), [1]).data) == pytest.approx(float(mp.log(2)), abs=1e-15)

    def test_perfect_hits_clamp_floor(self):
        got = float(bce_loss(np.array([1.0, 0.0]), [1, 0]).data)
        assert got == pytest.approx(-math.log(1 - 1e-7), rel=1e-9) and got > 0

    def test_symmetric(self, rng):
        p, y = rng.uniform(0.01, 0.99, 8), rng.integers(0, 2, 8)
        assert float(bce_loss(p, y).data) == pytest.approx(float(bce_loss(1 - p, 1 - y).data), rel=1e-12)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            bce_loss(np.array([0.5, 0.5]), [1])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=10))
    def test_non_negative(self, pairs):
        p, y = zip(*pairs)
        assert float(bce_loss(np.array(p), np.array(y)).data) >= 0


class TestNegativeWeight:
    def test_values(self):
        assert negative_weight(ORIGIN, ORIGIN)[()] == 1.0
        assert negative_weight(ORIGIN, at_distance(1.0)) == pytest.approx(float(mp.exp(-1)), abs=1e-12)
        assert negative_weight(ORIGIN, at_distance(1.0), theta=2.0) == pytest.approx(0.135335, abs=1e-6)
        assert negative_weight(ORIGIN, at_distance(1.0)) == pytest.approx(0.367879, abs=1e-6)

    def test_literal_similarity_mode(self):
        w = negative_weight(ORIGIN, at_distance(1.0), mode="literal-similarity")
        assert w == pytest.approx(math.exp(-math.exp(-1)))
        with pytest.raises(ValueError):
            negative_weight(ORIGIN, ORIGIN, mode="cosine")

    def test_closest_negative_weighs_most(self):
        negs = np.stack([at_distance(d) for d in (2.0, 0.3, 1.0)])
        assert np.argmax(negative_weight(ORIGIN, negs)) == 1

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 10), st.floats(0, 10))
    def test_strictly_decreasing(self, d1, d2):
        if abs(d1 - d2) < 1e-6:
            return
        w1, w2 = negative_weight(ORIGIN, at_distance(d1)), negative_weight(ORIGIN, at_distance(d2))
        assert (w1 > w2) == (d1 < d2)


class TestHvlgl:
    def test_no_negatives(self):
        assert float(hvlgl_video_loss(ORIGIN, ORIGIN, np.zeros((0, 3)), HvlglConfig()).data) == 0.0

    def test_twin_negative_gives_ln2(self):
        pos = at_distance(0.4)
        got = hvlgl_video_loss(ORIGIN, pos, pos[None, :], HvlglConfig())
        assert float(got.data) == pytest.approx(0.693147, abs=1e-6)

    def test_matches_direct_formula(self, rng):
        cfg = HvlglConfig(tau=0.3, theta=1.0)
        v = euclid_to_lorentz(rng.standard_normal(2)).data
        pos = euclid_to_lorentz(rng.standard_normal(2)).data
        negs = euclid_to_lorentz(rng.standard_normal((3, 2))).data

        def dist(a, b):
            return mp.acosh(max(mp.mpf(1), a[0] * b[0] - sum(a[i] * b[i] for i in range(1, 3))))

        s_pos = mp.exp(-dist(v, pos))
        s_neg = [mp.exp(-dist(pos, n)) * mp.exp(-dist(v, n)) for n in negs]
        denom = mp.exp(s_pos / 0.3) + sum(mp.exp(s / 0.3) for s in s_neg)
        want = -mp.log(mp.exp(s_pos / 0.3) / denom)
        assert float(hvlgl_video_loss(v, pos, negs, cfg).data) == pytest.approx(float(want), rel=1e-10)

    def test_decreases_as_positive_gets_closer(self):
        neg = at_distance(1.5)[None, :]
        losses = [float(hvlgl_video_loss(ORIGIN, at_distance(d), neg, HvlglConfig()).data) for d in (2.0, 1.0, 0.5, 0.0)]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_temperature_scaling_invariance(self, rng):
        # scaling every logit by c and tau by c leaves the softmax unchanged
        s = rng.uniform(0, 1, 4)
        for c in (0.5, 3.0):
            a = -s[0] / 0.3 + math.log(np.sum(np.exp(s / 0.3)))
            b = -(c * s[0]) / (0.3 * c) + math.log(np.sum(np.exp(c * s / (0.3 * c))))
            assert a == pytest.approx(b, rel=1e-13)

    def test_batch_mean(self, rng):
        V = euclid_to_lorentz(rng.standard_normal((3, 2))).data
        pos = [euclid_to_lorentz(rng.standard_normal(2)).data for _ in range(3)]
        negs = [euclid_to_lorentz(rng.standard_normal((n, 2))).data for n in (0, 1, 2)]
        cfg = HvlglConfig()
        each = [float(hvlgl_video_loss(V[i], pos[i], negs[i], cfg).data) for i in range(3)]
        assert float(hvlgl_loss(V, pos, negs, cfg).data) == pytest.approx(np.mean(each))
        assert float(hvlgl_loss(np.zeros((0, 3)), [], []).data) == 0.0

    @pytest.mark.parametrize("kw", [{"tau": 0.0}, {"psi": -1.0}, {"weighting_mode": "x"}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            HvlglConfig(**kw)


class TestTotal:
    def test_arithmetic(self):
        assert float(total_loss(0.6931, 0.5, 1e-4).data) == pytest.approx(0.50006931, abs=1e-12)
        assert float(total_loss(123.0, 0.5, 0.0).data) == 0.5

    def test_gradient_is_linear(self):
        h = ad.Tensor(2.0, requires_grad=True)
        b = ad.Tensor(3.0, requires_grad=True)
        ad.backward(total_loss(ad.square(h), ad.square(b), 0.1))
        assert h.grad == pytest.approx(0.1 * 4.0) and b.grad == pytest.approx(6.0)
