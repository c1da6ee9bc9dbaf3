import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualspace.gradcheck import gradcheck
from dualspace.hypergraph import (
    HyperBranchParams,
    LshadConfig,
    MessageGraph,
    TemporalConfig,
    apply_lshad_rule,
    dirichlet_energy,
    hegcn_layer,
    hyper_branch_forward,
    lshad_threshold,
    message_aggregate,
    semantic_adjacency,
    temporal_adjacency,
    temporal_hgcn_layer,
)
from dualspace.lorentz import HyperbolicLinearParams, euclid_to_lorentz, manifold_residual
from dualspace.optim import ParameterStore

from .conftest import random_points


def point_at_distance(d):
    # (cosh d, sinh d, 0) is at geodesic distance d from the origin
    return np.array([[1.0, 0.0, 0.0], [math.cosh(d), math.sinh(d), 0.0]])


def layer_params(rng, n_in, n_out, scale=1.0):
    return HyperbolicLinearParams(
        W=scale * rng.standard_normal((n_out, n_in)) / math.sqrt(n_in),
        v=rng.standard_normal(n_in) * 0.1,
        b=rng.standard_normal(n_out) * 0.1,
        b_prime=0.0,
    )


class TestDirichletEnergy:
    def test_identical_nodes(self):
        x = np.tile([1.0, 0.0, 0.0], (4, 1))
        assert float(dirichlet_energy(x).data) == 0.0

    def test_two_nodes_at_unit_distance(self):
        assert float(dirichlet_energy(point_at_distance(1.0)).data) == pytest.approx(1.0, abs=1e-9)

    def test_two_nodes_at_arcosh_two(self):
        d = float(mp.acosh(2))
        want = float(mp.acosh(2) ** 2)
        assert float(dirichlet_energy(point_at_distance(d)).data) == pytest.approx(want, abs=1e-9)
        assert want == pytest.approx(1.734378, abs=1e-6)

    def test_matches_brute_force_sum(self, rng):
        x = random_points(rng, 5, 3)
        brute = 0.0
        for i in range(5):
            for j in range(5):
                inner = -x[i, 0] * x[j, 0] + x[i, 1:] @ x[j, 1:]
                brute += float(mp.acosh(max(mp.mpf(1), -mp.mpf(inner)))) ** 2
        assert float(dirichlet_energy(x).data) == pytest.approx(brute / 2, rel=1e-7)


class TestLshadThreshold:
    @pytest.mark.parametrize(
        "energy,layer,z",
        [(0.0, 1, 0.6), (0.0, 2, 1.4), (1e300, 1, -0.4)],
    )
    def test_closed_form(self, energy, layer, z):
        want = float(1 / (1 + mp.exp(-mp.mpf(z))))
        assert lshad_threshold(energy, layer) == pytest.approx(want, abs=1e-12)

    def test_frozen_values(self):
        assert lshad_threshold(0.0, 1) == pytest.approx(0.645656, abs=1e-6)
        assert lshad_threshold(0.0, 2) == pytest.approx(0.802184, abs=1e-6)
        assert lshad_threshold(1e300, 1) == pytest.approx(0.401312, abs=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1e6), st.floats(0, 1e6), st.integers(1, 20), st.integers(1, 20))
    def test_monotone(self, e1, e2, k1, k2):
        lo_e, hi_e = sorted((e1, e2))
        lo_k, hi_k = sorted((k1, k2))
        assert lshad_threshold(hi_e, lo_k) <= lshad_threshold(lo_e, lo_k)
        assert lshad_threshold(lo_e, hi_k) >= lshad_threshold(lo_e, lo_k)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            lshad_threshold(-1.0, 1)
        with pytest.raises(ValueError):
            lshad_threshold(0.0, 0)
        with pytest.raises(ValueError):
            LshadConfig(beta=math.inf)


class TestSemanticAdjacency:
    def test_identical_nodes_uniform(self):
        g = semantic_adjacency(np.tile([1.0, 0.0, 0.0], (4, 1)))
        np.testing.assert_allclose(g.data, np.full((4, 4), 0.25))

    def test_single_node(self):
        np.testing.assert_allclose(semantic_adjacency(point_at_distance(0.0)[:1]).data, [[1.0]])

    def test_unit_distance_pair(self):
        row = semantic_adjacency(point_at_distance(1.0)).data[0]
        e = math.exp(-1)
        np.testing.assert_allclose(row, [math.e / (math.e + math.exp(e)), math.exp(e) / (math.e + math.exp(e))], rtol=1e-9)
        np.testing.assert_allclose(np.round(row, 3), [0.653, 0.347])

    def test_rows_sum_to_one(self, rng):
        g = semantic_adjacency(random_points(rng, 7, 4))
        np.testing.assert_allclose(g.data.sum(axis=1), 1.0)
        assert np.all(g.data >= 0)
        np.testing.assert_allclose(np.diag(g.similarity), 1.0)


class TestLshadRule:
    def test_example(self):
        g = MessageGraph(np.array([[0.7, 0.3], [0.4, 0.6]]))
        np.testing.assert_array_equal(apply_lshad_rule(g, 0.5).data, [[0.7, 0.0], [0.0, 0.6]])

    def test_zero_threshold_keeps_all(self, rng):
        w = rng.uniform(0, 1, (4, 4))
        np.testing.assert_array_equal(apply_lshad_rule(MessageGraph(w), 0.0).data, w)

    def test_all_below(self):
        assert not apply_lshad_rule(MessageGraph(np.full((3, 3), 0.2)), 0.5).data.any()

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.99))
    def test_idempotent_and_zeros_stay_zero(self, seed, thr):
        w = np.random.default_rng(seed).uniform(0, 1, (5, 5))
        once = apply_lshad_rule(MessageGraph(w), thr)
        twice = apply_lshad_rule(once, thr)
        np.testing.assert_array_equal(once.data, twice.data)
        assert np.all(once.data[w < thr] == 0)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            MessageGraph(np.eye(2), kind="spatial")


class TestTemporalAdjacency:
    def test_values(self):
        w = temporal_adjacency(40).data
        np.testing.assert_array_equal(np.diag(w), 1.0)
        assert w[0, 1] == pytest.approx(float(mp.exp(-1 / mp.e)), abs=1e-15)
        assert w[0, 1] == pytest.approx(0.692201, abs=1e-6)
        np.testing.assert_array_equal(w, w.T)
        assert 0 < w[0, 39] < 1e-6

    def test_eta(self):
        assert temporal_adjacency(3, TemporalConfig(eta=1.0)).data[0, 2] == pytest.approx(math.exp(-2))
        with pytest.raises(ValueError):
            TemporalConfig(eta=0.0)
        with pytest.raises(ValueError):
            temporal_adjacency(0)


class TestMessageAggregate:
    def test_centroid_example(self):
        x = np.array([[math.sqrt(2), 1, 0], [math.sqrt(2), 0, 1]])
        out = message_aggregate(MessageGraph(np.ones((2, 2))), x).data
        s = mp.matrix([2 * mp.sqrt(2), 1, 1]) / mp.sqrt(6)
        np.testing.assert_allclose(out[0], [float(v) for v in s], atol=1e-12)
        np.testing.assert_allclose(out[0], [1.154701, 0.408248, 0.408248], atol=1e-6)

    def test_single_neighbour_returns_point(self, rng):
        x = random_points(rng, 3, 4)
        np.testing.assert_allclose(message_aggregate(MessageGraph(np.eye(3)), x).data, x, atol=1e-12)

    def test_empty_row_keeps_own_feature(self, rng):
        x = random_points(rng, 3, 2)
        w = np.array([[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
        out = message_aggregate(MessageGraph(w), x).data
        np.testing.assert_allclose(out[0], x[0], atol=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            message_aggregate(MessageGraph(np.eye(2)), random_points(rng, 3, 2))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_on_manifold_and_equivariant(self, seed):
        rng = np.random.default_rng(seed)
        x = random_points(rng, 6, 3, scale=2.0)
        w = rng.uniform(0, 1, (6, 6)) * (rng.random((6, 6)) > 0.3)
        out = message_aggregate(MessageGraph(w), x).data
        assert np.max(np.abs(manifold_residual(out))) < 1e-7
        perm = rng.permutation(6)
        permuted = message_aggregate(MessageGraph(w[perm][:, perm]), x[perm]).data
        np.testing.assert_allclose(permuted, out[perm], rtol=1e-10, atol=1e-10)


class TestLayers:
    def test_identical_nodes_stay_identical(self, rng):
        x = np.tile(random_points(rng, 1, 3), (5, 1))
        p = layer_params(rng, 4, 3)
        out = hegcn_layer(x, 1, p).data
        np.testing.assert_allclose(out, np.tile(out[0], (5, 1)), atol=1e-12)
        out_t = temporal_hgcn_layer(x, p).data
        np.testing.assert_allclose(out_t, np.tile(out_t[0], (5, 1)), atol=1e-12)

    def test_threshold_grows_with_depth(self, rng):
        x = random_points(rng, 8, 3)
        p = layer_params(rng, 4, 3)
        traces = []
        for layer in (1, 2, 3):
            hegcn_layer(x, layer, p, trace=traces)
        thresholds = [t.threshold for t in traces]
        assert thresholds == sorted(thresholds) and thresholds[0] < thresholds[-1]

    def test_trace_contents(self, rng):
        trace = []
        out = hegcn_layer(random_points(rng, 10, 4), 1, layer_params(rng, 5, 4), trace=trace)
        t = trace[0]
        assert t.energy_post == pytest.approx(float(dirichlet_energy(out).data))
        assert t.threshold == pytest.approx(lshad_threshold(t.energy_pre, 1))
        assert 0 < t.kept_fraction <= 1

    def test_temporal_single_snippet_is_linear_only(self, rng):
        from dualspace.lorentz import hyperbolic_linear

        x = random_points(rng, 1, 3)
        p = layer_params(rng, 4, 2)
        np.testing.assert_array_equal(temporal_hgcn_layer(x, p).data, hyperbolic_linear(x, p).data)

    def test_outputs_on_manifold(self, rng):
        x = random_points(rng, 12, 5, scale=3.0)
        p = layer_params(rng, 6, 4, scale=3.0)
        for out in (hegcn_layer(x, 2, p).data, temporal_hgcn_layer(x, p).data):
            assert np.max(np.abs(manifold_residual(out))) < 1e-7


class TestBranch:
    def test_no_layers_duplicates_lift(self, rng):
        X = rng.standard_normal((5, 3))
        out = hyper_branch_forward(X, HyperBranchParams()).data
        lifted = euclid_to_lorentz(X).data
        np.testing.assert_allclose(out[:, 1:4], lifted[:, 1:], atol=1e-12)
        np.testing.assert_allclose(out[:, 4:], lifted[:, 1:], atol=1e-12)
        assert out.shape == (5, 7)

    def test_length_preserved_and_gradcheck(self, rng):
        store = ParameterStore()
        specs = {}
        for name in ("sem.1", "sem.2", "tmp.1", "tmp.2"):
            for part, shape in (("W", (3, 4)), ("v", (4,)), ("b", (3,)), ("b_prime", ())):
                specs[f"{name}.{part}"] = store.add(f"{name}.{part}", 0.5 * rng.standard_normal(shape))
        X = rng.standard_normal((6, 3))

        def params(prefix):
            return [
                HyperbolicLinearParams(
                    W=specs[f"{prefix}.{i}.W"], v=specs[f"{prefix}.{i}.v"], b=specs[f"{prefix}.{i}.b"],
                    b_prime=specs[f"{prefix}.{i}.b_prime"],
                )
                for i in (1, 2)
            ]

        def loss():
            out = hyper_branch_forward(X, HyperBranchParams(params("sem"), params("tmp")))
            assert out.shape == (6, 7)
            return (out[:, 1:] * np.linspace(-1, 1, 6)).sum()

        report = gradcheck(loss, store)
        assert report.passed, report.summary()
