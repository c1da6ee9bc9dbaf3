from dataclasses import replace

import numpy as np
import pytest

from dualspace import autodiff as ad
from dualspace.formats import FeatureSequence
from dualspace.model import ModelConfig, bag_embedding, forward, init_params
from dualspace.training import GRADCHECK_DIMS

SMALL = ModelConfig(**GRADCHECK_DIMS)


def video(rng, T=9, cfg=SMALL, audio=True):
    a = rng.standard_normal((T, cfg.audio_dim)) if audio else None
    return FeatureSequence("v", rng.standard_normal((T, cfg.visual_dim)), a)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [{"hidden": 0}, {"layers": -1}, {"branches": "both"}, {"schedule": "step"}, {"lr": 0.0},
         {"alpha": -1.0}, {"tau": 0.0}, {"curvature": 0.5}, {"batch_size": 0}],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ModelConfig(**kw)

    def test_dict_round_trip(self):
        cfg = ModelConfig(lr=0.02, milestones=(3,))
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError):
            ModelConfig.from_dict({"nope": 1})

    def test_defaults_mirror_published_constants(self):
        cfg = ModelConfig()
        assert (cfg.beta, cfg.gamma, cfg.lambda_thresh, cfg.alpha) == (0.8, 1.2, 0.8, 0.4)
        assert (cfg.tau, cfg.theta, cfg.psi) == (0.3, 1.0, 1e-4)
        assert cfg.eta == pytest.approx(np.e)

    def test_psi_switch(self):
        assert ModelConfig(psi=0.5, use_hvlgl=False).effective_psi == 0.0


class TestInit:
    def test_deterministic_and_named(self):
        a, b = init_params(SMALL), init_params(SMALL)
        assert a.names() == b.names()
        for n in a.names():
            assert a[n].data.tobytes() == b[n].data.tobytes()

    def test_variants_share_common_parameters(self):
        full = init_params(SMALL)
        euclid = init_params(replace(SMALL, branches="euclid"))
        for n in euclid.names():
            np.testing.assert_array_equal(euclid[n].data, full[n].data)

    def test_seed_changes_values(self):
        a, b = init_params(SMALL), init_params(replace(SMALL, seed=1))
        assert not np.array_equal(a["cls.W"].data, b["cls.W"].data)


class TestForward:
    @pytest.mark.parametrize("branches,use_dsi", [("dual", True), ("dual", False), ("euclid", True), ("hyper", True)])
    def test_scores_shape_and_range(self, rng, branches, use_dsi):
        cfg = replace(SMALL, branches=branches, use_dsi=use_dsi)
        res = forward(video(rng), init_params(cfg), cfg)
        assert res.scores.shape == (9,)
        assert np.all((res.scores.data > 0) & (res.scores.data < 1))
        assert res.features.shape == (9, cfg.feature_dim)

    def test_no_audio_and_single_snippet(self, rng):
        store = init_params(SMALL)
        assert forward(video(rng, audio=False), store, SMALL).scores.shape == (9,)
        assert forward(video(rng, T=1), store, SMALL).scores.shape == (1,)

    def test_zero_layers(self, rng):
        cfg = replace(SMALL, layers=0)
        res = forward(video(rng), init_params(cfg), cfg)
        assert res.features.shape == (9, 2 * cfg.fused_dim)

    def test_deterministic(self, rng):
        seq = video(rng)
        store = init_params(SMALL)
        a, b = forward(seq, store, SMALL).scores.data, forward(seq, store, SMALL).scores.data
        assert a.tobytes() == b.tobytes()

    def test_trace_has_one_entry_per_semantic_layer(self, rng):
        res = forward(video(rng), init_params(SMALL), SMALL)
        assert len(res.trace) == SMALL.layers

    def test_bag_embedding(self, rng):
        store = init_params(SMALL)
        res = forward(video(rng, T=20), store, SMALL)
        top = np.argsort(-res.scores.data, kind="stable")[:2]
        want = res.features.data[top].mean(axis=0) @ store["hvlgl.proj"].data
        np.testing.assert_allclose(bag_embedding(res, store).data, want)
        assert want.shape == (SMALL.text_dim,)

    def test_width_mismatch(self, rng):
        with pytest.raises(ValueError):
            forward(FeatureSequence("v", rng.standard_normal((4, 3))), init_params(SMALL), SMALL)

    def test_gradients_reach_every_parameter(self, rng):
        store = init_params(replace(SMALL, lambda_thresh=0.0))
        cfg = replace(SMALL, lambda_thresh=0.0)
        res = forward(video(rng), store, cfg)
        ad.backward(res.scores.sum() + bag_embedding(res, store).sum())
        silent = [n for n in store.names() if not np.any(store[n].grad)]
        assert silent == []
