"""Model assembly: configuration, parameter initialisation and the forward pass."""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dual import CsaParams, DsiConfig, dsi_fuse
from .euclid import EuclidBranchParams, euclid_branch_forward
from .formats import FeatureSequence
from .fusion import FusionParams, fuse_modalities
from .hypergraph import HyperBranchParams, LshadConfig, TemporalConfig, hyper_branch_forward
from .lorentz import HyperbolicLinearParams, check_curvature, log_map_origin
from .objective import ClassifierParams, HvlglConfig, classify_logits, mil_k, scores_from_logits, topk_indices
from .optim import ParameterStore

__all__ = ["ModelConfig", "ForwardResult", "init_params", "forward", "bag_embedding"]

BRANCHES = ("dual", "euclid", "hyper")
SCHEDULES = ("cosine", "multistep", "constant")


@dataclass
class ModelConfig:
    """Flat configuration for the whole model and its training loop."""

    # dimensions
    visual_dim: int = 16
    audio_dim: int = 8
    text_dim: int = 8
    proj_visual: int = 16
    proj_audio: int = 8
    attn_dim: int = 8
    hidden: int = 16
    layers: int = 2
    head_dim: int = 16
    curvature: float = -1.0
    # energy-constrained graph
    beta: float = 0.8
    gamma: float = 1.2
    eta: float = math.e
    # cross-space attention
    lambda_thresh: float = 0.8
    alpha: float = 0.4
    literal_double_softmax: bool = False
    # hyperbolic linear layers
    hl_mode: str = "gated"
    hl_activation: str = "identity"
    hl_scale: float = 2.0
    dropout: float = 0.0
    # objective
    epsilon: float = 1.0
    tau: float = 0.3
    theta: float = 1.0
    psi: float = 1e-4
    weighting_mode: str = "distance"
    # ablation switches
    branches: str = "dual"
    use_dsi: bool = True
    use_hvlgl: bool = True
    # training
    seed: int = 0
    epochs: int = 20
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.0
    schedule: str = "cosine"
    milestones: tuple = (4, 8)
    init_scale: float = 1.0
    dsi_init_scale: float = 0.1

    def __post_init__(self):
        self.milestones = tuple(int(m) for m in self.milestones)
        check_curvature(self.curvature)
        for name in ("visual_dim", "proj_visual", "proj_audio", "attn_dim", "hidden", "head_dim", "text_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.audio_dim < 0 or self.layers < 0:
            raise ValueError("audio_dim and layers must be non-negative")
        if self.branches not in BRANCHES:
            raise ValueError(f"branches must be one of {BRANCHES}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        # sub-configs validate their own ranges
        self.lshad(), self.temporal(), self.dsi(), self.hvlgl()

    @property
    def fused_dim(self) -> int:
        return self.proj_visual + self.proj_audio

    @property
    def feature_dim(self) -> int:
        """Width of the per-snippet features handed to the classifier."""
        width = self.hidden if self.layers else self.fused_dim
        return 2 * width

    def lshad(self) -> LshadConfig:
        return LshadConfig(self.beta, self.gamma)

    def temporal(self) -> TemporalConfig:
        return TemporalConfig(self.eta)

    def dsi(self) -> DsiConfig:
        return DsiConfig(self.lambda_thresh, self.alpha, self.head_dim, self.literal_double_softmax)

    def hvlgl(self) -> HvlglConfig:
        return HvlglConfig(self.tau, self.theta, self.psi, self.weighting_mode)

    @property
    def effective_psi(self) -> float:
        return self.psi if self.use_hvlgl else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ForwardResult:
    scores: Tensor
    features: Tensor
    logits: Tensor | None = None
    euclid: Tensor | None = None
    hyper: Tensor | None = None
    trace: list = field(default_factory=list)


def _glorot(rng, fan_in, fan_out, scale):
    return rng.standard_normal((fan_in, fan_out)) * scale * math.sqrt(2.0 / (fan_in + fan_out))


class _Init:
    """One generator per parameter name, so adding or removing a block
    (an ablation) leaves every other block's initial values unchanged."""

    def __init__(self, seed: int):
        self.seed = seed

    def __call__(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode())])


def init_params(cfg: ModelConfig) -> ParameterStore:
    """Seeded initialisation; parameter names are stable across runs."""
    gen = _Init(cfg.seed)
    s = cfg.init_scale
    store = ParameterStore()

    def glorot(name, fan_in, fan_out, scale=s, transpose=False):
        w = _glorot(gen(name), fan_in, fan_out, scale)
        store.add(name, w.T.copy() if transpose else w)

    def normal(name, shape, scale):
        store.add(name, scale * gen(name).standard_normal(shape))

    pv, pa = cfg.proj_visual, cfg.proj_audio
    glorot("fuse.W_visual", cfg.visual_dim, pv)
    store.add("fuse.b_visual", np.zeros(pv))
    glorot("fuse.W_audio", cfg.audio_dim, pa)
    store.add("fuse.b_audio", np.zeros(pa))
    glorot("fuse.W_query", pa, cfg.attn_dim)
    glorot("fuse.W_key", pv, cfg.attn_dim)
    glorot("fuse.W_value", pv, pa)

    width = cfg.fused_dim
    if cfg.branches in ("dual", "euclid"):
        for stack in ("sem", "tmp"):
            w_in = width
            for i in range(cfg.layers):
                glorot(f"euclid.{stack}.{i}.W", w_in, cfg.hidden)
                store.add(f"euclid.{stack}.{i}.b", np.zeros(cfg.hidden))
                w_in = cfg.hidden
    if cfg.branches in ("dual", "hyper"):
        for stack in ("sem", "tmp"):
            n_in = width + 1
            for i in range(cfg.layers):
                glorot(f"hyper.{stack}.{i}.W", n_in, cfg.hidden, transpose=True)
                if cfg.hl_mode == "gated":
                    normal(f"hyper.{stack}.{i}.v", n_in, 0.1)
                    store.add(f"hyper.{stack}.{i}.b", np.zeros(cfg.hidden))
                    store.add(f"hyper.{stack}.{i}.b_prime", np.zeros(()))
                n_in = cfg.hidden + 1
    df = cfg.feature_dim
    if cfg.branches == "dual" and cfg.use_dsi:
        for direction in ("eh", "he"):
            # small query/key maps keep early similarities above the gate
            glorot(f"dsi.{direction}.Wq", df, cfg.head_dim, cfg.dsi_init_scale)
            glorot(f"dsi.{direction}.Wk", df, cfg.head_dim, cfg.dsi_init_scale)
            glorot(f"dsi.{direction}.Wv", df, df)
    normal("cls.W", df + 1, 0.1)
    store.add("cls.b", np.zeros(()))
    glorot("hvlgl.proj", df, cfg.text_dim)
    return store


def _fusion_params(store: ParameterStore) -> FusionParams:
    return FusionParams(*(store[f"fuse.{n}"] for n in ("W_visual", "b_visual", "W_audio", "b_audio", "W_query", "W_key", "W_value")))


def _hyper_params(store: ParameterStore, cfg: ModelConfig) -> HyperBranchParams:
    def layer(stack, i):
        pre = f"hyper.{stack}.{i}"
        extra = {}
        if cfg.hl_mode == "gated":
            extra = dict(v=store[pre + ".v"], b=store[pre + ".b"], b_prime=store[pre + ".b_prime"])
        return HyperbolicLinearParams(
            store[pre + ".W"],
            scale_lambda=cfg.hl_scale,
            activation=cfg.hl_activation,
            mode=cfg.hl_mode,
            dropout_rate=cfg.dropout,
            **extra,
        )

    return HyperBranchParams(
        [layer("sem", i) for i in range(cfg.layers)], [layer("tmp", i) for i in range(cfg.layers)]
    )


def _euclid_params(store: ParameterStore, cfg: ModelConfig) -> EuclidBranchParams:
    def stack(name):
        return [(store[f"euclid.{name}.{i}.W"], store[f"euclid.{name}.{i}.b"]) for i in range(cfg.layers)]

    return EuclidBranchParams(stack("sem"), stack("tmp"))


def _csa(store: ParameterStore, direction: str) -> CsaParams:
    return CsaParams(*(store[f"dsi.{direction}.{n}"] for n in ("Wq", "Wk", "Wv")))


def forward(
    seq: FeatureSequence,
    store: ParameterStore,
    cfg: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardResult:
    """Per-snippet violence scores for one video, with intermediates."""
    k = cfg.curvature
    fused = fuse_modalities(seq, _fusion_params(store))
    trace: list = []
    v_e = v_h = None
    if cfg.branches in ("dual", "euclid"):
        v_e = euclid_branch_forward(fused, _euclid_params(store, cfg), cfg.temporal())
    if cfg.branches in ("dual", "hyper"):
        on_manifold = hyper_branch_forward(
            fused, _hyper_params(store, cfg), cfg.lshad(), cfg.temporal(), k, training=training, rng=rng, trace=trace
        )
        v_h = log_map_origin(on_manifold, k)[..., 1:]
    if cfg.branches == "euclid":
        features = v_e
    elif cfg.branches == "hyper":
        features = v_h
    elif cfg.use_dsi:
        features = dsi_fuse(v_e, v_h, _csa(store, "eh"), _csa(store, "he"), cfg.dsi(), k)
    else:
        features = ad.maximum(v_e, v_h)
    logits = classify_logits(features, ClassifierParams(store["cls.W"], store["cls.b"], cfg.epsilon), k)
    scores = scores_from_logits(logits)
    return ForwardResult(scores, features, logits, v_e, v_h, trace)


def bag_embedding(result: ForwardResult, store: ParameterStore) -> Tensor:
    """Mean of the features of the top-k scoring snippets, projected to text width."""
    T = result.logits.shape[0]
    # rank by logit: clipped scores can tie where the logits do not
    idx = ad.decision(topk_indices(result.logits.data, mil_k(T)))
    return result.features[idx].mean(axis=0) @ store["hvlgl.proj"]
