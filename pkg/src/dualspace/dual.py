"""Cross-space attention between the Euclidean and hyperbolic branches."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .lorentz import DEFAULT_K, euclid_to_lorentz, pairwise_distance

__all__ = ["DsiConfig", "CsaParams", "cross_space_attention", "dsi_fuse"]


@dataclass
class DsiConfig:
    lambda_thresh: float = 0.8
    alpha: float = 0.4
    head_dim: int = 16
    # apply the similarity softmax and the scaled softmax in sequence
    literal_double_softmax: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lambda_thresh <= 1.0:
            raise ValueError("lambda_thresh must lie in [0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.head_dim < 1:
            raise ValueError("head_dim must be positive")


@dataclass
class CsaParams:
    """Query projection for the target space, key/value projections for the source."""

    Wq: Tensor
    Wk: Tensor
    Wv: Tensor

    def __post_init__(self):
        self.Wq, self.Wk, self.Wv = as_tensor(self.Wq), as_tensor(self.Wk), as_tensor(self.Wv)
        if self.Wq.shape[1] != self.Wk.shape[1]:
            raise ValueError("query and key projections must share a width")


def attention_weights(target, source, p: CsaParams, cfg: DsiConfig, k: float = DEFAULT_K) -> Tensor:
    """T_target x T_source attention map.

    Queries and keys are lifted onto the manifold, scored by Lorentz
    similarity, and scores at or below ``lambda_thresh`` are dropped.
    Surviving scores are softmax-normalised after the 1/sqrt(d) scaling;
    a row with no survivor is all zeros.
    """
    target, source = as_tensor(target), as_tensor(source)
    q = euclid_to_lorentz(target @ p.Wq, k)
    key = euclid_to_lorentz(source @ p.Wk, k)
    score = ad.exp(-pairwise_distance(q, key, k=k))
    keep = ad.decision(score.data > cfg.lambda_thresh)
    scale = 1.0 / math.sqrt(cfg.head_dim)
    if cfg.literal_double_softmax:
        first = ad.softmax(ad.where_mask(score, keep), axis=-1)
        return ad.softmax(first * scale, axis=-1)
    return ad.softmax(score * scale, axis=-1, mask=keep)


def cross_space_attention(target, source, p: CsaParams, cfg: DsiConfig, k: float = DEFAULT_K) -> Tensor:
    """Attend from ``target`` rows to value projections of ``source`` rows."""
    target, source = as_tensor(target), as_tensor(source)
    if target.shape[0] != source.shape[0]:
        raise ValueError("target and source must have the same length")
    return attention_weights(target, source, p, cfg, k) @ (source @ p.Wv)


def dsi_fuse(V_E, V_H, p_eh: CsaParams, p_he: CsaParams, cfg: DsiConfig, k: float = DEFAULT_K) -> Tensor:
    """Mix the two spaces with residual cross attention and max-pool the pair.

    ``V_H`` is given in tangent coordinates at the origin (spatial part of the
    log map) so both inputs are T x D_F matrices.
    """
    V_E, V_H = as_tensor(V_E), as_tensor(V_H)
    if V_E.shape != V_H.shape:
        raise ValueError(f"branch outputs differ in shape: {V_E.shape} vs {V_H.shape}")
    if cfg.alpha == 0:
        e2, h2 = V_E, V_H
    else:
        e2 = cross_space_attention(V_E, V_H, p_eh, cfg, k) * cfg.alpha + V_E
        h2 = cross_space_attention(V_H, e2, p_he, cfg, k) * cfg.alpha + V_H
    return ad.maximum(e2, h2)
