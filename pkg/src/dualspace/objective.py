"""Hyperbolic classifier, MIL pooling and the training losses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .lorentz import DEFAULT_K, euclid_to_lorentz, geodesic_distance, lorentz_inner

__all__ = [
    "ClassifierParams",
    "HvlglConfig",
    "classify",
    "classify_logits",
    "scores_from_logits",
    "mil_k",
    "topk_indices",
    "mil_video_score",
    "mil_log_probs",
    "bce_loss",
    "bce_from_log_probs",
    "negative_weight",
    "hvlgl_video_loss",
    "hvlgl_loss",
    "total_loss",
]

PRED_CLAMP = 1e-7
# sigmoid(36) is the largest double below 1; wider logits would round to 0 or 1
LOGIT_BOUND = 36.0


@dataclass
class ClassifierParams:
    W: Tensor
    b: Tensor
    epsilon: float = 1.0


@dataclass
class HvlglConfig:
    tau: float = 0.3
    theta: float = 1.0
    psi: float = 1e-4
    weighting_mode: str = "distance"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.psi < 0:
            raise ValueError("psi must be non-negative")
        if self.weighting_mode not in ("distance", "literal-similarity"):
            raise ValueError(f"unknown weighting mode {self.weighting_mode!r}")


def classify_logits(V_F, p: ClassifierParams, k: float = DEFAULT_K) -> Tensor:
    """``eps + eps * <lift(V_F), W>_L + b`` per row."""
    z = euclid_to_lorentz(V_F, k)
    return lorentz_inner(z, p.W) * p.epsilon + p.epsilon + p.b


def scores_from_logits(logits) -> Tensor:
    """Sigmoid of logits clipped to +-36, so scores stay strictly inside (0, 1).

    Training goes through :func:`mil_log_probs` on the raw logits instead.
    """
    return ad.sigmoid(ad.clip(logits, -LOGIT_BOUND, LOGIT_BOUND))


def classify(V_F, p: ClassifierParams, k: float = DEFAULT_K) -> Tensor:
    """``sigmoid(eps + eps * <lift(V_F), W>_L + b)`` per row."""
    return scores_from_logits(classify_logits(V_F, p, k))


def mil_k(T: int) -> int:
    return T // 16 + 1


def topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores; ties go to the lower index."""
    return np.argsort(-np.asarray(scores), kind="stable")[:k]


def mil_video_score(snippet_scores) -> Tensor:
    """Mean of the ``floor(T/16) + 1`` largest snippet scores."""
    s = as_tensor(snippet_scores)
    if s.ndim != 1 or s.shape[0] < 1:
        raise ValueError("snippet scores must be a non-empty vector")
    idx = ad.decision(topk_indices(s.data, mil_k(s.shape[0])))
    return s[idx].mean()


def mil_log_probs(snippet_logits) -> tuple[Tensor, Tensor]:
    """``(log s, log(1 - s))`` for the k-max video score ``s`` of sigmoid scores.

    Computed as ``logsumexp(log sigmoid(+-z_topk)) - log k`` so neither term
    underflows and the gradient survives saturated logits.
    """
    z = as_tensor(snippet_logits)
    if z.ndim != 1 or z.shape[0] < 1:
        raise ValueError("snippet logits must be a non-empty vector")
    k = mil_k(z.shape[0])
    top = z[ad.decision(topk_indices(z.data, k))]
    log_k = math.log(k)
    return ad.logsumexp(ad.log_sigmoid(top)) - log_k, ad.logsumexp(ad.log_sigmoid(-top)) - log_k


def bce_from_log_probs(log_p, log_not_p, labels) -> Tensor:
    """Mean BCE from log-probabilities.

    Equals :func:`bce_loss` wherever predictions lie inside the clamp range;
    beyond it the loss keeps growing (and keeps a gradient) instead of
    flattening out.
    """
    log_p, log_not_p = as_tensor(log_p), as_tensor(log_not_p)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != log_p.shape or y.shape != log_not_p.shape:
        raise ValueError(f"labels {y.shape} do not match predictions {log_p.shape}")
    return -(log_p * y + log_not_p * (1.0 - y)).mean()


def bce_loss(predictions, labels) -> Tensor:
    """Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    p = ad.clip(as_tensor(predictions), PRED_CLAMP, 1.0 - PRED_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"labels {y.shape} do not match predictions {p.shape}")
    ll = ad.log(p) * y + ad.log(1.0 - p) * (1.0 - y)
    return -ll.mean()


def negative_weight(t_pos, t_neg, theta: float = 1.0, mode: str = "distance", k: float = DEFAULT_K) -> np.ndarray:
    """Hardness weight of each negative text given its positive.

    ``distance`` mode: ``exp(-theta * d(t+, t-))``, closer negatives weigh more.
    ``literal-similarity`` mode: ``exp(-theta * Ls(t+, t-))``.
    """
    d = geodesic_distance(t_pos, t_neg, k).data
    if mode == "distance":
        return np.exp(-theta * d)
    if mode == "literal-similarity":
        return np.exp(-theta * np.exp(-d))
    raise ValueError(f"unknown weighting mode {mode!r}")


def hvlgl_video_loss(v, t_pos, t_negs, cfg: HvlglConfig, k: float = DEFAULT_K) -> Tensor:
    """Contrastive loss of one visual point against its text bank entry.

    ``v`` and ``t_pos`` are manifold points, ``t_negs`` an (N, n+1) array.
    With no negatives the loss is exactly 0.
    """
    t_negs = np.asarray(t_negs, dtype=np.float64).reshape(-1, np.shape(t_pos)[-1])
    if t_negs.shape[0] == 0:
        return Tensor(0.0)
    v = as_tensor(v)
    s_pos = ad.exp(-geodesic_distance(v, t_pos, k))
    w = negative_weight(t_pos, t_negs, cfg.theta, cfg.weighting_mode, k)
    s_neg = ad.exp(-geodesic_distance(v, t_negs, k)) * w
    logits = ad.concat([s_pos.reshape(1), s_neg], axis=0) * (1.0 / cfg.tau)
    shift = float(np.max(logits.data))
    lse = ad.log(ad.exp(logits - shift).sum()) + shift
    return lse - logits[0]


def hvlgl_loss(visual, positives, negatives, cfg: HvlglConfig | None = None, k: float = DEFAULT_K) -> Tensor:
    """Batch mean of :func:`hvlgl_video_loss`.

    ``visual`` holds one manifold point per video (rows), ``positives`` the
    matching lifted positive texts and ``negatives`` a list of (N_i, n+1)
    arrays.  An empty batch gives 0.
    """
    cfg = cfg or HvlglConfig()
    visual = as_tensor(visual)
    n = visual.shape[0]
    if n == 0:
        return Tensor(0.0)
    terms = [hvlgl_video_loss(visual[i], positives[i], negatives[i], cfg, k) for i in range(n)]
    return ad.stack(terms).mean()


def total_loss(hvlgl, bce, psi: float) -> Tensor:
    return as_tensor(hvlgl) * psi + bce
