"""MIL training loop and frame-level evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .formats import DataError, FeatureSequence, TextBank
from .lorentz import euclid_to_lorentz
from .metrics import average_precision, broadcast_to_frames, roc_auc
from .model import ModelConfig, bag_embedding, forward, init_params
from .objective import bce_from_log_probs, hvlgl_loss, mil_log_probs, total_loss
from .optim import AdamState, ParameterStore, adam_step, cosine_lr, multistep_lr

__all__ = ["TrainingError", "EpochLog", "EvalResult", "batch_loss", "train", "evaluate", "LOG_COLUMNS"]

LOG_COLUMNS = ("epoch", "bce", "hvlgl", "total", "AP", "AUC")


class TrainingError(RuntimeError):
    """Raised when the loss or its gradient stops being finite."""

    def __init__(self, message: str, epoch: int, step: int):
        super().__init__(f"{message} (epoch {epoch}, step {step})")
        self.epoch, self.step = epoch, step


@dataclass
class EpochLog:
    epoch: int
    bce: float
    hvlgl: float
    total: float
    ap: float
    auc: float

    def row(self) -> list:
        return [self.epoch, self.bce, self.hvlgl, self.total, self.ap, self.auc]


@dataclass
class EvalResult:
    ap: float
    auc: float
    scores: dict = field(default_factory=dict)  # video_id -> snippet scores


@dataclass
class TrainResult:
    store: ParameterStore
    log: list


def _lifted_text(bank: TextBank, video_id: str, k: float):
    entry = bank.get(video_id)
    if entry is None or entry.positive is None:
        return None
    pos = euclid_to_lorentz(entry.positive, k).data
    negs = bank.negatives_matrix(video_id)
    negs = euclid_to_lorentz(negs, k).data if len(negs) else np.zeros((0, pos.shape[0]))
    return pos, negs


def batch_loss(
    videos: list,
    store: ParameterStore,
    cfg: ModelConfig,
    bank: TextBank | None = None,
    psi: float | None = None,
    training: bool = True,
    rng: np.random.Generator | None = None,
):
    """Return ``(total, bce, hvlgl)`` for one batch of videos."""
    k = cfg.curvature
    psi = cfg.effective_psi if psi is None else psi
    log_p, log_not_p, labels = [], [], []
    bags, positives, negatives = [], [], []
    for seq in videos:
        result = forward(seq, store, cfg, training=training, rng=rng)
        lp, lq = mil_log_probs(result.logits)
        log_p.append(lp)
        log_not_p.append(lq)
        labels.append(float(seq.video_label))
        text = _lifted_text(bank, seq.video_id, k) if bank is not None else None
        if text is not None:
            bags.append(euclid_to_lorentz(bag_embedding(result, store), k))
            positives.append(text[0])
            negatives.append(text[1])
    bce = bce_from_log_probs(ad.stack(log_p), ad.stack(log_not_p), np.array(labels))
    hv = hvlgl_loss(ad.stack(bags), positives, negatives, cfg.hvlgl(), k) if bags else Tensor(0.0)
    return total_loss(hv, bce, psi), bce, hv


def _lr_at(cfg: ModelConfig, epoch: int, step: int, total_steps: int) -> float:
    if cfg.schedule == "cosine":
        return cosine_lr(cfg.lr, step, total_steps)
    if cfg.schedule == "multistep":
        return multistep_lr(cfg.lr, epoch, cfg.milestones)
    return cfg.lr


def evaluate(videos: list, store: ParameterStore, cfg: ModelConfig) -> EvalResult:
    """Frame-level AP and AUC over all frames of ``videos``, pooled."""
    if not videos:
        raise DataError("nothing to evaluate")
    all_scores, all_labels, per_video = [], [], {}
    with ad.no_grad():
        for seq in videos:
            if seq.frame_labels is None:
                raise DataError(f"{seq.video_id}: no frame labels to evaluate against")
            s = forward(seq, store, cfg).scores.data
            per_video[seq.video_id] = s
            all_scores.append(broadcast_to_frames(s, len(seq.frame_labels)))
            all_labels.append(seq.frame_labels)
    scores, labels = np.concatenate(all_scores), np.concatenate(all_labels)
    ap = average_precision(scores, labels) if labels.any() else math.nan
    auc = roc_auc(scores, labels) if 0 < labels.sum() < labels.size else math.nan
    return EvalResult(ap, auc, per_video)


def train(
    train_videos: list,
    cfg: ModelConfig,
    bank: TextBank | None = None,
    eval_videos: list | None = None,
    store: ParameterStore | None = None,
    progress=None,
) -> TrainResult:
    """Train for ``cfg.epochs`` epochs; one log row per epoch.

    Batches are drawn from a seeded permutation each epoch, so identical
    seeds and configs reproduce the run bit for bit.
    """
    if not train_videos:
        raise DataError("empty training set")
    store = store if store is not None else init_params(cfg)
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 1)
    n = len(train_videos)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    log, step = [], 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, cfg.batch_size):
            batch = [train_videos[i] for i in order[start : start + cfg.batch_size]]
            try:
                total, bce, hv = batch_loss(batch, store, cfg, bank, rng=rng)
                if not np.isfinite(total.data):
                    raise NonFiniteError("total_loss")
                ad.backward(total)
            except NonFiniteError as err:
                raise TrainingError(f"non-finite value: {err}", epoch, step) from err
            sums += np.array([float(bce.data), float(hv.data), float(total.data)]) * len(batch)
            adam_step(store, state, _lr_at(cfg, epoch, step, total_steps))
            step += 1
        bce_m, hv_m, tot_m = sums / n
        ev = evaluate(eval_videos, store, cfg) if eval_videos else EvalResult(math.nan, math.nan)
        row = EpochLog(epoch, float(bce_m), float(hv_m), float(tot_m), ev.ap, ev.auc)
        log.append(row)
        if progress is not None:
            progress(row)
    return TrainResult(store, log)


GRADCHECK_DIMS = dict(
    visual_dim=6, audio_dim=3, text_dim=4, proj_visual=4, proj_audio=2, attn_dim=2, hidden=4, head_dim=4
)


def gradcheck_model(cfg: ModelConfig | None = None, T: int = 8, h: float = 1e-4, tol: float = 1e-4):
    """Finite-difference check of the full training loss.

    Uses two videos of ``T`` snippets (one violent, one normal), each with a
    positive and two negative texts.  Widths are shrunk to the check size;
    every other setting comes from ``cfg``.  The text term is weighted 1 so
    its gradient is not drowned by the classification term.
    """
    from dataclasses import replace

    from .gradcheck import gradcheck

    base = cfg or ModelConfig()
    cfg = replace(base, **GRADCHECK_DIMS, dropout=0.0)
    rng = np.random.default_rng(base.seed)
    videos, bank = [], TextBank(cfg.text_dim)
    for i, label in enumerate((1, 0)):
        vid = f"check{i}"
        labels = np.zeros(16 * T, dtype=np.int8)
        if label:
            labels[16 * (T // 4) : 16 * (T // 2 + 1)] = 1
        videos.append(
            FeatureSequence(
                vid,
                rng.standard_normal((T, cfg.visual_dim)),
                rng.standard_normal((T, cfg.audio_dim)),
                labels,
                label,
            )
        )
        bank.add(vid, rng.standard_normal(cfg.text_dim))
        bank.add(vid, rng.standard_normal(cfg.text_dim), "scene-modified")
        bank.add(vid, rng.standard_normal(cfg.text_dim), "action-modified")
    store = init_params(cfg)

    def loss():
        return batch_loss(videos, store, cfg, bank, psi=1.0, training=False)[0]

    return gradcheck(loss, store, h=h, tol=tol)
