"""Audio-visual fusion ahead of the two branches."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .formats import FeatureSequence

__all__ = ["FusionParams", "cross_modal_attention", "fuse_modalities"]


@dataclass
class FusionParams:
    """Per-modality projections plus the audio->visual attention weights."""

    W_visual: Tensor
    b_visual: Tensor
    W_audio: Tensor
    b_audio: Tensor
    W_query: Tensor
    W_key: Tensor
    W_value: Tensor

    def __post_init__(self):
        for name in ("W_visual", "b_visual", "W_audio", "b_audio", "W_query", "W_key", "W_value"):
            setattr(self, name, as_tensor(getattr(self, name)))
        pv, pa = self.W_visual.shape[1], self.W_audio.shape[1]
        if self.W_query.shape[0] != pa or self.W_key.shape[0] != pv:
            raise ValueError("query/key projections do not match the modality widths")
        if self.W_query.shape[1] != self.W_key.shape[1]:
            raise ValueError("query and key projections must share a width")
        if self.W_value.shape != (pv, pa):
            raise ValueError(f"value projection must be {pv} x {pa}")

    @property
    def width(self) -> int:
        return self.W_visual.shape[1] + self.W_audio.shape[1]


def cross_modal_attention(audio, visual, p: FusionParams) -> Tensor:
    """Scaled dot-product attention from projected audio onto projected visual."""
    q = audio @ p.W_query
    key = visual @ p.W_key
    attn = ad.softmax((q @ key.T) * (1.0 / math.sqrt(p.W_query.shape[1])), axis=-1)
    return attn @ (visual @ p.W_value)


def fuse_modalities(seq: FeatureSequence, p: FusionParams) -> Tensor:
    """``[proj(visual) || enhanced audio]``; a zero audio block when audio is absent."""
    if seq.visual.shape[1] != p.W_visual.shape[0]:
        raise ValueError(f"{seq.video_id}: visual width {seq.visual.shape[1]} != {p.W_visual.shape[0]}")
    visual = Tensor(seq.visual) @ p.W_visual + p.b_visual
    if seq.audio is None:
        return ad.concat([visual, Tensor(np.zeros((seq.T, p.W_audio.shape[1])))], axis=-1)
    if seq.audio.shape[1] != p.W_audio.shape[0]:
        raise ValueError(f"{seq.video_id}: audio width {seq.audio.shape[1]} != {p.W_audio.shape[0]}")
    audio = Tensor(seq.audio) @ p.W_audio + p.b_audio
    enhanced = audio + cross_modal_attention(audio, visual, p)
    return ad.concat([visual, enhanced], axis=-1)
