"""Deterministic synthetic videos and text banks.

Violent videos carry one contiguous violent segment drawn around the violent
centroid; everything else is drawn around the normal centroid.  A share of
normal videos are *ambiguous*: they contain a segment that sits close to the
violent centroid along the main class axis but is displaced along a second
"semantic" axis and lacks the violent audio signature.  A nearest-centroid
classifier on raw features confuses those segments with violence, which is
the failure the dual-space model is meant to avoid.

Text banks mimic scene/action-modified captions: each video gets a positive
embedding near its event centroid and two negatives placed between the
opposing event centroid and the positive, at varying distance (hardness).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .formats import SNIPPET_FRAMES, Dataset, FeatureSequence, TextBank
from .metrics import average_precision, broadcast_to_frames

__all__ = ["SyntheticSpec", "generate_synthetic", "nearest_centroid_scores", "oracle_ap"]


@dataclass
class SyntheticSpec:
    seed: int = 7
    num_videos: int = 60
    t_min: int = 16
    t_max: int = 64
    visual_dim: int = 16
    audio_dim: int = 8
    text_dim: int = 8
    margin: float = 1.0
    ambiguity: float = 0.3
    noise: float = 0.5
    violent_fraction: float = 0.5
    test_fraction: float = 1.0 / 3.0
    text_noise: float = 0.1

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if not 0.0 <= self.ambiguity <= 1.0:
            raise ValueError("ambiguity must lie in [0, 1]")
        if not 1 <= self.t_min <= self.t_max:
            raise ValueError("need 1 <= t_min <= t_max")
        if self.num_videos < 2:
            raise ValueError("need at least two videos")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in [0, 1)")
        if self.visual_dim < 2:
            raise ValueError("visual_dim must be >= 2")


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _f32(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def _segment(rng, T):
    length = int(rng.integers(max(1, T // 4), max(2, T // 2) + 1))
    length = min(length, T)
    start = int(rng.integers(0, T - length + 1))
    return start, length


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Build the dataset (videos + text bank) for ``spec``; pure in ``spec``."""
    rng = np.random.default_rng(spec.seed)
    dv, da = spec.visual_dim, spec.audio_dim
    basis, _ = np.linalg.qr(rng.standard_normal((dv, dv)))
    class_axis, semantic_axis = basis[:, 0], basis[:, 1]
    base = 0.5 * rng.standard_normal(dv)
    mu_normal = base
    mu_violent = base + spec.margin * class_axis
    mu_ambiguous = base + 0.8 * spec.margin * class_axis + 0.6 * spec.margin * semantic_axis
    audio_axis = _unit(rng, da) if da else np.zeros(0)
    audio_shift = 0.8 * spec.margin * audio_axis

    text_centroids = {name: 1.5 * _unit(rng, spec.text_dim) for name in ("violent", "normal", "ambiguous")}
    opposing = {"violent": "ambiguous", "normal": "violent", "ambiguous": "violent"}

    n_violent = int(round(spec.num_videos * spec.violent_fraction))
    n_normal = spec.num_videos - n_violent
    n_ambiguous = int(round(n_normal * spec.ambiguity))
    kinds = ["violent"] * n_violent + ["ambiguous"] * n_ambiguous + ["normal"] * (n_normal - n_ambiguous)

    # stratified split: the same share of each kind goes to test
    split = [""] * len(kinds)
    for kind in ("violent", "ambiguous", "normal"):
        idx = [i for i, k in enumerate(kinds) if k == kind]
        perm = rng.permutation(idx)
        n_test = int(round(len(idx) * spec.test_fraction))
        for j, i in enumerate(perm):
            split[i] = "test" if j < n_test else "train"

    videos = []
    bank = TextBank(spec.text_dim)
    for i, kind in enumerate(kinds):
        vid = f"vid{i:04d}"
        T = int(rng.integers(spec.t_min, spec.t_max + 1))
        visual = mu_normal + spec.noise * rng.standard_normal((T, dv))
        audio = spec.noise * rng.standard_normal((T, da)) if da else None
        snippet_labels = np.zeros(T, dtype=np.int8)
        if kind != "normal":
            start, length = _segment(rng, T)
            seg = slice(start, start + length)
            if kind == "violent":
                visual[seg] += mu_violent - mu_normal
                if audio is not None:
                    audio[seg] += audio_shift
                snippet_labels[seg] = 1
            else:
                visual[seg] += mu_ambiguous - mu_normal
        frames = np.repeat(snippet_labels, SNIPPET_FRAMES)
        # float32 on disk; round here so the in-memory set equals its file form
        visual = _f32(visual)
        if audio is not None:
            audio = _f32(audio)
        videos.append(
            FeatureSequence(
                vid, visual, audio, frames, int(kind == "violent"), split[i], ambiguous=kind == "ambiguous"
            )
        )

        t_pos = text_centroids[kind] + spec.text_noise * rng.standard_normal(spec.text_dim)
        bank.add(vid, _f32(t_pos), "positive")
        t_opp = text_centroids[opposing[kind]]
        for role, lo, hi in (("scene-modified", 0.3, 0.7), ("action-modified", 0.1, 0.5)):
            h = rng.uniform(lo, hi)
            neg = t_opp + h * (t_pos - t_opp) + spec.text_noise * rng.standard_normal(spec.text_dim)
            bank.add(vid, _f32(neg), role)

    centroid_pos = np.concatenate([mu_violent, audio_shift])
    centroid_neg = np.concatenate([mu_normal, np.zeros(da)])
    meta = {
        "spec": asdict(spec),
        "centroid_violent": centroid_pos.tolist(),
        "centroid_normal": centroid_neg.tolist(),
    }
    ds = Dataset(videos, bank, meta)
    for name, subset in (("all", videos), ("test", ds.split("test")), ("test_ambiguous", ambiguous_subset(ds.split("test")))):
        if subset and any(v.video_label for v in subset):
            meta[f"oracle_ap_{name}"] = oracle_ap(subset, centroid_pos, centroid_neg)
    return ds


def ambiguous_subset(videos) -> list:
    """Violent videos plus ambiguous normal videos."""
    return [v for v in videos if v.video_label == 1 or v.ambiguous]


def _raw(v: FeatureSequence) -> np.ndarray:
    return v.visual if v.audio is None else np.concatenate([v.visual, v.audio], axis=1)


def nearest_centroid_scores(v: FeatureSequence, centroid_pos, centroid_neg) -> np.ndarray:
    """Per-snippet ``|x - mu_normal|^2 - |x - mu_violent|^2``."""
    x = _raw(v)
    return np.sum((x - centroid_neg) ** 2, axis=1) - np.sum((x - centroid_pos) ** 2, axis=1)


def oracle_ap(videos, centroid_pos, centroid_neg) -> float:
    """Frame-level AP of the nearest-centroid rule over ``videos``."""
    scores, labels = [], []
    for v in videos:
        s = nearest_centroid_scores(v, np.asarray(centroid_pos), np.asarray(centroid_neg))
        scores.append(broadcast_to_frames(s, len(v.frame_labels)))
        labels.append(v.frame_labels)
    return average_precision(np.concatenate(scores), np.concatenate(labels))
