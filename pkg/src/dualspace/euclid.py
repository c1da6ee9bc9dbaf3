"""Euclidean GCN branch: a cosine-similarity graph and a temporal graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .hypergraph import MessageGraph, TemporalConfig, temporal_adjacency

__all__ = [
    "EuclidBranchParams",
    "euclid_semantic_adjacency",
    "gcn_layer",
    "euclid_branch_forward",
]


@dataclass
class EuclidBranchParams:
    """Per-layer ``(W, b)`` pairs for the semantic and temporal stacks."""

    semantic: list = field(default_factory=list)
    temporal: list = field(default_factory=list)

    def __post_init__(self):
        for stack in (self.semantic, self.temporal):
            for (w0, _), (w1, _) in zip(stack, stack[1:]):
                if as_tensor(w0).shape[1] != as_tensor(w1).shape[0]:
                    raise ValueError("layer shapes do not chain")


def euclid_semantic_adjacency(X) -> MessageGraph:
    """Row-softmax of pairwise cosine similarity.

    Zero rows have similarity 0 to everything, themselves included.
    """
    X = as_tensor(X)
    norm = ad.sqrt(ad.square(X).sum(axis=-1, keepdims=True))
    unit = X / (norm + (norm.data == 0).astype(np.float64))
    return MessageGraph(ad.softmax(unit @ unit.T, axis=-1), "semantic")


def gcn_layer(X, A: MessageGraph, W, b, activation: str = "relu", residual: bool = True) -> Tensor:
    """``act(A X W + b)``, plus ``X`` when the widths match."""
    X, W = as_tensor(X), as_tensor(W)
    if X.shape[-1] != W.shape[0]:
        raise ValueError(f"W expects width {W.shape[0]}, got {X.shape[-1]}")
    if A.weights.shape != (X.shape[0], X.shape[0]):
        raise ValueError("adjacency does not match node count")
    h = A.weights @ X @ W + b
    if activation == "relu":
        h = ad.relu(h)
    elif activation != "identity":
        raise ValueError(f"unknown activation {activation!r}")
    if residual and h.shape == X.shape:
        h = h + X
    return h


def _row_normalised(g: MessageGraph) -> MessageGraph:
    w = g.data
    return MessageGraph(Tensor(w / w.sum(axis=1, keepdims=True)), g.kind)


def euclid_branch_forward(X, params: EuclidBranchParams, temporal: TemporalConfig | None = None) -> Tensor:
    """Semantic stack and temporal stack over the same input, joined per node."""
    X = as_tensor(X)
    a_sem = euclid_semantic_adjacency(X)
    a_tmp = _row_normalised(temporal_adjacency(X.shape[0], temporal))
    sem = X
    for W, b in params.semantic:
        sem = gcn_layer(sem, a_sem, W, b)
    tmp = X
    for W, b in params.temporal:
        tmp = gcn_layer(tmp, a_tmp, W, b)
    return ad.concat([sem, tmp], axis=-1)
