"""Energy-constrained hyperbolic graph convolution and the temporal HGCN.

A semantic layer transforms the nodes with a hyperbolic linear layer,
measures their Dirichlet energy, turns energy and depth into an association
threshold, and aggregates over the similarity graph restricted to pairs whose
Lorentz similarity clears that threshold.  A temporal layer aggregates over a
fixed distance-decay graph instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .lorentz import (
    DEFAULT_K,
    HyperbolicLinearParams,
    check_curvature,
    euclid_to_lorentz,
    hyperbolic_linear,
    lift_to_manifold,
    lorentz_norm,
    pairwise_distance,
    project,
)

__all__ = [
    "MessageGraph",
    "LshadConfig",
    "TemporalConfig",
    "LayerTrace",
    "dirichlet_energy",
    "lshad_threshold",
    "semantic_adjacency",
    "apply_lshad_rule",
    "temporal_adjacency",
    "message_aggregate",
    "hegcn_layer",
    "temporal_hgcn_layer",
    "HyperBranchParams",
    "hyper_branch_forward",
]


@dataclass
class MessageGraph:
    """Non-negative T x T weights used for one aggregation step."""

    weights: Tensor
    kind: str = "semantic"
    # Lorentz similarities the weights were built from (semantic graphs only)
    similarity: np.ndarray | None = None

    def __post_init__(self):
        self.weights = as_tensor(self.weights)
        if self.kind not in ("semantic", "temporal"):
            raise ValueError(f"unknown graph kind {self.kind!r}")

    @property
    def data(self) -> np.ndarray:
        return self.weights.data


@dataclass
class LshadConfig:
    beta: float = 0.8
    gamma: float = 1.2

    def __post_init__(self):
        if not (math.isfinite(self.beta) and math.isfinite(self.gamma)):
            raise ValueError("beta and gamma must be finite")


@dataclass
class TemporalConfig:
    eta: float = math.e

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")


@dataclass
class LayerTrace:
    """Diagnostics from one semantic layer."""

    energy_in: float
    energy_pre: float
    energy_post: float
    threshold: float
    kept_fraction: float


def dirichlet_energy(nodes, k: float = DEFAULT_K) -> Tensor:
    """Half the sum of squared geodesic distances over all ordered pairs."""
    d = pairwise_distance(nodes, k=k)
    return ad.square(d).sum() * 0.5


def lshad_threshold(energy: float, layer_index: int, cfg: LshadConfig | None = None) -> float:
    """``sigmoid(beta*k - gamma + 1/(E + 1))`` for layer ``k >= 1``."""
    cfg = cfg or LshadConfig()
    energy = float(energy)
    if energy < 0:
        raise ValueError("energy must be non-negative")
    if layer_index < 1:
        raise ValueError("layer_index starts at 1")
    z = cfg.beta * layer_index - cfg.gamma + 1.0 / (energy + 1.0)
    return 1.0 / (1.0 + math.exp(-z))


def semantic_adjacency(nodes, k: float = DEFAULT_K, distances: Tensor | None = None) -> MessageGraph:
    """Row-softmax of pairwise Lorentz similarities."""
    d = pairwise_distance(nodes, k=k) if distances is None else distances
    sim = ad.exp(-d)
    return MessageGraph(ad.softmax(sim, axis=-1), "semantic", similarity=sim.data)


def apply_lshad_rule(graph: MessageGraph, threshold: float, reference: np.ndarray | None = None) -> MessageGraph:
    """Zero every weight whose reference value is below ``threshold``.

    ``reference`` defaults to the weights themselves; surviving weights are
    kept verbatim (no renormalisation).
    """
    ref = graph.data if reference is None else np.asarray(reference)
    keep = ad.decision(ref >= threshold)
    return MessageGraph(ad.where_mask(graph.weights, keep), graph.kind, graph.similarity)


def temporal_adjacency(T: int, cfg: TemporalConfig | None = None) -> MessageGraph:
    """``exp(-|i - j| / eta)``."""
    cfg = cfg or TemporalConfig()
    if T < 1:
        raise ValueError("T must be >= 1")
    idx = np.arange(T)
    w = np.exp(-np.abs(idx[:, None] - idx[None, :]) / cfg.eta)
    return MessageGraph(Tensor(w), "temporal")


def message_aggregate(graph: MessageGraph, nodes, k: float = DEFAULT_K) -> Tensor:
    """Lorentz centroid of each node's weighted neighbourhood.

    A node whose row has no weight left keeps its own feature.
    """
    k = check_curvature(k)
    nodes = as_tensor(nodes)
    w = graph.weights
    if w.shape != (nodes.shape[0], nodes.shape[0]):
        raise ValueError(f"graph {w.shape} does not match {nodes.shape[0]} nodes")
    empty = ad.decision(~np.any(graph.data > 0, axis=1))
    if np.any(empty):
        w = w + np.diag(empty.astype(np.float64))
    s = w @ nodes
    denom = lorentz_norm(s, keepdims=True) * math.sqrt(-k)
    return project(s / denom, k)


def hegcn_layer(
    nodes,
    layer_index: int,
    params: HyperbolicLinearParams,
    lshad: LshadConfig | None = None,
    k: float = DEFAULT_K,
    training: bool = False,
    rng: np.random.Generator | None = None,
    trace: list | None = None,
) -> Tensor:
    """One energy-constrained semantic layer.

    The threshold is computed from the energy of the transformed,
    pre-aggregation features and compared against raw Lorentz similarity;
    the softmax weights of surviving pairs are passed to the aggregation.
    """
    lshad = lshad or LshadConfig()
    y = hyperbolic_linear(nodes, params, k, training=training, rng=rng)
    d = pairwise_distance(y, k=k)
    energy = 0.5 * float(np.sum(d.data**2))
    thr = lshad_threshold(energy, layer_index, lshad)
    graph = semantic_adjacency(y, k, distances=d)
    graph = apply_lshad_rule(graph, thr, reference=graph.similarity)
    out = message_aggregate(graph, y, k)
    if trace is not None:
        x_in = as_tensor(nodes).data
        trace.append(
            LayerTrace(
                energy_in=float(dirichlet_energy(x_in, k).data),
                energy_pre=energy,
                energy_post=float(dirichlet_energy(out.data, k).data),
                threshold=thr,
                kept_fraction=float(np.mean(graph.data > 0)),
            )
        )
    return out


def temporal_hgcn_layer(
    nodes,
    params: HyperbolicLinearParams,
    cfg: TemporalConfig | None = None,
    k: float = DEFAULT_K,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    y = hyperbolic_linear(nodes, params, k, training=training, rng=rng)
    if y.shape[0] == 1:
        return y
    return message_aggregate(temporal_adjacency(y.shape[0], cfg), y, k)


@dataclass
class HyperBranchParams:
    semantic: list = field(default_factory=list)
    temporal: list = field(default_factory=list)


def hyper_branch_forward(
    X,
    params: HyperBranchParams,
    lshad: LshadConfig | None = None,
    temporal: TemporalConfig | None = None,
    k: float = DEFAULT_K,
    training: bool = False,
    rng: np.random.Generator | None = None,
    trace: list | None = None,
) -> Tensor:
    """Lift ``X`` (T x D), run the semantic and temporal stacks side by side,
    and join them by concatenating spatial parts and re-lifting."""
    x0 = euclid_to_lorentz(X, k)
    sem = x0
    for i, p in enumerate(params.semantic, start=1):
        sem = hegcn_layer(sem, i, p, lshad, k, training=training, rng=rng, trace=trace)
    tmp = x0
    for p in params.temporal:
        tmp = temporal_hgcn_layer(tmp, p, temporal, k, training=training, rng=rng)
    return lift_to_manifold(ad.concat([sem[..., 1:], tmp[..., 1:]], axis=-1), k)
