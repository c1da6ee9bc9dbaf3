"""Lorentz (hyperboloid) model geometry.

Points live on the upper sheet ``{x : <x,x>_L = 1/K, x_0 > 0}`` in
``R^{n+1}`` with the time coordinate first.  Every function is batched over
leading axes, accepts arrays or :class:`~dualspace.autodiff.Tensor` inputs and
returns a Tensor, so the same code serves inference and training.

Numerical conventions
---------------------
* ``||v||_L = sqrt(|<v,v>_L|)`` so the norm is defined for timelike sums too.
* ``arcosh`` clamps its argument at 1; its gradient is cut within 1e-12 of 1.
* Outputs that must lie on the manifold get their time coordinate recomputed
  from the spatial part, so the invariant holds to rounding regardless of
  how far the spatial part is from the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor

__all__ = [
    "DEFAULT_K",
    "HyperbolicLinearParams",
    "check_curvature",
    "origin",
    "manifold_residual",
    "on_manifold",
    "lorentz_inner",
    "pairwise_inner",
    "lorentz_norm",
    "lift_to_manifold",
    "project",
    "exp_map",
    "log_map",
    "exp_map_origin",
    "log_map_origin",
    "geodesic_distance",
    "pairwise_distance",
    "lorentz_similarity",
    "euclid_to_lorentz",
    "hyperbolic_linear",
]

DEFAULT_K = -1.0
MANIFOLD_TOL = 1e-9


def check_curvature(k: float) -> float:
    k = float(k)
    if not (k < 0 and np.isfinite(k)):
        raise ValueError(f"curvature must be finite and negative, got {k}")
    return k


def _sign(n: int) -> np.ndarray:
    s = np.ones(n)
    s[0] = -1.0
    return s


def origin(n: int, k: float = DEFAULT_K) -> np.ndarray:
    """The origin ``(sqrt(-1/K), 0, ..., 0)`` of the n-dimensional model."""
    k = check_curvature(k)
    o = np.zeros(n + 1)
    o[0] = np.sqrt(-1.0 / k)
    return o


def manifold_residual(x, k: float = DEFAULT_K) -> np.ndarray:
    """``|<x,x>_L - 1/K|`` per point (plain numpy, no graph)."""
    x = np.asarray(x, dtype=np.float64)
    q = -x[..., 0] ** 2 + np.sum(x[..., 1:] ** 2, axis=-1)
    return np.abs(q - 1.0 / k)


def on_manifold(x, k: float = DEFAULT_K, tol: float = MANIFOLD_TOL) -> bool:
    """True when every point satisfies the hyperboloid invariant.

    The tolerance is scaled by ``max(1, x_0^2)``: that is the size of the
    terms that cancel in ``<x,x>_L``.
    """
    x = np.asarray(x, dtype=np.float64)
    scale = np.maximum(1.0, x[..., 0] ** 2)
    return bool(np.all(manifold_residual(x, k) <= tol * scale) and np.all(x[..., 0] > 0))


def _check_pair(x: Tensor, y: Tensor):
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    if x.shape[-1] < 2:
        raise ValueError("Lorentz vectors need at least 2 coordinates")


def lorentz_inner(x, y, keepdims: bool = False) -> Tensor:
    """``-x_0 y_0 + sum_i x_i y_i`` along the last axis."""
    x, y = as_tensor(x), as_tensor(y)
    _check_pair(x, y)
    return (x * (y * _sign(y.shape[-1]))).sum(axis=-1, keepdims=keepdims)


def pairwise_inner(x, y) -> Tensor:
    """Matrix of Lorentz inner products between rows of ``x`` (N) and ``y`` (M)."""
    x, y = as_tensor(x), as_tensor(y)
    _check_pair(x, y)
    return x @ (y * _sign(y.shape[-1])).T


def lorentz_norm(v, keepdims: bool = False) -> Tensor:
    return ad.sqrt(ad.absolute(lorentz_inner(v, v, keepdims=keepdims)))


def lift_to_manifold(spatial, k: float = DEFAULT_K) -> Tensor:
    """Prepend the time coordinate ``sqrt(||s||^2 - 1/K)``."""
    k = check_curvature(k)
    s = as_tensor(spatial)
    t = ad.sqrt(ad.square(s).sum(axis=-1, keepdims=True) + (-1.0 / k))
    return ad.concat([t, s], axis=-1)


def project(x, k: float = DEFAULT_K) -> Tensor:
    """Recompute the time coordinate of ``x`` from its spatial part."""
    x = as_tensor(x)
    return lift_to_manifold(x[..., 1:], k)


def _require_on_manifold(x: Tensor, k: float, what: str):
    if not on_manifold(x.data, k):
        worst = float(np.max(manifold_residual(x.data, k)))
        raise ValueError(f"{what} is off the manifold (residual {worst:.3e})")


def exp_map(x, v, k: float = DEFAULT_K) -> Tensor:
    """Map tangent vector ``v`` at ``x`` onto the manifold.

    ``cosh(s|v|) x + sinh(s|v|) v / (s|v|)`` with ``s = sqrt(-K)``; the
    ``|v| -> 0`` limit is handled by a smooth sinh(a)/a primitive.
    """
    k = check_curvature(k)
    x, v = as_tensor(x), as_tensor(v)
    _check_pair(x, v)
    _require_on_manifold(x, k, "exp_map base point")
    a = lorentz_norm(v, keepdims=True) * np.sqrt(-k)
    return project(ad.cosh(a) * x + ad.sinhc(a) * v, k)


def log_map(x, y, k: float = DEFAULT_K) -> Tensor:
    """Tangent vector at ``x`` pointing to ``y`` with length ``d(x, y)``.

    Computed as ``u * arcsinh(s|u|)/(s|u|)`` with ``u = y - K<x,y> x``,
    which equals ``d(x,y) u/|u|`` on the manifold but has no 0/0 at y = x.
    Identical points return an exact zero vector.
    """
    k = check_curvature(k)
    x, y = as_tensor(x), as_tensor(y)
    _check_pair(x, y)
    u = y - (lorentz_inner(x, y, keepdims=True) * k) * x
    a = lorentz_norm(u, keepdims=True) * np.sqrt(-k)
    out = ad.arsinhc(a) * u
    same = np.all(x.data == y.data, axis=-1, keepdims=True)
    if np.any(same):
        out = ad.where_mask(out, ~same)
    return out


def exp_map_origin(spatial_tangent, k: float = DEFAULT_K) -> Tensor:
    """Exp map at the origin of the tangent vector ``[0, u]`` (u given)."""
    k = check_curvature(k)
    u = as_tensor(spatial_tangent)
    r = ad.sqrt(ad.square(u).sum(axis=-1, keepdims=True))
    return lift_to_manifold(ad.sinhc(r * np.sqrt(-k)) * u, k)


def log_map_origin(y, k: float = DEFAULT_K) -> Tensor:
    """Log map at the origin; returns the full ``n+1`` vector (time entry 0)."""
    k = check_curvature(k)
    y = as_tensor(y)
    s = y[..., 1:]
    r = ad.sqrt(ad.square(s).sum(axis=-1, keepdims=True))
    sp = ad.arsinhc(r * np.sqrt(-k)) * s
    zero = np.zeros(y.shape[:-1] + (1,))
    return ad.concat([Tensor(zero), sp], axis=-1)


def _distance_from_inner(inner: Tensor, k: float) -> Tensor:
    return ad.arcosh(inner * k) * (1.0 / np.sqrt(-k))


def geodesic_distance(x, y, k: float = DEFAULT_K) -> Tensor:
    """``arcosh(K<x,y>_L) / sqrt(-K)``, elementwise over leading axes.

    Identical points get exactly 0 (rounding in ``<x,x>`` would otherwise
    leave a distance of order 1e-8).
    """
    k = check_curvature(k)
    x, y = as_tensor(x), as_tensor(y)
    d = _distance_from_inner(lorentz_inner(x, y), k)
    same = np.all(x.data == y.data, axis=-1)
    if np.any(same):
        d = ad.where_mask(d, ~same)
    return d


def pairwise_distance(x, y=None, k: float = DEFAULT_K) -> Tensor:
    """Distance matrix between rows of ``x`` and ``y``.

    Pairs of identical rows (the whole diagonal when ``y`` is omitted) get
    exactly zero and carry no gradient.
    """
    k = check_curvature(k)
    x = as_tensor(x)
    y = x if y is None else as_tensor(y)
    d = _distance_from_inner(pairwise_inner(x, y), k)
    same = np.all(x.data[:, None, :] == y.data[None, :, :], axis=-1)
    if np.any(same):
        d = ad.where_mask(d, ~same)
    return d


def lorentz_similarity(x, y, k: float = DEFAULT_K) -> Tensor:
    """``exp(-d(x, y))`` in (0, 1]."""
    return ad.exp(-geodesic_distance(x, y, k))


def euclid_to_lorentz(x_e, k: float = DEFAULT_K) -> Tensor:
    """Lift Euclidean features through the exp map at the origin.

    For K = -1 this is ``(cosh|x|, sinh|x| x/|x|)``; x = 0 maps to the origin.
    """
    return exp_map_origin(x_e, k)


@dataclass
class HyperbolicLinearParams:
    """Weights of one hyperbolic linear layer.

    ``mode="linear"`` uses ``phi = W dropout(x)``.  ``mode="gated"`` uses
    ``phi = scale_lambda * sigmoid(v.x + b') * u/|u|`` with
    ``u = W h(x) + b`` and ``h`` chosen by ``activation``
    (identity, relu, or sigmoid-gate ``a * sigmoid(a)``).
    """

    W: Tensor
    v: Tensor | None = None
    b: Tensor | None = None
    b_prime: Tensor | None = None
    scale_lambda: float = 2.0
    activation: str = "identity"
    mode: str = "gated"
    dropout_rate: float = 0.0

    def __post_init__(self):
        self.W = as_tensor(self.W)
        if self.scale_lambda <= 0:
            raise ValueError("scale_lambda must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.activation not in ("identity", "relu", "sigmoid-gate"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.mode not in ("linear", "gated"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "gated":
            n1 = self.W.shape[1]
            self.v = as_tensor(np.zeros(n1) if self.v is None else self.v)
            self.b = as_tensor(np.zeros(self.W.shape[0]) if self.b is None else self.b)
            self.b_prime = as_tensor(0.0 if self.b_prime is None else self.b_prime)


def _activation(x: Tensor, name: str) -> Tensor:
    if name == "identity":
        return x
    if name == "relu":
        return ad.relu(x)
    return x * ad.sigmoid(x)


def hyperbolic_linear(
    x,
    p: HyperbolicLinearParams,
    k: float = DEFAULT_K,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Map points in ``L^n`` (rows of ``x``) to points in ``L^m``.

    The spatial output is ``phi`` and the time coordinate is
    ``sqrt(|phi|^2 - 1/K)``, so every output is on the manifold.
    """
    k = check_curvature(k)
    x = as_tensor(x)
    if x.shape[-1] != p.W.shape[1]:
        raise ValueError(f"W expects {p.W.shape[1]} input coordinates, got {x.shape[-1]}")
    if p.mode == "linear":
        if training and p.dropout_rate > 0:
            rng = rng if rng is not None else np.random.default_rng()
            keep = rng.random(x.shape) >= p.dropout_rate
            x = ad.where_mask(x, keep) * (1.0 / (1.0 - p.dropout_rate))
        phi = x @ p.W.T
    else:
        u = _activation(x, p.activation) @ p.W.T + p.b
        norm = ad.sqrt(ad.square(u).sum(axis=-1, keepdims=True))
        zero = norm.data == 0
        gate = ad.sigmoid((x @ p.v).reshape(x.shape[:-1] + (1,)) + p.b_prime) * p.scale_lambda
        phi = gate * u / (norm + zero.astype(np.float64))
    return lift_to_manifold(phi, k)
