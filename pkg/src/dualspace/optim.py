"""Named parameter storage, the Adam update and learning-rate schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = ["ParameterStore", "AdamState", "adam_step", "cosine_lr", "multistep_lr"]


class ParameterStore:
    """Ordered mapping of stable names to trainable tensors.

    Each entry is a :class:`Tensor` with ``requires_grad=True`` whose
    ``grad`` slot has the value's shape (zeros until a backward pass).
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._entries:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        t.grad = np.zeros_like(t.data)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def names(self) -> list[str]:
        return list(self._entries)

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad = np.zeros_like(t.data)

    def ensure_grads(self) -> None:
        """Give parameters untouched by the last backward a zero gradient."""
        for t in self._entries.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)

    def size(self) -> int:
        return sum(t.data.size for t in self._entries.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._entries.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._entries) - set(state)
        extra = set(state) - set(self._entries)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, t in self._entries.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {t.data.shape}")
            t.data = v.copy()

    @classmethod
    def from_state_dict(cls, state: dict[str, np.ndarray]) -> "ParameterStore":
        store = cls()
        for k, v in state.items():
            store.add(k, v)
        return store


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # decoupled (AdamW-style) decay; 0 gives plain Adam
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("lr and eps must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


def adam_step(store: ParameterStore, state: AdamState, lr: float | None = None) -> ParameterStore:
    """One bias-corrected Adam update in place; gradients are zeroed afterwards."""
    lr = state.lr if lr is None else lr
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in store.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data = p.data - lr * update
    store.zero_grad()
    return store


def cosine_lr(base_lr: float, step: int, total_steps: int, min_lr: float = 0.0) -> float:
    if total_steps <= 1:
        return base_lr
    frac = min(max(step / (total_steps - 1), 0.0), 1.0)
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * frac))


def multistep_lr(base_lr: float, epoch: int, milestones=(4, 8), gamma: float = 0.1) -> float:
    return base_lr * gamma ** sum(epoch >= m for m in milestones)
