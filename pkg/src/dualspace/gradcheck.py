"""Finite-difference verification of reverse-mode gradients.

``gradcheck`` perturbs every parameter entry and compares the central
difference of the loss with the analytic gradient.  When the comparison
fails, ``audit_ops`` re-checks each recorded op in isolation (random
direction, random cotangent) so the report can name the op at fault.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .optim import ParameterStore

__all__ = ["GradcheckReport", "central_difference", "stencil_resolution", "gradcheck", "audit_ops"]

REL_FLOOR = 1e-8
# bound on loss roundoff, in units of eps * |loss|
ROUNDOFF_ULPS = 4.0


@dataclass
class GradcheckReport:
    passed: bool
    max_rel_err: float
    worst_param: str | None
    worst_index: tuple | None = None
    failing_op: str | None = None
    n_checked: int = 0
    message: str = ""
    op_errors: dict = field(default_factory=dict)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = (
            f"{status} max_rel_err={self.max_rel_err:.3e} worst_param={self.worst_param}"
            f"{list(self.worst_index) if self.worst_index is not None else ''} checked={self.n_checked}"
        )
        if self.failing_op:
            line += f" failing_op={self.failing_op}"
        if self.message:
            line += f" ({self.message})"
        return line


def central_difference(f: Callable[[], float], x: np.ndarray, idx, h: float) -> float:
    """Five-point central difference of ``f`` w.r.t. ``x[idx]`` (x is mutated and restored)."""
    orig = x[idx]
    vals = []
    for step in (2.0, 1.0, -1.0, -2.0):
        x[idx] = orig + step * h
        vals.append(f())
    x[idx] = orig
    return (-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * h)


def _rel_err(a, n, resolution: float = 0.0) -> np.ndarray:
    """Relative error; pairs that are both below ``resolution`` count as exact."""
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    err = diff / np.maximum(scale, REL_FLOOR)
    return np.where(scale <= resolution, 0.0, err)


def stencil_resolution(loss_value: float, h: float) -> float:
    """Smallest derivative the five-point stencil can tell apart from zero.

    Each of the four evaluations carries roundoff of about a few ulps of the
    loss; the stencil weights (1, 8, 8, 1) / 12h amplify that by 1.5 / h.
    """
    return 1.5 * ROUNDOFF_ULPS * np.finfo(np.float64).eps * abs(loss_value) / h


def gradcheck(
    loss_fn: Callable[[], Tensor],
    store: ParameterStore,
    h: float = 1e-4,
    tol: float = 1e-4,
    params: list[str] | None = None,
) -> GradcheckReport:
    """Compare analytic and numeric gradients of ``loss_fn()`` for ``store``.

    Discrete choices made by the model (masks, top-k picks) are recorded on
    the unperturbed pass and replayed for every perturbed evaluation, so the
    check runs on one smooth piece of the loss.
    """
    names = params if params is not None else store.names()
    store.zero_grad()
    try:
        with ad.record_decisions() as tape:
            loss = loss_fn()
        ad.backward(loss)
    except NonFiniteError as err:
        return GradcheckReport(False, float("inf"), None, failing_op=err.op, message=str(err))
    store.ensure_grads()
    analytic = {n: store[n].grad.copy() for n in names}
    resolution = stencil_resolution(float(loss.data), h)

    def evaluate() -> float:
        with ad.no_grad(), ad.replay_decisions(tape):
            return float(loss_fn().data)

    worst, worst_name, worst_idx, count = 0.0, None, None, 0
    for name in names:
        data = store[name].data
        for idx in np.ndindex(data.shape):
            num = central_difference(evaluate, data, idx, h)
            err = float(_rel_err(analytic[name][idx], num, resolution))
            count += 1
            if err > worst or worst_name is None:
                worst, worst_name, worst_idx = err, name, idx
    store.zero_grad()
    report = GradcheckReport(worst < tol, worst, worst_name, worst_idx, n_checked=count)
    if not report.passed:
        with ad.replay_decisions(tape):
            loss = loss_fn()
        errors = audit_ops(loss)
        report.op_errors = errors
        if errors:
            report.failing_op = max(errors, key=errors.get)
            if errors[report.failing_op] < tol:
                report.failing_op = None
    return report


def audit_ops(loss: Tensor, h: float = 1e-6, seed: int = 0) -> dict[str, float]:
    """Check every recorded op's vector-Jacobian product in isolation.

    Each op is probed along a random input direction, contracted with the
    cotangent that backpropagation actually delivers to it (so masked-out
    entries sitting on kinks stay out of the comparison).  Returns the worst
    relative error seen for each op name.
    """
    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    cot = {id(loss): np.ones_like(loss.data)}
    for node in reversed(ad._topo_order(loss)):
        op = node._op
        u = cot.pop(id(node), None)
        if op is None or u is None:
            continue
        arrays = [p.data for p in node._parents]
        grads = op.vjp(u, node.data, *arrays, **node._kw)
        for p, g in zip(node._parents, grads):
            if g is not None and p.requires_grad:
                cot[id(p)] = g if id(p) not in cot else cot[id(p)] + g
        if not np.any(u):
            continue
        for i, (p, g) in enumerate(zip(node._parents, grads)):
            if g is None or not p.requires_grad:
                continue
            r = rng.standard_normal(p.data.shape)
            analytic = float(np.sum(g * r))

            def phi(t, i=i, r=r):
                shifted = list(arrays)
                shifted[i] = arrays[i] + t * r
                return float(np.sum(u * op.forward(*shifted, **node._kw)))

            numeric = (-phi(2 * h) + 8 * phi(h) - 8 * phi(-h) + phi(-2 * h)) / (12 * h)
            scale = max(abs(analytic), abs(numeric), 1e-6)
            err = abs(analytic - numeric) / scale
            errors[op.name] = max(errors.get(op.name, 0.0), err)
    return errors
