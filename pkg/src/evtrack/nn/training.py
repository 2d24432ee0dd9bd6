"""Adam optimization, the single training step, and gradient checking."""

from __future__ import annotations

import numpy as np

from ..errors import StateError, TrainingAbort
from . import autograd as ag
from .network import NetConfig, Weights, forward_batch


class AdamState:
    """First/second moment estimates per tensor plus the step counter."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.step = 0


def adam_update(weights: Weights, state: AdamState, lr: float):
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, t in weights.tensors.items():
        g = t.grad
        if g is None:
            continue
        g = g.astype(np.float64, copy=False)
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(g)
            state.m[name] = m
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        t.data = (t.data.astype(np.float64) - step).astype(t.data.dtype)


def train_step(
    batch,
    weights: Weights,
    state: AdamState,
    lr: float,
    config: NetConfig,
    loss_weights=None,
    with_aux=True,
):
    """One Adam update on a (inputs, offsets, pose targets, aux targets)
    batch. Returns the scalar losses; aborts on a non-finite total."""
    from ..losses import LossWeights, loss_aux, loss_main, loss_total

    if loss_weights is None:
        loss_weights = LossWeights()
    x, offsets, pose_t, aux_t = batch
    weights.zero_grads()
    main, aux = forward_batch(x, offsets, weights, config, with_aux=with_aux)
    lm = loss_main(main, pose_t.astype(main.dtype), loss_weights)
    la = loss_aux(aux, aux_t.astype(aux.dtype)) if with_aux else None
    lt = loss_total(lm, la, loss_weights)
    total = float(lt.item())
    if not np.isfinite(total):
        raise TrainingAbort(
            f"non-finite loss at step {state.step + 1}: "
            f"main={float(lm.item())!r} aux={None if la is None else float(la.item())!r}"
        )
    lt.backward()
    adam_update(weights, state, lr)
    return {
        "total": total,
        "main": float(lm.item()),
        "aux": float(la.item()) if la is not None else None,
    }


def finite_difference_grad(f, tensor, h=1e-5):
    """Central-difference gradient of scalar f() w.r.t. tensor.data."""
    grad = np.zeros_like(tensor.data, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f()
        flat[i] = orig - h
        f_minus = f()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def check_gradients(build_loss, tensors, h=1e-5, sample=None, rng=None):
    """Compare recorded gradients against central differences.

    `build_loss` constructs the scalar loss Tensor from the current tensor
    values. Returns the worst relative error over all checked entries,
    where relative error is max|a - n| / max(max|a|, max|n|, resolution)
    per tensor. The resolution term is the noise level of the central
    difference itself, eps * |loss| / h: coordinate pairs whose gradients
    sit below what two rounded function evaluations can resolve are in
    exact agreement as far as the oracle can tell. With `sample`, only
    that many randomly chosen coordinates are differenced per tensor (the
    analytic side is always complete).
    """
    for t in tensors:
        if not t.requires_grad:
            raise StateError("gradient check requires requires_grad tensors")
        t.grad = None
    loss = build_loss()
    loss.backward()
    analytic = [
        np.zeros_like(t.data, dtype=np.float64) if t.grad is None else t.grad.astype(np.float64)
        for t in tensors
    ]

    def value():
        with ag.no_grad():
            return float(build_loss().item())

    f0 = abs(float(loss.item()))
    resolution = np.finfo(np.float64).eps * max(1.0, f0) / h
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        aflat = a.reshape(-1)
        if sample is not None and flat.size > sample:
            idx = (rng or np.random.default_rng(0)).choice(
                flat.size, size=sample, replace=False
            )
        else:
            idx = range(flat.size)
        numeric = {}
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = value()
            flat[i] = orig - h
            f_minus = value()
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * h)
        if not numeric:
            continue
        nvals = np.array(list(numeric.values()))
        avals = np.array([aflat[i] for i in numeric])
        scale = max(np.abs(avals).max(), np.abs(nvals).max(), resolution)
        worst = max(worst, float(np.abs(avals - nvals).max() / scale))
    return worst
