"""Weighted multi-task loss.

The main loss combines per-component mean squared errors over the 6/3/3
output slots as (6*w_mano*l_mano + 3*w_trans*l_trans + 3*w_rot*l_rot) / 12;
the auxiliary loss is the unweighted MSE over the 7 statistic slots, added
with weight w_aux.
"""

from __future__ import annotations

from dataclasses import dataclass

from .nn import autograd as ag


@dataclass(frozen=True)
class LossWeights:
    w_mano: float = 10.0
    w_trans: float = 10000.0
    w_rot: float = 20.0
    w_aux: float = 0.5

    def __post_init__(self):
        if min(self.w_mano, self.w_trans, self.w_rot, self.w_aux) < 0:
            raise ValueError("loss weights must be non-negative")


def _mse(a, b):
    d = ag.sub(a, b)
    return ag.tmean(ag.mul(d, d))


def _slot(x, start, stop):
    return ag.slice_axis(ag.as_tensor(x), -1, start, stop)


def loss_main(pred, target, weights: LossWeights = LossWeights()):
    """Weighted pose loss over (..., 12) predictions; returns a scalar Tensor."""
    pred, target = ag.as_tensor(pred), ag.as_tensor(target)
    l_mano = _mse(_slot(pred, 0, 6), _slot(target, 0, 6))
    l_trans = _mse(_slot(pred, 6, 9), _slot(target, 6, 9))
    l_rot = _mse(_slot(pred, 9, 12), _slot(target, 9, 12))
    combined = ag.add(
        ag.add(
            ag.mul(l_mano, 6.0 * weights.w_mano),
            ag.mul(l_trans, 3.0 * weights.w_trans),
        ),
        ag.mul(l_rot, 3.0 * weights.w_rot),
    )
    return ag.mul(combined, 1.0 / 12.0)


def loss_aux(pred, target):
    """Plain MSE over the (..., 7) auxiliary statistics."""
    return _mse(ag.as_tensor(pred), ag.as_tensor(target))


def loss_total(main, aux, weights: LossWeights = LossWeights()):
    """main + w_aux * aux; aux may be None when the branch is disabled."""
    main = ag.as_tensor(main)
    if aux is None:
        return main
    return ag.add(main, ag.mul(ag.as_tensor(aux), weights.w_aux))
