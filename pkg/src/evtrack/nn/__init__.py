"""Tensor kernels, the multi-task network, and training support."""

from .autograd import (
    Tensor,
    as_tensor,
    concat,
    conv2d,
    depthwise_conv2d,
    global_avg_pool,
    linear,
    matmul,
    no_grad,
    relu,
    taylor_softmax,
)
from .network import (
    AUX_DIM,
    MAIN_DIM,
    NetConfig,
    PoseOutput,
    Weights,
    count_flops,
    flops_breakdown,
    forward,
    forward_batch,
    init_weights,
    inverted_residual,
    mobilevit_block,
    separable_linear_attention,
    shape_plan,
    toy_config,
    validate_weights,
)
from .training import AdamState, adam_update, check_gradients, train_step

__all__ = [
    "Tensor",
    "as_tensor",
    "concat",
    "conv2d",
    "depthwise_conv2d",
    "global_avg_pool",
    "linear",
    "matmul",
    "no_grad",
    "relu",
    "taylor_softmax",
    "AUX_DIM",
    "MAIN_DIM",
    "NetConfig",
    "PoseOutput",
    "Weights",
    "count_flops",
    "flops_breakdown",
    "forward",
    "forward_batch",
    "init_weights",
    "inverted_residual",
    "mobilevit_block",
    "separable_linear_attention",
    "shape_plan",
    "toy_config",
    "validate_weights",
    "AdamState",
    "adam_update",
    "check_gradients",
    "train_step",
]
