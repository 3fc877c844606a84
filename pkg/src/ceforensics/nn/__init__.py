"""Minimal deterministic neural-network engine (numpy, CPU, float32)."""

from .layers import (
    SPP,
    AvgPool,
    BatchNorm,
    Conv2d,
    FC,
    FixedHPF,
    Layer,
    ReLU,
    SoftmaxLoss,
    layer_from_spec,
)
from .network import (
    Network,
    debug_checks_enabled,
    from_layer_specs,
    loss_softmax_xent,
    set_debug_checks,
)
from .optim import TrainConfig, init_velocity, learning_rate, sgd_step
from .checkpoint import (
    Checkpoint,
    checkpoint_from_network,
    load_checkpoint,
    require_same_spec,
    save_checkpoint,
)
from .gradcheck import grad_check

__all__ = [
    "SPP", "AvgPool", "BatchNorm", "Conv2d", "FC", "FixedHPF", "Layer", "ReLU",
    "SoftmaxLoss", "layer_from_spec", "Network", "debug_checks_enabled",
    "from_layer_specs", "loss_softmax_xent", "set_debug_checks", "TrainConfig",
    "init_velocity", "learning_rate", "sgd_step", "Checkpoint",
    "checkpoint_from_network", "load_checkpoint", "require_same_spec",
    "save_checkpoint", "grad_check",
]
