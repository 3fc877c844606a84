"""Detector architectures: pixel-domain and histogram-domain networks.

The pixel-domain detector ("pcnn") consumes a 1-channel patch scaled to
[0, 1]: a fixed [1, -1] horizontal high-pass front end, four conv blocks
(3x3, stride 1, pad 1; channels 64, 16, 32, 128) each with batch norm and
ReLU, average pooling 5x5 stride 2 after the first three blocks, spatial
pyramid pooling (scales 4, 2, 1) after the last, and a 2688 -> 2 classifier.
Pyramid pooling makes the classifier width independent of patch size.

The histogram-domain detector ("hcnn") consumes the 256-bin gray-level
histogram normalized to sum 1, shaped (1, 1, 256): two 1x3 conv blocks
(64 channels, batch norm, ReLU, no pooling) and fully connected layers of
widths 512, 1024, 2.
"""

from __future__ import annotations

import numpy as np

from .errors import InputTooSmall
from .nn import (
    SPP,
    AvgPool,
    BatchNorm,
    Checkpoint,
    Conv2d,
    FC,
    FixedHPF,
    Network,
    ReLU,
    SoftmaxLoss,
    require_same_spec,
)

PCNN_CHANNELS = (64, 16, 32, 128)
SPP_SCALES = (4, 2, 1)
SPP_FLAT = 128 * sum(s * s for s in SPP_SCALES)  # 2688
HCNN_WIDTHS = (512, 1024, 2)
MIN_PCNN_INPUT = 32


def build_pcnn(input_h: int = 128, input_w: int = 128, seed: int = 0,
               dtype=np.float32) -> Network:
    """Freshly initialized pixel-domain detector for input_h x input_w patches."""
    if input_h < MIN_PCNN_INPUT or input_w < MIN_PCNN_INPUT:
        raise InputTooSmall(
            f"pixel detector needs at least {MIN_PCNN_INPUT}x{MIN_PCNN_INPUT} input, "
            f"got {input_h}x{input_w}")
    rng = np.random.default_rng(seed)
    layers = [FixedHPF()]
    in_ch = 1
    for k, ch in enumerate(PCNN_CHANNELS):
        layers.append(Conv2d(in_ch, ch, (3, 3), (1, 1), (1, 1), rng=rng, dtype=dtype))
        layers.append(BatchNorm(ch, dtype=dtype))
        layers.append(ReLU())
        layers.append(SPP(SPP_SCALES) if k == len(PCNN_CHANNELS) - 1
                      else AvgPool((5, 5), (2, 2)))
        in_ch = ch
    layers.append(FC(SPP_FLAT, 2, rng=rng, dtype=dtype))
    layers.append(SoftmaxLoss(2))
    return Network("pcnn", layers, input_shape=(1, input_h, input_w), dtype=dtype)


def build_hcnn(seed: int = 0, dtype=np.float32) -> Network:
    """Freshly initialized histogram-domain detector (input (1, 1, 256), sum 1)."""
    rng = np.random.default_rng(seed)
    layers = [
        Conv2d(1, 64, (1, 3), (1, 1), (0, 1), rng=rng, dtype=dtype),
        BatchNorm(64, dtype=dtype),
        ReLU(),
        Conv2d(64, 64, (1, 3), (1, 1), (0, 1), rng=rng, dtype=dtype),
        BatchNorm(64, dtype=dtype),
        ReLU(),
        FC(64 * 256, HCNN_WIDTHS[0], rng=rng, dtype=dtype),
        ReLU(),
        FC(HCNN_WIDTHS[0], HCNN_WIDTHS[1], rng=rng, dtype=dtype),
        ReLU(),
        FC(HCNN_WIDTHS[1], HCNN_WIDTHS[2], rng=rng, dtype=dtype),
        SoftmaxLoss(2),
    ]
    return Network("hcnn", layers, input_shape=(1, 1, 256), dtype=dtype)


def build_model(name: str, input_h: int = 128, input_w: int = 128, seed: int = 0,
                dtype=np.float32) -> Network:
    if name == "pcnn":
        return build_pcnn(input_h, input_w, seed=seed, dtype=dtype)
    if name == "hcnn":
        return build_hcnn(seed=seed, dtype=dtype)
    raise ValueError(f"unknown model {name!r} (expected 'pcnn' or 'hcnn')")


def finetune_init(base: Checkpoint, target: Network) -> Network:
    """Initialize `target` from a checkpoint of the identical architecture.

    Copies all weights and batch-norm running statistics. The caller starts the
    iteration counter and optimizer velocity from zero; only the training data
    (for example its gamma level) is meant to differ.
    """
    require_same_spec(base, target)
    target.load_blocks(base.blocks)
    return target
