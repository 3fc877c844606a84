"""Central finite-difference verification of the backward pass."""

from __future__ import annotations

import numpy as np

from .layers import BatchNorm, Conv2d, ReLU
from .network import Network, loss_softmax_xent


def _loss(net: Network, batch, labels) -> tuple[float, list[np.ndarray]]:
    # train-mode forward (batch statistics) without touching running averages,
    # so repeated evaluations see the identical deterministic loss surface.
    # Also returns the ReLU activation masks: central differences are only
    # valid where the loss is smooth, so a mask flip marks an unusable sample.
    logits = net.forward(batch, train=True, update_stats=False)
    loss, _ = loss_softmax_xent(logits, labels)
    # copies: the layers reuse their mask buffers on the next forward pass
    masks = [layer._mask.copy() for layer in net.layers if isinstance(layer, ReLU)]
    return loss, masks


def _degenerate_params(net: Network) -> set[int]:
    # A convolution bias feeding straight into batch normalization shifts a
    # channel by a constant that the normalizer subtracts again: the loss is
    # exactly invariant there, both gradients are roundoff noise, and a
    # relative error between them is meaningless. Excluded from sampling.
    skip: set[int] = set()
    for i, layer in enumerate(net.layers):
        if (isinstance(layer, Conv2d) and i + 1 < len(net.layers)
                and isinstance(net.layers[i + 1], BatchNorm)):
            skip.add(id(layer.b))
    return skip


def grad_check(net: Network, batch, labels, epsilon: float = 1e-5,
               samples_per_array: int = 24, seed: int = 0) -> float:
    """Max relative error between analytic and numeric gradients.

    Perturbs a random sample of entries in every parameter array (central
    differences, step epsilon*(1+|w|)) and compares against the gradients from
    one backward pass. Relative error is |a - n| / max(|a|, |n|, 1e-12). Run on
    a float64 network; float32 arithmetic cannot meet tight tolerances.
    Parameters along directions the loss provably ignores (conv bias directly
    before batch norm) are not sampled, and samples whose perturbation flips a
    ReLU activation mask are discarded: the difference quotient does not
    estimate a derivative across a kink.
    """
    if net.dtype != np.float64:
        raise ValueError("grad_check needs a float64 network (build with dtype=np.float64)")
    batch = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels)

    logits = net.forward(batch, train=True, update_stats=False)
    _, dlogits = loss_softmax_xent(logits, labels)
    net.backward(dlogits)
    analytic = [g.copy() for g in net.grad_arrays()]
    skip = _degenerate_params(net)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for arr, grad in zip(net.param_arrays(), analytic):
        if id(arr) in skip:
            continue
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        n_samples = min(samples_per_array, flat.size)
        idx = rng.choice(flat.size, size=n_samples, replace=False)
        for i in idx:
            w0 = flat[i]
            h = epsilon * (1.0 + abs(w0))
            flat[i] = w0 + h
            lp, masks_p = _loss(net, batch, labels)
            flat[i] = w0 - h
            lm, masks_m = _loss(net, batch, labels)
            flat[i] = w0
            if any(not np.array_equal(mp, mm) for mp, mm in zip(masks_p, masks_m)):
                continue
            numeric = (lp - lm) / (2.0 * h)
            rel = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-12)
            worst = max(worst, rel)
    return worst
