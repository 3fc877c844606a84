"""Network container: ordered layers, forward/backward, softmax cross-entropy."""

from __future__ import annotations

import numpy as np

from ..errors import LabelOutOfRange, NonFiniteActivation, ShapeMismatch, StaleCache
from .layers import Layer, layer_from_spec

_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle per-layer finite-value guards (off by default; costs a pass over data)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


class Network:
    """An ordered stack of layers with a name and an input contract.

    The public interface exchanges activations as (N, C, H, W); internally the
    layers run channels-last, and forward/backward convert at the boundary.
    """

    def __init__(self, name: str, layers: list[Layer], input_shape=None, dtype=np.float32):
        self.name = name
        self.layers = list(layers)
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        self.dtype = np.dtype(dtype)
        self._ready = False

    def forward(self, x, train=False, update_stats=True) -> np.ndarray:
        out = np.asarray(x, dtype=self.dtype)
        if out.ndim != 4:
            raise ShapeMismatch(f"network input must be (N, C, H, W), got {out.shape}")
        out = np.ascontiguousarray(out.transpose(0, 2, 3, 1))
        for i, layer in enumerate(self.layers):
            out = layer.forward(out, train=train, update_stats=update_stats)
            if _DEBUG_CHECKS and not np.isfinite(out).all():
                raise NonFiniteActivation(
                    f"non-finite activation after layer {i} ({layer.kind}) in {self.name}")
        self._ready = train
        return out

    def backward(self, dlogits) -> np.ndarray:
        if not self._ready:
            raise StaleCache("backward requires a preceding train-mode forward")
        grad = np.asarray(dlogits, dtype=self.dtype)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        self._ready = False
        return np.ascontiguousarray(grad.transpose(0, 3, 1, 2))

    # ---- parameter bookkeeping ----

    def params(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params():
                out.append((f"{i}.{layer.kind}.{name}", arr))
        return out

    def param_arrays(self) -> list[np.ndarray]:
        return [arr for _, arr in self.params()]

    def grad_arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.grads())
        return out

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        """Parameters plus persistent state, in declaration order (checkpoint layout)."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params() + layer.state():
                out.append((f"{i}.{layer.kind}.{name}", arr))
        return out

    def layer_specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def load_blocks(self, arrays: list[np.ndarray]) -> None:
        """Copy saved blocks into this network's parameters and state, in order."""
        targets = self.blocks()
        if len(arrays) != len(targets):
            raise ShapeMismatch(
                f"checkpoint holds {len(arrays)} blocks, network expects {len(targets)}")
        for (name, dst), src in zip(targets, arrays):
            if tuple(src.shape) != tuple(dst.shape):
                raise ShapeMismatch(
                    f"block {name}: checkpoint shape {src.shape} vs network {dst.shape}")
            dst[...] = src.astype(self.dtype)


def from_layer_specs(name: str, specs: list[dict], input_shape=None,
                     dtype=np.float32) -> Network:
    return Network(name, [layer_from_spec(s, dtype=dtype) for s in specs],
                   input_shape=input_shape, dtype=dtype)


def loss_softmax_xent(logits, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient with respect to the logits.

    Gradient is (softmax - onehot)/N in the dtype of the logits.
    """
    z = np.asarray(logits)
    if z.ndim != 2:
        raise ShapeMismatch(f"logits must be (N, classes), got {z.shape}")
    n, k = z.shape
    y = np.asarray(labels)
    if y.shape != (n,):
        raise ShapeMismatch(f"labels must be ({n},), got {y.shape}")
    y = y.astype(np.int64)
    if (y < 0).any() or (y >= k).any():
        raise LabelOutOfRange(f"labels must lie in [0, {k})")

    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    denom = ez.sum(axis=1, keepdims=True)
    p = ez / denom
    logp = (z - zmax) - np.log(denom)
    loss = float(-logp[np.arange(n), y].mean())

    grad = p.copy()
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, grad.astype(z.dtype)
