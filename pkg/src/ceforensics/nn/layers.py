"""Network layers: forward/backward pairs over channels-last float arrays.

Layers exchange activations as (N, H, W, C) arrays; the Network front end
converts from the public (N, C, H, W) contract once per pass. Channels-last
keeps convolution GEMM operands contiguous and makes per-channel normalization
touch contiguous memory.

Two conventions keep the engine fast on CPU without changing its semantics:

* Buffer reuse. Each layer owns a small pool of output/scratch arrays keyed by
  shape and reuses them across calls, because freshly allocated multi-megabyte
  arrays cost more in page faults than the arithmetic written into them.
  Activations flow linearly through the stack and every cache is consumed by
  the same iteration's backward pass, so overwriting a buffer on the next call
  is safe. Consequence: arrays returned by forward/backward are only valid
  until the layer runs again; callers that keep results must copy.
* In-place ReLU. No layer caches its own output, so the activation buffer
  entering ReLU is exclusively owned by the chain and is clamped in place.

Every layer computes in the dtype of its parameters (float32 in production,
float64 for gradient checking) and releases consumed caches. Reductions use
fixed summation orders, so results are run-to-run deterministic on one
platform.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch, StaleCache


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


class Layer:
    kind = "layer"

    def forward(self, x, train=False, update_stats=True):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def params(self) -> list[tuple[str, np.ndarray]]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def state(self) -> list[tuple[str, np.ndarray]]:
        return []

    def spec(self) -> dict:
        return {"kind": self.kind}

    @classmethod
    def from_spec(cls, spec: dict, dtype=np.float32) -> "Layer":
        return cls()

    def _buf(self, name: str, shape, dtype) -> np.ndarray:
        """Reusable scratch array; contents are garbage until written."""
        pool = self.__dict__.setdefault("_pool", {})
        key = (name, tuple(shape), np.dtype(dtype).str)
        buf = pool.get(key)
        if buf is None:
            if len(pool) > 16:  # unbounded shape churn (e.g. per-image inference)
                pool.clear()
            buf = np.empty(shape, dtype=dtype)
            pool[key] = buf
        return buf

    def _zeros(self, name: str, shape, dtype) -> np.ndarray:
        buf = self._buf(name, shape, dtype)
        buf.fill(0)
        return buf


class FixedHPF(Layer):
    """Horizontal first-difference front end, correlation with [1, -1].

    out[..., i] = x[..., i] - x[..., i+1] along the width axis; valid extent,
    output width W-1. The kernel is an architecture constant, never trained.
    """

    kind = "fixed_hpf"
    KERNEL = (1.0, -1.0)

    def __init__(self):
        self._xshape = None

    def forward(self, x, train=False, update_stats=True):
        if x.ndim != 4 or x.shape[2] < 2:
            raise ShapeMismatch(f"need (N, H, W>=2, C) input, got {x.shape}")
        self._xshape = x.shape if train else None
        n, h, w, c = x.shape
        y = self._buf("y", (n, h, w - 1, c), x.dtype)
        np.subtract(x[:, :, :-1, :], x[:, :, 1:, :], out=y)
        return y

    def backward(self, dy):
        if self._xshape is None:
            raise StaleCache("backward without a train-mode forward")
        dx = self._zeros("dx", self._xshape, dy.dtype)
        dx[:, :, :-1, :] += dy
        dx[:, :, 1:, :] -= dy
        self._xshape = None
        return dx


class Conv2d(Layer):
    """2-D convolution in correlation convention (no kernel flip), zero padding.

    Weights are stored (kh, kw, C, OC). Narrow patch rows (few input channels)
    go through one im2col GEMM; wide ones accumulate one GEMM per kernel
    offset over contiguous shifted slabs, which keeps peak scratch memory at
    one (N*OH*OW, C) slab regardless of batch size.
    """

    kind = "conv"

    # patch matrices up to this many columns use the explicit im2col GEMM
    _SMALL_K = 48

    def __init__(self, in_channels, out_channels, kernel, stride=(1, 1), pad=(0, 0),
                 rng=None, dtype=np.float32):
        kh, kw = kernel
        if kh <= 0 or kw <= 0 or stride[0] <= 0 or stride[1] <= 0:
            raise ValueError("kernel and stride must be positive")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel = (int(kh), int(kw))
        self.stride = (int(stride[0]), int(stride[1]))
        self.pad = (int(pad[0]), int(pad[1]))
        fan_in = self.in_channels * kh * kw
        if rng is None:
            self.w = np.zeros((kh, kw, in_channels, out_channels), dtype=dtype)
        else:
            std = np.sqrt(2.0 / fan_in)
            self.w = (rng.standard_normal((kh, kw, in_channels, out_channels)) * std
                      ).astype(dtype)
        self.b = np.zeros(out_channels, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def _out_hw(self, h, w):
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.pad
        oh = (h + 2 * ph - kh) // sh + 1
        ow = (w + 2 * pw - kw) // sw + 1
        if oh <= 0 or ow <= 0:
            raise ShapeMismatch(f"kernel {self.kernel} does not fit input {h}x{w}")
        return oh, ow

    def _padded(self, x):
        ph, pw = self.pad
        if not (ph or pw):
            return x
        n, h, w, c = x.shape
        xp = self._zeros("xp", (n, h + 2 * ph, w + 2 * pw, c), x.dtype)
        xp[:, ph : ph + h, pw : pw + w, :] = x
        return xp

    def forward(self, x, train=False, update_stats=True):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeMismatch(
                f"expected (N, H, W, {self.in_channels}) input, got {x.shape}")
        n, h, w, c = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        oh, ow = self._out_hw(h, w)
        xp = self._padded(x)
        y = self._buf("y", (n, oh, ow, self.out_channels), self.w.dtype)
        yf = y.reshape(-1, self.out_channels)
        if kh * kw * c <= self._SMALL_K:
            cols = self._buf("cols", (n, oh, ow, kh, kw, c), xp.dtype)
            for i in range(kh):
                for j in range(kw):
                    cols[:, :, :, i, j, :] = \
                        xp[:, i : i + sh * oh : sh, j : j + sw * ow : sw, :]
            np.matmul(cols.reshape(-1, kh * kw * c),
                      self.w.reshape(-1, self.out_channels), out=yf)
        else:
            slab = self._buf("slab", (n, oh, ow, c), xp.dtype)
            tmp = self._buf("tmp", yf.shape, yf.dtype)
            for i in range(kh):
                for j in range(kw):
                    np.copyto(slab, xp[:, i : i + sh * oh : sh, j : j + sw * ow : sw, :])
                    if i == 0 and j == 0:
                        np.matmul(slab.reshape(-1, c), self.w[i, j], out=yf)
                    else:
                        np.matmul(slab.reshape(-1, c), self.w[i, j], out=tmp)
                        yf += tmp
        y += self.b
        self._x = x if train else None
        return y

    def backward(self, dy):
        if self._x is None:
            raise StaleCache("backward without a train-mode forward")
        x = self._x
        n, h, w, c = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.pad
        oh, ow = self._out_hw(h, w)
        xp = self._padded(x)
        dyf = dy.reshape(-1, self.out_channels)
        self.dw = np.zeros_like(self.w)
        self.db = dy.sum(axis=(0, 1, 2))
        dxp = self._zeros("dxp", (n, h + 2 * ph, w + 2 * pw, c), dy.dtype)
        slab = self._buf("slab", (n, oh, ow, c), xp.dtype)
        dslab = self._buf("dslab", (n * oh * ow, c), dy.dtype)
        for i in range(kh):
            for j in range(kw):
                np.copyto(slab, xp[:, i : i + sh * oh : sh, j : j + sw * ow : sw, :])
                np.matmul(slab.reshape(-1, c).T, dyf, out=self.dw[i, j])
                np.matmul(dyf, self.w[i, j].T, out=dslab)
                dxp[:, i : i + sh * oh : sh, j : j + sw * ow : sw, :] += \
                    dslab.reshape(n, oh, ow, c)
        self._x = None
        if ph or pw:
            dx = self._buf("dx", (n, h, w, c), dy.dtype)
            np.copyto(dx, dxp[:, ph : ph + h, pw : pw + w, :])
            return dx
        return dxp

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]

    def spec(self):
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "pad": list(self.pad),
        }

    @classmethod
    def from_spec(cls, spec, dtype=np.float32):
        return cls(spec["in_channels"], spec["out_channels"], spec["kernel"],
                   spec["stride"], spec["pad"], rng=None, dtype=dtype)


class BatchNorm(Layer):
    """Per-channel batch normalization over (N, H, W) with running statistics.

    Train mode normalizes by batch mean and biased variance and folds the
    batch statistics into the running averages (retain fraction = momentum);
    infer mode normalizes by the running statistics. The normalize-scale-shift
    chain is applied as a single folded affine map per channel.
    """

    kind = "batchnorm"

    def __init__(self, channels, epsilon=1e-5, momentum=0.9, dtype=np.float32):
        if epsilon <= 0 or not 0 < momentum < 1:
            raise ValueError("need epsilon > 0 and momentum in (0, 1)")
        self.channels = int(channels)
        self.epsilon = float(epsilon)
        self.momentum = float(momentum)
        self.scale = np.ones(channels, dtype=dtype)
        self.bias = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.dscale = np.zeros_like(self.scale)
        self.dbias = np.zeros_like(self.bias)
        self._cache = None

    def forward(self, x, train=False, update_stats=True):
        if x.ndim != 4 or x.shape[3] != self.channels:
            raise ShapeMismatch(f"expected (N, H, W, {self.channels}), got {x.shape}")
        m = x.shape[0] * x.shape[1] * x.shape[2]
        if train:
            s1 = np.einsum("nhwc->c", x)
            s2 = np.einsum("nhwc,nhwc->c", x, x)
            mu = s1 / m
            var = np.maximum(s2 / m - mu * mu, 0.0)
            if update_stats:
                keep = self.momentum
                self.running_mean[:] = keep * self.running_mean + (1 - keep) * mu
                self.running_var[:] = keep * self.running_var + (1 - keep) * var
        else:
            mu = self.running_mean.astype(x.dtype)
            var = self.running_var.astype(x.dtype)
        inv = 1.0 / np.sqrt(var + self.epsilon)
        a = inv * self.scale
        y = self._buf("y", x.shape, x.dtype)
        np.multiply(x, a, out=y)
        y += self.bias - mu * a
        if train:
            self._cache = (x, mu, inv, m)
        return y

    def backward(self, dy):
        if self._cache is None:
            raise StaleCache("backward without a train-mode forward")
        x, mu, inv, m = self._cache
        self.dbias = np.einsum("nhwc->c", dy)
        sxy = np.einsum("nhwc,nhwc->c", dy, x)
        self.dscale = inv * (sxy - mu * self.dbias)
        k1 = self.scale * inv
        k2 = self.scale * inv * inv * self.dscale / m
        dx = self._buf("dx", x.shape, dy.dtype)
        np.multiply(dy, k1, out=dx)
        tmp = self._buf("tmp", x.shape, dy.dtype)
        np.multiply(x, k2, out=tmp)
        dx -= tmp
        dx += mu * k2 - k1 * self.dbias / m
        self._cache = None
        return dx

    def params(self):
        return [("scale", self.scale), ("bias", self.bias)]

    def grads(self):
        return [self.dscale, self.dbias]

    def state(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def spec(self):
        return {"kind": self.kind, "channels": self.channels,
                "epsilon": self.epsilon, "momentum": self.momentum}

    @classmethod
    def from_spec(cls, spec, dtype=np.float32):
        return cls(spec["channels"], spec["epsilon"], spec["momentum"], dtype=dtype)


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._mask = None

    def forward(self, x, train=False, update_stats=True):
        np.maximum(x, 0, out=x)
        if train:
            mask = self._buf("mask", x.shape, bool)
            np.greater(x, 0, out=mask)
            self._mask = mask
        return x

    def backward(self, dy):
        if self._mask is None:
            raise StaleCache("backward without a train-mode forward")
        dy *= self._mask
        self._mask = None
        return dy


class AvgPool(Layer):
    """Average pooling with ceiling-mode output sizing and edge-clipped windows.

    Output size is ceil((in - k)/stride) + 1; windows hanging past the border
    average over the pixels they actually cover. The window sum separates into
    a row accumulation followed by a column accumulation (k + k shifted adds
    instead of k*k), and the element count factorizes the same way.
    """

    kind = "avgpool"

    def __init__(self, kernel=(5, 5), stride=(2, 2)):
        self.kernel = (int(kernel[0]), int(kernel[1]))
        self.stride = (int(stride[0]), int(stride[1]))
        self._cache = None

    def _geometry(self, h, w):
        kh, kw = self.kernel
        sh, sw = self.stride
        if h < kh or w < kw:
            raise ShapeMismatch(f"pool kernel {self.kernel} exceeds input {h}x{w}")
        oh = _ceil_div(h - kh, sh) + 1
        ow = _ceil_div(w - kw, sw) + 1
        return oh, ow

    def _counts(self, h, w, oh, ow, dtype):
        kh, kw = self.kernel
        sh, sw = self.stride
        rows = np.minimum(np.arange(oh) * sh + kh, h) - np.arange(oh) * sh
        cols = np.minimum(np.arange(ow) * sw + kw, w) - np.arange(ow) * sw
        return (rows[:, None] * cols[None, :]).astype(dtype)

    def forward(self, x, train=False, update_stats=True):
        if x.ndim != 4:
            raise ShapeMismatch(f"need 4-D input, got {x.shape}")
        n, h, w, c = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        oh, ow = self._geometry(h, w)
        racc = self._zeros("racc", (n, oh, w, c), x.dtype)
        for di in range(kh):
            ni = min(oh, _ceil_div(h - di, sh))
            racc[:, :ni, :, :] += x[:, di : di + sh * ni : sh, :, :]
        y = self._zeros("y", (n, oh, ow, c), x.dtype)
        for dj in range(kw):
            nj = min(ow, _ceil_div(w - dj, sw))
            y[:, :, :nj, :] += racc[:, :, dj : dj + sw * nj : sw, :]
        cnt = self._counts(h, w, oh, ow, x.dtype)
        y /= cnt[None, :, :, None]
        if train:
            self._cache = (x.shape, cnt)
        return y

    def backward(self, dy):
        if self._cache is None:
            raise StaleCache("backward without a train-mode forward")
        xshape, cnt = self._cache
        n, h, w, c = xshape
        kh, kw = self.kernel
        sh, sw = self.stride
        oh, ow = dy.shape[1], dy.shape[2]
        dy /= cnt[None, :, :, None]
        dracc = self._zeros("dracc", (n, oh, w, c), dy.dtype)
        for dj in range(kw):
            nj = min(ow, _ceil_div(w - dj, sw))
            dracc[:, :, dj : dj + sw * nj : sw, :] += dy[:, :, :nj, :]
        dx = self._zeros("dx", xshape, dy.dtype)
        for di in range(kh):
            ni = min(oh, _ceil_div(h - di, sh))
            dx[:, di : di + sh * ni : sh, :, :] += dracc[:, :ni, :, :]
        self._cache = None
        return dx

    def spec(self):
        return {"kind": self.kind, "kernel": list(self.kernel), "stride": list(self.stride)}

    @classmethod
    def from_spec(cls, spec, dtype=np.float32):
        return cls(spec["kernel"], spec["stride"])


class SPP(Layer):
    """Spatial pyramid pooling: average pooling on fixed grids of each scale.

    For scale s the input is partitioned into s x s adaptive windows
    [floor(i*H/s), ceil((i+1)*H/s)), so any spatial input size yields the same
    flat feature length: channels * sum(s^2). Output is (N, C * sum(s^2)) with
    the channel index varying slowest.
    """

    kind = "spp"

    def __init__(self, scales=(4, 2, 1)):
        scales = tuple(int(s) for s in scales)
        if not scales or any(s <= 0 for s in scales):
            raise ValueError("scales must be positive integers")
        if list(scales) != sorted(scales, reverse=True) or len(set(scales)) != len(scales):
            raise ValueError("scales must be strictly decreasing")
        self.scales = scales
        self.bins = sum(s * s for s in scales)
        self._cache = None

    def _windows(self, h, w):
        wins = []
        for s in self.scales:
            for i in range(s):
                r0, r1 = (i * h) // s, _ceil_div((i + 1) * h, s)
                for j in range(s):
                    c0, c1 = (j * w) // s, _ceil_div((j + 1) * w, s)
                    wins.append((r0, r1, c0, c1))
        return wins

    def forward(self, x, train=False, update_stats=True):
        if x.ndim != 4:
            raise ShapeMismatch(f"need 4-D input, got {x.shape}")
        n, h, w, c = x.shape
        wins = self._windows(h, w)
        feats = self._buf("feats", (n, c, self.bins), x.dtype)
        for k, (r0, r1, c0, c1) in enumerate(wins):
            feats[:, :, k] = x[:, r0:r1, c0:c1, :].mean(axis=(1, 2))
        if train:
            self._cache = (x.shape, wins)
        return feats.reshape(n, c * self.bins)

    def backward(self, dy):
        if self._cache is None:
            raise StaleCache("backward without a train-mode forward")
        xshape, wins = self._cache
        n, c = xshape[0], xshape[3]
        d3 = dy.reshape(n, c, self.bins)
        dx = self._zeros("dx", xshape, dy.dtype)
        for k, (r0, r1, c0, c1) in enumerate(wins):
            area = (r1 - r0) * (c1 - c0)
            dx[:, r0:r1, c0:c1, :] += (d3[:, :, k] / area)[:, None, None, :]
        self._cache = None
        return dx

    def spec(self):
        return {"kind": self.kind, "scales": list(self.scales)}

    @classmethod
    def from_spec(cls, spec, dtype=np.float32):
        return cls(spec["scales"])


class FC(Layer):
    """Fully connected layer; flattens non-2D inputs."""

    kind = "fc"

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        if rng is None:
            self.w = np.zeros((in_features, out_features), dtype=dtype)
        else:
            std = np.sqrt(2.0 / in_features)
            self.w = (rng.standard_normal((in_features, out_features)) * std).astype(dtype)
        self.b = np.zeros(out_features, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def forward(self, x, train=False, update_stats=True):
        orig_shape = x.shape
        x2 = x.reshape(orig_shape[0], -1)
        if x2.shape[1] != self.in_features:
            raise ShapeMismatch(
                f"expected {self.in_features} features, got {x2.shape[1]} from {orig_shape}")
        if train:
            self._cache = (x2, orig_shape)
        y = self._buf("y", (x2.shape[0], self.out_features), self.w.dtype)
        np.matmul(x2, self.w, out=y)
        y += self.b
        return y

    def backward(self, dy):
        if self._cache is None:
            raise StaleCache("backward without a train-mode forward")
        x2, orig_shape = self._cache
        self.dw = self._buf("dw", self.w.shape, self.w.dtype)
        np.matmul(x2.T, dy, out=self.dw)
        self.db = dy.sum(axis=0)
        dx = self._buf("dx", x2.shape, dy.dtype)
        np.matmul(dy, self.w.T, out=dx)
        self._cache = None
        return dx.reshape(orig_shape)

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features,
                "out_features": self.out_features}

    @classmethod
    def from_spec(cls, spec, dtype=np.float32):
        return cls(spec["in_features"], spec["out_features"], rng=None, dtype=dtype)


class SoftmaxLoss(Layer):
    """Terminal marker recording the class count; passes logits through.

    The loss value and its gradient are computed by loss_softmax_xent, which
    keeps the forward path usable for inference.
    """

    kind = "softmax_loss"

    def __init__(self, num_classes=2):
        self.num_classes = int(num_classes)

    def forward(self, x, train=False, update_stats=True):
        if x.ndim != 2 or x.shape[1] != self.num_classes:
            raise ShapeMismatch(f"expected (N, {self.num_classes}) logits, got {x.shape}")
        return x

    def backward(self, dy):
        return dy

    def spec(self):
        return {"kind": self.kind, "num_classes": self.num_classes}

    @classmethod
    def from_spec(cls, spec, dtype=np.float32):
        return cls(spec["num_classes"])


LAYER_KINDS = {
    cls.kind: cls
    for cls in (FixedHPF, Conv2d, BatchNorm, ReLU, AvgPool, SPP, FC, SoftmaxLoss)
}


def layer_from_spec(spec: dict, dtype=np.float32) -> Layer:
    kind = spec.get("kind")
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    return LAYER_KINDS[kind].from_spec(spec, dtype=dtype)
