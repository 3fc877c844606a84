#!/usr/bin/env python3
# A look inside the network engine: the two architectures layer by layer,
# pyramid pooling's size independence, and finite-difference verification of
# the backward pass.

import numpy as np

from ceforensics.models import build_hcnn, build_pcnn
from ceforensics.nn import grad_check

# The pixel-domain detector starts with a frozen [1, -1] horizontal
# difference, then four conv blocks; pyramid pooling gives the classifier a
# fixed 2688-wide input whatever the patch size.
net = build_pcnn(64, 64, seed=0)
print("pixel-domain detector:")
for i, layer in enumerate(net.layers):
    extra = ""
    if layer.kind == "conv":
        extra = f" {layer.in_channels}->{layer.out_channels} k{layer.kernel}"
    if layer.kind == "fc":
        extra = f" {layer.in_features}->{layer.out_features}"
    print(f"  {i:2d} {layer.kind}{extra}")

for hw in (32, 64, 128):
    p = build_pcnn(hw, hw, seed=0)
    out = p.forward(np.random.default_rng(0).random((1, 1, hw, hw), dtype=np.float32))
    print(f"  input {hw}x{hw} -> logits {out.shape}")

print("\nhistogram-domain detector:")
for i, layer in enumerate(build_hcnn(seed=0).layers):
    extra = ""
    if layer.kind == "conv":
        extra = f" {layer.in_channels}->{layer.out_channels} k{layer.kernel}"
    if layer.kind == "fc":
        extra = f" {layer.in_features}->{layer.out_features}"
    print(f"  {i:2d} {layer.kind}{extra}")

# Gradient checking runs the whole engine in float64 and compares every
# backpropagated derivative against central differences.
rng = np.random.default_rng(0)
labels = np.array([0, 1, 0, 1])

h = rng.random((4, 1, 1, 256))
h /= h.sum(axis=3, keepdims=True)
err = grad_check(build_hcnn(seed=1, dtype=np.float64), h, labels,
                 samples_per_array=8, seed=0)
print(f"\nhistogram detector max relative gradient error: {err:.2e}")

x = rng.random((4, 1, 32, 32))
err = grad_check(build_pcnn(32, 32, seed=1, dtype=np.float64), x, labels,
                 samples_per_array=8, seed=0)
print(f"pixel detector max relative gradient error:     {err:.2e}")
