"""Checkpoint file format.

Layout: 4-byte magic "CEF1", a 4-byte little-endian header length, a UTF-8
JSON header describing the model (name, iteration, input shape, ordered layer
specs, block names and shapes), then the raw parameter and running-statistics
blocks as little-endian 32-bit floats in declaration order. Save/load
roundtrips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import BadMagic, IoFailure, SpecMismatch
from .network import Network, from_layer_specs

MAGIC = b"CEF1"


@dataclass
class Checkpoint:
    model: str
    iteration: int
    input_shape: tuple | None
    layer_specs: list[dict]
    block_names: list[str]
    blocks: list[np.ndarray]  # float32 arrays in declaration order

    def build(self, dtype=np.float32) -> Network:
        """Reconstruct a network instance carrying this checkpoint's parameters."""
        net = from_layer_specs(self.model, self.layer_specs,
                               input_shape=self.input_shape, dtype=dtype)
        net.load_blocks(self.blocks)
        return net


def checkpoint_from_network(net: Network, iteration: int) -> Checkpoint:
    names, arrays = [], []
    for name, arr in net.blocks():
        names.append(name)
        arrays.append(np.ascontiguousarray(arr, dtype=np.float32))
    return Checkpoint(net.name, int(iteration), net.input_shape,
                      net.layer_specs(), names, arrays)


def save_checkpoint(net: Network, iteration: int, path) -> Checkpoint:
    ckpt = checkpoint_from_network(net, iteration)
    header = {
        "model": ckpt.model,
        "iteration": ckpt.iteration,
        "input_shape": list(ckpt.input_shape) if ckpt.input_shape else None,
        "layers": ckpt.layer_specs,
        "blocks": [{"name": n, "shape": list(a.shape)}
                   for n, a in zip(ckpt.block_names, ckpt.blocks)],
    }
    payload = json.dumps(header).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)
            for arr in ckpt.blocks:
                fh.write(arr.astype("<f4").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc
    return ckpt


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise BadMagic(f"{path} is not a checkpoint (bad or missing magic)")
    (hlen,) = struct.unpack("<I", buf[4:8])
    if len(buf) < 8 + hlen:
        raise BadMagic(f"{path}: truncated header")
    try:
        header = json.loads(buf[8 : 8 + hlen].decode("utf-8"))
        model = header["model"]
        iteration = int(header["iteration"])
        input_shape = tuple(header["input_shape"]) if header["input_shape"] else None
        layer_specs = header["layers"]
        block_meta = header["blocks"]
    except (ValueError, KeyError, TypeError) as exc:
        raise BadMagic(f"{path}: unreadable header: {exc}") from exc

    pos = 8 + hlen
    names, arrays = [], []
    for meta in block_meta:
        shape = tuple(int(d) for d in meta["shape"])
        nbytes = 4 * int(np.prod(shape)) if shape else 4
        chunk = buf[pos : pos + nbytes]
        if len(chunk) < nbytes:
            raise IoFailure(f"{path}: truncated block {meta['name']}")
        names.append(meta["name"])
        arrays.append(np.frombuffer(chunk, dtype="<f4").reshape(shape).copy())
        pos += nbytes
    return Checkpoint(model, iteration, input_shape, layer_specs, names, arrays)


def require_same_spec(ckpt: Checkpoint, net: Network) -> None:
    """Raise SpecMismatch unless the checkpoint matches the network architecture."""
    if ckpt.model != net.name or ckpt.layer_specs != net.layer_specs():
        raise SpecMismatch(
            f"checkpoint architecture ({ckpt.model}) does not match network ({net.name})")
