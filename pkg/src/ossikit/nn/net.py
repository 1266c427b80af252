"""Layer graph with reverse-mode differentiation and NNC1 checkpoints.

A network is an ordered list of nodes; node i applies its layer to the
outputs of earlier nodes (input index -1 denotes the network input), and
the last node's output is the network output. Skip connections are just
nodes consumed twice; the backward pass sums gradients across consumers.

Checkpoint format "NNC1": magic ``NNC1``, little-endian uint32 version,
uint32 header length, a JSON header describing the ordered layer specs and
their input wiring, then for each parameter/buffer: uint16 name length,
name bytes, uint8 ndim, uint32 dims, raw 32-bit little-endian reals.
Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, ShapeError
from .layers import Layer, layer_from_spec

NNC1_MAGIC = b"NNC1"
NNC1_VERSION = 1


@dataclass
class Node:
    layer: Layer
    inputs: tuple[int, ...] = (-1,)


class Network:
    def __init__(self, nodes: list[Node], dtype=np.float32):
        self.nodes = nodes
        self.dtype = np.dtype(dtype)
        for i, node in enumerate(nodes):
            for j in node.inputs:
                if j >= i or j < -1:
                    raise ShapeError(f"node {i} consumes invalid input {j}")

    # -- parameter access -------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, node in enumerate(self.nodes):
            for key in node.layer.PARAM_ORDER:
                out[f"n{i:03d}.{key}"] = node.layer.params[key]
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, node in enumerate(self.nodes):
            for key in node.layer.BUFFER_ORDER:
                out[f"n{i:03d}.{key}"] = node.layer.buffers[key]
        return out

    def num_params(self) -> int:
        return sum(int(p.size) for p in self.params().values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {**self.params(), **self.buffers()}

    def copy_state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_arrays()
        if set(own) != set(state):
            raise FormatError("state keys do not match the network structure")
        for k, v in own.items():
            src = np.asarray(state[k], dtype=v.dtype)
            if src.shape != v.shape:
                raise FormatError(f"{k}: shape {src.shape} != expected {v.shape}")
            v[...] = src

    # -- execution ---------------------------------------------------------

    def forward(self, x: np.ndarray, training: bool = False, tape: dict | None = None) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=self.dtype)
        outputs: list[np.ndarray] = []
        caches: list = []
        for node in self.nodes:
            xs = [x if j == -1 else outputs[j] for j in node.inputs]
            y, cache = node.layer.forward(xs, training)
            outputs.append(y)
            caches.append(cache)
        if tape is not None:
            tape["outputs"] = outputs
            tape["caches"] = caches
            tape["training"] = training
        return outputs[-1]

    def backward(self, dy: np.ndarray, tape: dict) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        outputs, caches = tape["outputs"], tape["caches"]
        grad_out: list = [None] * len(self.nodes)
        grad_out[-1] = np.ascontiguousarray(dy, dtype=self.dtype)
        dx_input = None
        grads: dict[str, np.ndarray] = {}
        for i in range(len(self.nodes) - 1, -1, -1):
            g = grad_out[i]
            if g is None:
                continue  # dead branch
            node = self.nodes[i]
            dxs, pgrads = node.layer.backward(g, caches[i])
            for key, val in pgrads.items():
                grads[f"n{i:03d}.{key}"] = val
            for j, dx in zip(node.inputs, dxs):
                if j == -1:
                    dx_input = dx if dx_input is None else dx_input + dx
                elif grad_out[j] is None:
                    grad_out[j] = dx
                else:
                    grad_out[j] = grad_out[j] + dx
        for i, node in enumerate(self.nodes):
            for key in node.layer.PARAM_ORDER:
                grads.setdefault(f"n{i:03d}.{key}", np.zeros_like(node.layer.params[key]))
        return dx_input, grads

    # -- checkpoints ---------------------------------------------------------

    def graph_spec(self) -> list[dict]:
        return [{**node.layer.spec(), "inputs": list(node.inputs)} for node in self.nodes]

    def save(self, path) -> None:
        if self.dtype != np.float32:
            raise FormatError("NNC1 checkpoints store 32-bit reals; cast the network to float32")
        header = json.dumps({"nodes": self.graph_spec()}).encode("utf-8")
        entries = self.state_arrays()
        with open(path, "wb") as f:
            f.write(NNC1_MAGIC)
            f.write(struct.pack("<II", NNC1_VERSION, len(header)))
            f.write(header)
            f.write(struct.pack("<I", len(entries)))
            for name, arr in entries.items():
                nb = name.encode("utf-8")
                f.write(struct.pack("<H", len(nb)))
                f.write(nb)
                f.write(struct.pack("<B", arr.ndim))
                f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "Network":
        with open(path, "rb") as f:
            blob = f.read()
        if len(blob) < 12 or blob[:4] != NNC1_MAGIC:
            raise FormatError(f"{path}: not an NNC1 checkpoint")
        version, hlen = struct.unpack("<II", blob[4:12])
        if version != NNC1_VERSION:
            raise FormatError(f"{path}: unsupported NNC1 version {version}")
        if len(blob) < 12 + hlen + 4:
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(blob[12 : 12 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: corrupt header") from e
        nodes = []
        for spec in header["nodes"]:
            spec = dict(spec)
            inputs = tuple(spec.pop("inputs"))
            nodes.append(Node(layer_from_spec(spec), inputs))
        net = cls(nodes, dtype=np.float32)

        off = 12 + hlen
        (count,) = struct.unpack_from("<I", blob, off)
        off += 4
        state: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", blob, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            if off + 4 * size > len(blob):
                raise FormatError(f"{path}: truncated payload for {name}")
            arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(shape)
            off += 4 * size
            state[name] = arr.astype(np.float32)
        net.load_state(state)
        return net
