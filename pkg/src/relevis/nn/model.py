"""Model container: the fixed architecture, forward passes, and the
binary model file format (JSON header + little-endian float32 payload).
"""

import json
import struct

import numpy as np

from ..errors import DimsError, FormatError, IoError, ShapeError
from .layers import (LAYER_TYPES, BatchNorm3D, Conv3D, Dense, Dropout, Flatten,
                     MaxPool3D, ReLU, Softmax)

MODEL_MAGIC = b"RLVSMDL\x00"
MODEL_FORMAT_VERSION = 1


class Model:
    """An ordered layer stack over single-channel 3D input."""

    def __init__(self, layers, input_dims, seed=None, dtype=np.float32):
        self.layers = list(layers)
        self.input_dims = tuple(int(d) for d in input_dims)
        self.seed = seed
        self.dtype = np.dtype(dtype)

    def forward_batch(self, x, mode="infer", rng=None, update_stats=True):
        """Run a (batch, 1, x, y, z) array through the stack.

        Returns class probabilities and the per-layer activation trace
        needed by backward and relevance passes.
        """
        x = np.ascontiguousarray(x, dtype=self.dtype)
        if x.ndim != 5 or x.shape[1] != 1:
            raise ShapeError(f"expected (batch, 1, x, y, z) input, got {x.shape}")
        if x.shape[2:] != self.input_dims:
            raise DimsError(f"input dims {x.shape[2:]} do not match model {self.input_dims}")
        trace = []
        for layer in self.layers:
            cache = {}
            if isinstance(layer, BatchNorm3D):
                x = layer.forward(x, cache, mode, rng, update_stats=update_stats)
            else:
                x = layer.forward(x, cache, mode, rng)
            trace.append(cache)
        return x, trace

    def backward(self, dlogits, trace):
        """Backpropagate from the softmax input; returns gradients keyed
        (layer index, parameter name) plus the input gradient."""
        grads = {}
        g = dlogits
        for i in range(len(self.layers) - 2, -1, -1):
            g, pg = self.layers[i].backward(g, trace[i])
            for name, val in pg.items():
                grads[(i, name)] = val
        return g, grads

    def parameters(self):
        """Trainable arrays as an ordered list of ((layer, name), array)."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.parameters().items():
                out.append(((i, name), arr))
        return out

    def parameter_count(self):
        return int(sum(arr.size for _, arr in self.parameters()))

    def state_arrays(self):
        """Parameters plus persistent buffers, in declared layer order."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.parameters().items():
                out.append(((i, name), arr))
            if isinstance(layer, BatchNorm3D):
                for name, arr in layer.buffers().items():
                    out.append(((i, name), arr))
        return out

    def copy_state(self):
        return [arr.copy() for _, arr in self.state_arrays()]

    def load_state(self, arrays):
        pairs = self.state_arrays()
        if len(arrays) != len(pairs):
            raise ShapeError(f"expected {len(pairs)} state arrays, got {len(arrays)}")
        for ((_, _), dst), src in zip(pairs, arrays):
            if dst.shape != src.shape:
                raise ShapeError(f"state array shape {src.shape} does not match {dst.shape}")
            dst[...] = src

    def astype(self, dtype):
        """A structural clone of this model carrying the same values in
        another precision."""
        clone = Model(build_layer_stack([l.describe() for l in self.layers],
                                        np.random.default_rng(0), np.dtype(dtype)),
                      self.input_dims, self.seed, dtype)
        clone.load_state([a.astype(dtype) for a in self.copy_state()])
        return clone


def pooled_dims(input_dims, halvings=3):
    dims = tuple(input_dims)
    for _ in range(halvings):
        dims = tuple(d // 2 for d in dims)
    return dims


def build_layer_stack(descriptors, rng, dtype):
    layers = []
    for desc in descriptors:
        kind = desc["type"]
        if kind not in LAYER_TYPES:
            raise FormatError(f"unknown layer type {kind!r}")
        if kind == "conv3d":
            layers.append(Conv3D(desc["in"], desc["out"], tuple(desc["kernel"]),
                                 rng=rng, dtype=dtype))
        elif kind == "batchnorm3d":
            layers.append(BatchNorm3D(desc["channels"], desc["momentum"], desc["eps"],
                                      dtype=dtype))
        elif kind == "dropout":
            layers.append(Dropout(desc["rate"]))
        elif kind == "dense":
            layers.append(Dense(desc["in"], desc["out"], rng=rng, dtype=dtype))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "maxpool3d":
            layers.append(MaxPool3D())
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "softmax":
            layers.append(Softmax())
    return layers


def build_model(input_dims, seed=0, dtype=np.float32, conv_channels=5,
                dense_units=(64, 32), n_classes=2, dropout_rate=0.10,
                bn_momentum=0.9, bn_eps=1e-3):
    """The standard stack: three conv/pool/norm blocks, then three dense
    layers with dropout in front of each, closed by softmax.

    Each input dim must survive three halvings, i.e. be at least 8.
    """
    input_dims = tuple(int(d) for d in input_dims)
    if len(input_dims) != 3 or any(d < 8 for d in input_dims):
        raise ShapeError(f"input dims must be three values of at least 8, got {input_dims}")
    descriptors = []
    in_ch = 1
    for _ in range(3):
        descriptors.append({"type": "conv3d", "in": in_ch, "out": conv_channels,
                            "kernel": [3, 3, 3]})
        descriptors.append({"type": "relu"})
        descriptors.append({"type": "maxpool3d"})
        descriptors.append({"type": "batchnorm3d", "channels": conv_channels,
                            "momentum": bn_momentum, "eps": bn_eps})
        in_ch = conv_channels
    descriptors.append({"type": "flatten"})
    flat = int(np.prod(pooled_dims(input_dims))) * conv_channels
    units_in = flat
    for units in dense_units:
        descriptors.append({"type": "dropout", "rate": dropout_rate})
        descriptors.append({"type": "dense", "in": units_in, "out": units})
        descriptors.append({"type": "relu"})
        units_in = units
    descriptors.append({"type": "dropout", "rate": dropout_rate})
    descriptors.append({"type": "dense", "in": units_in, "out": n_classes})
    descriptors.append({"type": "softmax"})
    rng = np.random.default_rng(seed)
    return Model(build_layer_stack(descriptors, rng, np.dtype(dtype)), input_dims,
                 seed=seed, dtype=dtype)


def save_model(model, path):
    """Write a model file: magic, header length, JSON header, then all
    parameters and batch-norm statistics as little-endian float32."""
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "input_dims": list(model.input_dims),
        "seed": model.seed,
        "architecture": [layer.describe() for layer in model.layers],
        "arrays": [{"layer": i, "name": n, "shape": list(arr.shape)}
                   for (i, n), arr in model.state_arrays()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for _, arr in model.state_arrays():
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_model(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(raw) < len(MODEL_MAGIC) + 4 or raw[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file")
    (hlen,) = struct.unpack_from("<I", raw, len(MODEL_MAGIC))
    start = len(MODEL_MAGIC) + 4
    if len(raw) < start + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {header.get('format_version')}")
    model = Model(build_layer_stack(header["architecture"], np.random.default_rng(0),
                                    np.float32),
                  header["input_dims"], seed=header.get("seed"), dtype=np.float32)
    offset = start + hlen
    arrays = []
    for meta in header["arrays"]:
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        nbytes = count * 4
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: truncated parameter payload")
        arrays.append(np.frombuffer(raw, dtype="<f4", count=count,
                                    offset=offset).reshape(meta["shape"]).copy())
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after payload")
    model.load_state(arrays)
    return model
