"""Layer implementations for the 3D convolutional classifier.

Each layer is stateless across passes: forward writes whatever backward
or relevance propagation will need into a per-pass cache dict, so
concurrent passes over one model never share mutable state. Parameter
gradients are returned by backward rather than stored on the layer.
"""

import numpy as np

from .. import backend
from ..errors import ShapeError


class Conv3D:
    """'Same'-padded 3D correlation with a bank of small kernels."""

    def __init__(self, in_channels, out_channels, kernel=(3, 3, 3), rng=None, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = tuple(kernel)
        fan_in = in_channels * int(np.prod(kernel))
        fan_out = out_channels * int(np.prod(kernel))
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        rng = rng or np.random.default_rng()
        self.w = rng.uniform(-limit, limit, (out_channels, in_channels) + self.kernel).astype(dtype)
        self.b = np.zeros(out_channels, dtype=dtype)

    def parameters(self):
        return {"w": self.w, "b": self.b}

    def describe(self):
        return {"type": "conv3d", "in": self.in_channels, "out": self.out_channels,
                "kernel": list(self.kernel)}

    def forward(self, x, cache, mode="infer", rng=None):
        cache["x"] = x
        return backend.conv3d(x, self.w, self.b)

    def backward(self, gy, cache):
        gw, gb = backend.conv3d_grad_weights(cache["x"], gy, self.kernel)
        gx = backend.conv3d_transpose(gy, self.w)
        return gx, {"w": gw, "b": gb}


class ReLU:
    def parameters(self):
        return {}

    def describe(self):
        return {"type": "relu"}

    def forward(self, x, cache, mode="infer", rng=None):
        cache["mask"] = x > 0
        return np.where(cache["mask"], x, x.dtype.type(0))

    def backward(self, gy, cache):
        return np.where(cache["mask"], gy, gy.dtype.type(0)), {}


class MaxPool3D:
    """2x2x2 max pooling with stride 2; odd trailing planes are dropped."""

    def parameters(self):
        return {}

    def describe(self):
        return {"type": "maxpool3d"}

    def forward(self, x, cache, mode="infer", rng=None):
        out, win = backend.maxpool3d(x)
        cache["win"] = win
        cache["in_shape"] = x.shape
        return out

    def backward(self, gy, cache):
        gx = backend.maxpool3d_scatter(gy, cache["win"], cache["in_shape"][2:])
        return gx, {}


class BatchNorm3D:
    """Per-channel batch normalization over (batch, x, y, z)."""

    def __init__(self, channels, momentum=0.9, eps=1e-3, dtype=np.float32):
        self.channels = channels
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.moving_mean = np.zeros(channels, dtype=dtype)
        self.moving_var = np.ones(channels, dtype=dtype)

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"moving_mean": self.moving_mean, "moving_var": self.moving_var}

    def describe(self):
        return {"type": "batchnorm3d", "channels": self.channels,
                "momentum": self.momentum, "eps": self.eps}

    def forward(self, x, cache, mode="infer", rng=None, update_stats=True):
        axes = (0, 2, 3, 4)
        shape = (1, -1, 1, 1, 1)
        if mode == "train":
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if update_stats:
                m = self.momentum
                self.moving_mean[:] = m * self.moving_mean + (1 - m) * mean
                self.moving_var[:] = m * self.moving_var + (1 - m) * var
        else:
            mean = self.moving_mean
            var = self.moving_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv.reshape(shape)
        cache["xhat"] = xhat
        cache["inv"] = inv
        cache["mode"] = mode
        return self.gamma.reshape(shape) * xhat + self.beta.reshape(shape)

    def backward(self, gy, cache):
        axes = (0, 2, 3, 4)
        shape = (1, -1, 1, 1, 1)
        xhat, inv = cache["xhat"], cache["inv"]
        dgamma = (gy * xhat).sum(axis=axes)
        dbeta = gy.sum(axis=axes)
        gscaled = gy * self.gamma.reshape(shape)
        if cache["mode"] == "train":
            gx = inv.reshape(shape) * (
                gscaled
                - gscaled.mean(axis=axes).reshape(shape)
                - xhat * (gscaled * xhat).mean(axis=axes).reshape(shape))
        else:
            gx = gscaled * inv.reshape(shape)
        return gx, {"gamma": dgamma, "beta": dbeta}


class Dropout:
    """Inverted-scaling dropout; identity outside train mode."""

    def __init__(self, rate=0.10):
        self.rate = float(rate)

    def parameters(self):
        return {}

    def describe(self):
        return {"type": "dropout", "rate": self.rate}

    def forward(self, x, cache, mode="infer", rng=None):
        if mode != "train" or self.rate == 0.0:
            cache["mask"] = None
            return x
        if rng is None:
            raise ValueError("train-mode forward through dropout needs an rng")
        keep = (rng.random(x.shape) >= self.rate).astype(x.dtype) / x.dtype.type(1 - self.rate)
        cache["mask"] = keep
        return x * keep

    def backward(self, gy, cache):
        if cache["mask"] is None:
            return gy, {}
        return gy * cache["mask"], {}


class Flatten:
    def parameters(self):
        return {}

    def describe(self):
        return {"type": "flatten"}

    def forward(self, x, cache, mode="infer", rng=None):
        cache["shape"] = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy, cache):
        return gy.reshape(cache["shape"]), {}


class Dense:
    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        limit = np.sqrt(6.0 / (in_features + out_features))
        rng = rng or np.random.default_rng()
        self.w = rng.uniform(-limit, limit, (in_features, out_features)).astype(dtype)
        self.b = np.zeros(out_features, dtype=dtype)

    def parameters(self):
        return {"w": self.w, "b": self.b}

    def describe(self):
        return {"type": "dense", "in": self.in_features, "out": self.out_features}

    def forward(self, x, cache, mode="infer", rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"dense layer expects (batch, {self.in_features}), got {x.shape}")
        cache["x"] = x
        return x @ self.w + self.b

    def backward(self, gy, cache):
        x = cache["x"]
        return gy @ self.w.T, {"w": x.T @ gy, "b": gy.sum(axis=0)}


class Softmax:
    def parameters(self):
        return {}

    def describe(self):
        return {"type": "softmax"}

    def forward(self, x, cache, mode="infer", rng=None):
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=1, keepdims=True)
        cache["logits"] = x
        cache["probs"] = p
        return p

    def backward(self, gy, cache):
        p = cache["probs"]
        return p * (gy - (gy * p).sum(axis=1, keepdims=True)), {}


LAYER_TYPES = {
    "conv3d": Conv3D,
    "relu": ReLU,
    "maxpool3d": MaxPool3D,
    "batchnorm3d": BatchNorm3D,
    "dropout": Dropout,
    "flatten": Flatten,
    "dense": Dense,
    "softmax": Softmax,
}
