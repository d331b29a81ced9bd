"""Layer-wise relevance propagation through the trained classifier.

Relevance starts at the pre-softmax score of a chosen class and is
redistributed backwards layer by layer. Convolutions use the
positive-contribution rule (the alpha-beta rule with alpha=1, beta=0):
each output's relevance is split across inputs in proportion to their
positive share of the pre-activation, so with nonnegative starting
relevance all voxel relevances stay nonnegative. Dense layers use the
epsilon-stabilized rule by default. Max pooling routes relevance to the
winning voxel of each window; batch normalization is folded into the
preceding convolution while the pooling winners come from the real
forward pass, which is consistent because a positive-scale affine map
never changes the argmax of a window.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import (DegenerateRelevanceError, DimsError, NumericError)
from .nn.layers import (BatchNorm3D, Conv3D, Dense, Dropout, Flatten,
                        MaxPool3D, ReLU, Softmax)
from .volume import Volume3D

RULES = ("alpha1beta0", "epsilon")


@dataclass(frozen=True)
class RuleConfig:
    conv_rule: str = "alpha1beta0"
    dense_rule: str = "epsilon"
    epsilon: float = 1e-10
    relevance_init: str = "logit"  # or "prob"
    fold_batchnorm: bool = True

    def __post_init__(self):
        if self.conv_rule not in RULES or self.dense_rule not in RULES:
            raise ValueError(f"rules must be one of {RULES}")
        if self.relevance_init not in ("logit", "prob"):
            raise ValueError("relevance_init must be 'logit' or 'prob'")

    def identifier(self):
        return (f"conv={self.conv_rule},dense={self.dense_rule},"
                f"eps={self.epsilon!r},init={self.relevance_init},"
                f"fold={int(self.fold_batchnorm)}")


@dataclass(frozen=True)
class RelevanceMap:
    volume: Volume3D
    target_class: int
    total_output_relevance: float
    rule: str


@dataclass(frozen=True)
class ConservationReport:
    input_sum: float
    ratio: float
    absorbed_share: float


def fold_batchnorm(w, b, gamma, beta, moving_mean, moving_var, eps):
    """Merge an inference-mode batch norm into the preceding convolution.

    Returns (w', b') with w' = w * g and b' = (b - mean) * g + beta
    where g = gamma / sqrt(var + eps), applied per output channel.
    """
    g = (np.asarray(gamma, dtype=np.float64)
         / np.sqrt(np.asarray(moving_var, dtype=np.float64) + eps))
    wf = np.asarray(w, dtype=np.float64) * g[:, None, None, None, None]
    bf = (np.asarray(b, dtype=np.float64) - np.asarray(moving_mean, dtype=np.float64)) * g \
        + np.asarray(beta, dtype=np.float64)
    return wf.astype(w.dtype), bf.astype(b.dtype)


def _check_finite(r, where):
    if not np.all(np.isfinite(r)):
        raise NumericError(f"non-finite relevance after {where}")


def _check_degenerate(r_in, z, where):
    carrying = r_in != 0
    if np.any(carrying) and not np.any(z[carrying] != 0):
        raise DegenerateRelevanceError(
            f"all relevance-carrying units at {where} have zero denominators")


def _safe_div(r, z):
    with np.errstate(divide="ignore", invalid="ignore"):
        s = r / z
    return np.where(z != 0, s, 0.0).astype(r.dtype)


def _conv_alpha1beta0(r, a, w, b, where):
    ap = np.maximum(a, 0)
    an = np.minimum(a, 0)
    wp = np.maximum(w, 0)
    wn = np.minimum(w, 0)
    bp = np.maximum(b, 0)
    z = backend.conv3d(ap, wp, bp) + backend.conv3d(an, wn, np.zeros_like(b))
    _check_degenerate(r, z, where)
    s = _safe_div(r, z)
    out = ap * backend.conv3d_transpose(s, wp) + an * backend.conv3d_transpose(s, wn)
    _check_finite(out, where)
    return out


def _conv_epsilon(r, a, w, b, eps, where):
    z = backend.conv3d(a, w, b)
    zs = z + np.where(z >= 0, z.dtype.type(eps), z.dtype.type(-eps))
    s = _safe_div(r, zs)
    out = a * backend.conv3d_transpose(s, w)
    _check_finite(out, where)
    return out


def _dense_alpha1beta0(r, a, w, b, where):
    ap = np.maximum(a, 0)
    an = np.minimum(a, 0)
    wp = np.maximum(w, 0)
    wn = np.minimum(w, 0)
    z = ap @ wp + an @ wn + np.maximum(b, 0)
    _check_degenerate(r, z, where)
    s = _safe_div(r, z)
    out = ap * (s @ wp.T) + an * (s @ wn.T)
    _check_finite(out, where)
    return out


def _dense_epsilon(r, a, w, b, eps, where):
    z = a @ w + b
    zs = z + np.where(z >= 0, z.dtype.type(eps), z.dtype.type(-eps))
    s = _safe_div(r, zs)
    out = a * (s @ w.T)
    _check_finite(out, where)
    return out


def _batchnorm_standalone(r, cache, layer, where):
    """Positive-contribution rule on the per-channel affine map, used
    when folding is off or a channel scale is not positive.

    The layer input is reconstructed from the cached normalized values;
    relevance passes always run in infer mode, so the cached statistics
    are the moving ones.
    """
    shape = (1, -1, 1, 1, 1)
    a = cache["xhat"] / cache["inv"].reshape(shape) + layer.moving_mean.reshape(shape)
    g = (layer.gamma * cache["inv"]).reshape(shape)
    d = (layer.beta - layer.moving_mean * g.reshape(-1)).reshape(shape)
    pos = np.maximum(a * g, 0)
    z = pos + np.maximum(d, 0)
    _check_degenerate(r, z, where)
    return (pos * _safe_div(r, z)).astype(r.dtype)


def relevance_map(model, vol, target_class=1, config=RuleConfig()):
    """Propagate one subject's relevance back to the input voxels.

    vol may be a Volume3D or a bare 3D array with the model's input
    dims; returns a RelevanceMap whose volume shares the input grid.
    """
    geometry = vol if isinstance(vol, Volume3D) else None
    data = vol.data if geometry is not None else np.asarray(vol)
    if data.shape != model.input_dims:
        raise DimsError(f"volume dims {data.shape} do not match model {model.input_dims}")
    n_classes = model.layers[-2].out_features
    if not 0 <= int(target_class) < n_classes:
        raise ValueError(f"target_class must be 0..{n_classes - 1}, got {target_class}")

    x = data[None, None].astype(model.dtype)
    probs, trace = model.forward_batch(x, mode="infer")
    logits = trace[-1]["logits"]
    init = logits[0, target_class] if config.relevance_init == "logit" \
        else probs[0, target_class]
    r = np.zeros_like(logits)
    r[0, target_class] = init

    layers = model.layers
    i = len(layers) - 1
    while i >= 0:
        layer = layers[i]
        where = f"layer {i} ({layer.describe()['type']})"
        if isinstance(layer, Softmax):
            pass  # relevance starts at the pre-softmax scores
        elif isinstance(layer, (ReLU, Dropout)):
            pass  # pass-through
        elif isinstance(layer, Flatten):
            r = r.reshape(trace[i]["shape"])
        elif isinstance(layer, Dense):
            a = trace[i]["x"]
            if config.dense_rule == "epsilon":
                r = _dense_epsilon(r, a, layer.w, layer.b, config.epsilon, where)
            else:
                r = _dense_alpha1beta0(r, a, layer.w, layer.b, where)
        elif isinstance(layer, MaxPool3D):
            r = backend.maxpool3d_scatter(r, trace[i]["win"], trace[i]["in_shape"][2:])
        elif isinstance(layer, BatchNorm3D):
            folded = None
            if config.fold_batchnorm and i >= 3 \
                    and isinstance(layers[i - 3], Conv3D) \
                    and isinstance(layers[i - 2], ReLU) \
                    and isinstance(layers[i - 1], MaxPool3D):
                scale = layer.gamma / np.sqrt(layer.moving_var + layer.eps)
                if np.all(scale > 0):
                    folded = fold_batchnorm(layers[i - 3].w, layers[i - 3].b,
                                            layer.gamma, layer.beta,
                                            layer.moving_mean, layer.moving_var,
                                            layer.eps)
            if folded is not None:
                wf, bf = folded
                pool_cache = trace[i - 1]
                r = backend.maxpool3d_scatter(r, pool_cache["win"],
                                              pool_cache["in_shape"][2:])
                a = trace[i - 3]["x"]
                cwhere = f"layers {i - 3}..{i} (conv block)"
                if config.conv_rule == "alpha1beta0":
                    r = _conv_alpha1beta0(r, a, wf, bf, cwhere)
                else:
                    r = _conv_epsilon(r, a, wf, bf, config.epsilon, cwhere)
                i -= 4
                continue
            r = _batchnorm_standalone(r, trace[i], layer, where)
        elif isinstance(layer, Conv3D):
            a = trace[i]["x"]
            if config.conv_rule == "alpha1beta0":
                r = _conv_alpha1beta0(r, a, layer.w, layer.b, where)
            else:
                r = _conv_epsilon(r, a, layer.w, layer.b, config.epsilon, where)
        else:
            raise NotImplementedError(f"no relevance rule for {type(layer).__name__}")
        i -= 1

    out = r[0, 0].astype(np.float32)
    map_vol = geometry.with_data(out) if geometry is not None else Volume3D(out)
    return RelevanceMap(map_vol, int(target_class), float(init), config.identifier())


def conservation_report(rmap):
    """How much of the starting relevance reached the input voxels."""
    if rmap.total_output_relevance == 0:
        raise DegenerateRelevanceError(
            "total output relevance is zero; the ratio is undefined")
    input_sum = float(np.sum(rmap.volume.data.astype(np.float64)))
    ratio = input_sum / rmap.total_output_relevance
    return ConservationReport(input_sum, ratio, 1.0 - ratio)
