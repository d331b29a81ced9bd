"""Training: weighted cross-entropy loss, Adam, augmentation, and the
epoch loop with best-epoch checkpointing on held-out balanced accuracy.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DataError, DegenerateClassError, NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 20
    epochs: int = 10
    l2: float = 1e-3
    class_weights: tuple = None  # None derives balanced weights from the data
    augmentation: bool = True
    shift_voxels: int = None  # None scales the reference 10-voxel shift to the grid
    checkpoint: str = "best_on_test"  # or "fixed_epochs"
    seed: int = 0

    def __post_init__(self):
        if self.checkpoint not in ("best_on_test", "fixed_epochs"):
            raise ValueError(f"unknown checkpoint policy {self.checkpoint!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self):
        return {
            "learning_rate": self.learning_rate, "batch_size": self.batch_size,
            "epochs": self.epochs, "l2": self.l2,
            "class_weights": list(self.class_weights) if self.class_weights else None,
            "augmentation": self.augmentation, "shift_voxels": self.shift_voxels,
            "checkpoint": self.checkpoint, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("class_weights") is not None:
            d["class_weights"] = tuple(d["class_weights"])
        return cls(**d)


def class_weights(counts):
    """Balanced weights 0.5 * n / n_i for two classes."""
    counts = [int(c) for c in counts]
    if len(counts) != 2:
        raise ValueError(f"expected two class counts, got {len(counts)}")
    if min(counts) == 0:
        raise DegenerateClassError(f"cannot weight a class with zero members: {counts}")
    n = sum(counts)
    return tuple(0.5 * n / c for c in counts)


def default_shift(dims):
    """Translation magnitude: a tenth of the smallest dim, at least 1."""
    return max(1, round(0.1 * min(dims)))


def translate(x, axis, shift):
    """Shift a 3D array along one axis, zero-filling vacated voxels."""
    out = np.zeros_like(x)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if shift >= 0:
        src[axis] = slice(0, x.shape[axis] - shift)
        dst[axis] = slice(shift, None)
    else:
        src[axis] = slice(-shift, None)
        dst[axis] = slice(0, x.shape[axis] + shift)
    out[tuple(dst)] = x[tuple(src)]
    return out


def augment_variant(x, variant, shift):
    """One of the 14 augmentation variants of a 3D array.

    Variant 0 is the identity; 1..6 are single-axis translations by
    +/- shift; 7..13 repeat the same sequence mirrored along the first
    axis.
    """
    if not 0 <= variant < 14:
        raise ValueError(f"variant must be 0..13, got {variant}")
    if variant >= 7:
        x = x[::-1]
    t = variant % 7
    if t == 0:
        return np.ascontiguousarray(x)
    axis = (t - 1) // 2
    sign = 1 if (t - 1) % 2 == 0 else -1
    return translate(x, axis, sign * shift)


def augmented_count(augmentation):
    return 14 if augmentation else 1


def loss_and_grads(model, x, labels, cfg, rng=None, update_stats=True):
    """Weighted cross-entropy with an L2 penalty on the last two dense
    layers; returns (loss, grads dict, probabilities).

    The forward pass runs in train mode. Pass the same rng to reproduce
    identical dropout masks across calls.
    """
    labels = np.asarray(labels)
    probs, trace = model.forward_batch(x, mode="train", rng=rng, update_stats=update_stats)
    n = x.shape[0]
    if cfg.class_weights is None:
        weights = np.ones(probs.shape[1], dtype=np.float64)
    else:
        weights = np.asarray(cfg.class_weights, dtype=np.float64)
    wb = weights[labels]
    p_true = np.clip(probs[np.arange(n), labels].astype(np.float64), 1e-30, None)
    loss = float(np.mean(wb * -np.log(p_true)))

    dense_idx = [i for i, l in enumerate(model.layers) if l.describe()["type"] == "dense"]
    penalized = dense_idx[-2:]
    for i in penalized:
        loss += cfg.l2 * float(np.sum(model.layers[i].w.astype(np.float64) ** 2))

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1
    dlogits *= (wb / n).astype(probs.dtype)[:, None]
    _, grads = model.backward(dlogits, trace)
    for i in penalized:
        grads[(i, "w")] = grads[(i, "w")] + (2 * cfg.l2) * model.layers[i].w
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    return loss, grads, probs


class Adam:
    """Adam with bias correction, one slot pair per parameter array."""

    def __init__(self, params, lr):
        self.lr = lr
        self.keys = [k for k, _ in params]
        self.arrays = {k: a for k, a in params}
        self.m = {k: np.zeros_like(a) for k, a in params}
        self.v = {k: np.zeros_like(a) for k, a in params}
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1c = 1 - ADAM_BETA1 ** self.t
        b2c = 1 - ADAM_BETA2 ** self.t
        for k in self.keys:
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m += (1 - ADAM_BETA1) * (g - m)
            v += (1 - ADAM_BETA2) * (g * g - v)
            arr = self.arrays[k]
            arr -= (self.lr * (m / b1c) / (np.sqrt(v / b2c) + ADAM_EPS)).astype(arr.dtype)


def predict_scores(model, volumes):
    """Infer-mode positive-class probabilities, batched."""
    out = np.empty(len(volumes), dtype=np.float64)
    step = 32
    for i in range(0, len(volumes), step):
        x = np.stack([v[None] for v in volumes[i:i + step]])
        probs, _ = model.forward_batch(x, mode="infer")
        out[i:i + step] = probs[:, 1]
    return out


def balanced_accuracy_from_scores(scores, labels):
    labels = np.asarray(labels)
    preds = (np.asarray(scores) >= 0.5).astype(int)
    accs = []
    for cls in (0, 1):
        sel = labels == cls
        if not np.any(sel):
            raise DataError(f"test partition lacks class {cls}")
        accs.append(float(np.mean(preds[sel] == cls)))
    return 0.5 * (accs[0] + accs[1])


def train(model, train_set, test_set, cfg):
    """Fit the model in place; returns the per-epoch history.

    train_set and test_set are sequences of (subject_id, array, label)
    with arrays shaped like the model input. Subject ids must not
    overlap between the two. With the best_on_test policy the model
    ends at the parameters of the epoch with the highest test balanced
    accuracy (earliest epoch on ties).
    """
    if len(train_set) == 0:
        raise DataError("empty training set")
    overlap = {s[0] for s in train_set} & {s[0] for s in test_set}
    if overlap:
        raise DataError(f"subjects appear in both partitions: {sorted(overlap)[:5]}")
    if cfg.checkpoint == "best_on_test" and len(test_set) == 0:
        raise DataError("best_on_test checkpointing needs a non-empty test partition")

    train_labels = [int(s[2]) for s in train_set]
    if cfg.class_weights is None:
        counts = [train_labels.count(0), train_labels.count(1)]
        cfg = replace(cfg, class_weights=class_weights(counts))

    dims = model.input_dims
    shift = cfg.shift_voxels if cfg.shift_voxels is not None else default_shift(dims)
    n_var = augmented_count(cfg.augmentation)
    volumes = [np.ascontiguousarray(s[1], dtype=model.dtype) for s in train_set]
    test_vols = [np.ascontiguousarray(s[1], dtype=model.dtype) for s in test_set]
    test_labels = [int(s[2]) for s in test_set]

    optimizer = Adam(model.parameters(), cfg.learning_rate)
    history = []
    best = None  # (bacc, epoch, state)
    pair_count = len(volumes) * n_var
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, 1000 + epoch]).permutation(pair_count)
        losses = []
        for start in range(0, pair_count, cfg.batch_size):
            chunk = order[start:start + cfg.batch_size]
            xs = np.empty((len(chunk), 1) + dims, dtype=model.dtype)
            ys = np.empty(len(chunk), dtype=np.int64)
            for row, flat in enumerate(chunk):
                si, variant = divmod(int(flat), n_var)
                xs[row, 0] = augment_variant(volumes[si], variant, shift)
                ys[row] = train_labels[si]
            rng = np.random.default_rng([cfg.seed, 2000 + epoch, start])
            loss, grads, _ = loss_and_grads(model, xs, ys, cfg, rng=rng)
            optimizer.step(grads)
            losses.append(loss)
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if test_set:
            bacc = balanced_accuracy_from_scores(predict_scores(model, test_vols), test_labels)
            entry["test_balanced_accuracy"] = bacc
            if cfg.checkpoint == "best_on_test" and (best is None or bacc > best[0]):
                best = (bacc, epoch, model.copy_state())
        history.append(entry)
    if cfg.checkpoint == "best_on_test" and best is not None:
        model.load_state(best[2])
    return history
