"""Neural network core: layers, the model container, and training."""

from .layers import (BatchNorm3D, Conv3D, Dense, Dropout, Flatten, MaxPool3D,
                     ReLU, Softmax)
from .model import Model, build_model, load_model, pooled_dims, save_model
from .train import (Adam, TrainConfig, augment_variant, augmented_count,
                    class_weights, default_shift, loss_and_grads,
                    predict_scores, train, translate)

__all__ = [
    "Adam", "BatchNorm3D", "Conv3D", "Dense", "Dropout", "Flatten",
    "MaxPool3D", "Model", "ReLU", "Softmax", "TrainConfig",
    "augment_variant", "augmented_count", "build_model", "class_weights",
    "default_shift", "load_model", "loss_and_grads", "pooled_dims",
    "predict_scores", "save_model", "train", "translate",
]
