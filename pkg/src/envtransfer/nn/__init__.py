"""Small numpy network engine: layers, backprop, optimizers, training."""
from .layers import (Conv1D, Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2, ReLU,
                     ShapeError, Sigmoid, Softmax, Upsample2, softmax)
from .model import Model, StaleCacheError, backward, finite_diff_check, forward, predict
from .optim import Adam, AdamState, NonFiniteGradient, TrainConfig, optimizer_step
from .serialize import load_model, load_sidecar, save_model
from .train import History, TrainingError, accuracy, cross_entropy_logits, mse, train

__all__ = [
    "Conv1D", "Conv2D", "Dense", "Dropout", "Flatten", "Layer", "MaxPool2", "ReLU",
    "ShapeError", "Sigmoid", "Softmax", "Upsample2", "softmax",
    "Model", "StaleCacheError", "backward", "finite_diff_check", "forward", "predict",
    "Adam", "AdamState", "NonFiniteGradient", "TrainConfig", "optimizer_step",
    "load_model", "load_sidecar", "save_model",
    "History", "TrainingError", "accuracy", "cross_entropy_logits", "mse", "train",
]
