"""Mini-batch training with seeded shuffling and best-validation selection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .layers import softmax
from .model import Model, backward, forward, predict
from .optim import TrainConfig, optimizer_step

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = -1

    def as_dict(self):
        return {"train_loss": self.train_loss, "train_acc": self.train_acc,
                "val_loss": self.val_loss, "val_acc": self.val_acc, "best_epoch": self.best_epoch}


def cross_entropy_logits(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def mse(y: np.ndarray, target: np.ndarray):
    diff = y - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def _split_softmax(model: Model, loss: str) -> bool:
    return loss == "cross_entropy" and model.layers[-1].kind == "softmax"


def batch_loss(model, x, y, loss, training=False, rng=None):
    """Forward a batch; returns ``(loss, grad_at_output, cache, output)``.

    For cross-entropy on a softmax-terminated model the final softmax is
    skipped during backprop and ``output`` holds its probabilities.
    """
    if loss == "cross_entropy":
        upto = len(model.layers) - 1 if _split_softmax(model, loss) else None
        out, cache = forward(model, x, training, rng, upto=upto)
        value, grad = cross_entropy_logits(out, y)
        return value, grad, cache, softmax(out) if upto is not None else out
    if loss == "mse":
        out, cache = forward(model, x, training, rng)
        value, grad = mse(out, y)
        return value, grad, cache, out
    raise ValueError(f"unknown loss {loss!r}")


def evaluate(model: Model, x, y, loss: str, batch_size: int = 64):
    """Mean loss and accuracy (accuracy is NaN for mse) in inference mode."""
    if len(x) == 0:
        return float("nan"), float("nan")
    total, correct = 0.0, 0
    for i in range(0, len(x), batch_size):
        xb, yb = x[i:i + batch_size], y[i:i + batch_size]
        value, _, _, out = batch_loss(model, xb, yb, loss)
        total += value * len(xb)
        if loss == "cross_entropy":
            correct += int((out.argmax(axis=1) == yb).sum())
    acc = correct / len(x) if loss == "cross_entropy" else float("nan")
    return total / len(x), acc


def train(model: Model, x, y, cfg: TrainConfig, loss: str = "cross_entropy",
          x_val=None, y_val=None) -> tuple[Model, History]:
    """Train ``model`` in place; returns it with the best-validation parameters.

    Without a validation set the training loss drives selection. Early
    stopping triggers after ``cfg.patience`` epochs without improvement.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise TrainingError("empty training set")
    if loss == "cross_entropy":
        y = np.asarray(y, dtype=np.int64)
        n_out = model.output_shape[-1]
        if y.min() < 0 or y.max() >= n_out:
            raise TrainingError(f"labels must lie in [0, {n_out})")
    has_val = x_val is not None and len(x_val) > 0
    rng = np.random.default_rng(cfg.seed)
    hist = History()
    best, best_params, stale = np.inf, model.get_params(), 0
    states = [None] * len(model.layers)

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        total, correct = 0.0, 0
        for i in range(0, len(x), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            value, grad, cache, out = batch_loss(model, x[idx], y[idx], loss, True, rng)
            if not np.isfinite(value):
                raise TrainingError(f"loss became {value} at epoch {epoch + 1}, batch {i // cfg.batch_size}")
            grads, _ = backward(model, cache, grad)
            for j, layer in enumerate(model.layers):
                if layer.params:
                    _, states[j] = optimizer_step(states[j], layer.params, grads[j], cfg)
            total += value * len(idx)
            if loss == "cross_entropy":
                correct += int((out.argmax(axis=1) == y[idx]).sum())
        hist.train_loss.append(total / len(x))
        hist.train_acc.append(correct / len(x) if loss == "cross_entropy" else float("nan"))
        if has_val:
            vl, va = evaluate(model, x_val, y_val, loss)
        else:
            vl, va = hist.train_loss[-1], hist.train_acc[-1]
        hist.val_loss.append(vl)
        hist.val_acc.append(va)
        log.debug("epoch %d: train %.4f val %.4f", epoch + 1, hist.train_loss[-1], vl)

        if vl < best:
            best, best_params, stale = vl, model.get_params(), 0
            hist.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.set_params(best_params)
    return model, hist


def accuracy(model: Model, x, y) -> float:
    if len(x) == 0:
        return float("nan")
    return float(np.mean(predict(model, x).argmax(axis=1) == np.asarray(y)))
