"""Finite-difference cases shared by the unit and acceptance suites."""
import numpy as np

from envtransfer.nn import (Conv1D, Conv2D, Dense, Dropout, Flatten, MaxPool2, Model, ReLU, Sigmoid,
                            Softmax, Upsample2, finite_diff_check)
from envtransfer.transfer import TransferConfig, init_random_net, transfer_grad, transfer_loss

# kind -> (layers factory, input shape, training)
LAYER_CASES = {
    "conv2d_valid": (lambda: [Conv2D(3, 3, "valid")], (5, 6, 2), False),
    "conv2d_same": (lambda: [Conv2D(3, 3, "same")], (4, 5, 2), False),
    "conv1d_valid": (lambda: [Conv1D(4, 3)], (7, 3), False),
    "maxpool2": (lambda: [MaxPool2()], (4, 6, 2), False),
    "upsample2": (lambda: [Upsample2()], (3, 2, 2), False),
    "dense": (lambda: [Dense(4)], (5,), False),
    "relu": (lambda: [ReLU()], (12,), False),
    "sigmoid": (lambda: [Sigmoid()], (12,), False),
    "softmax": (lambda: [Softmax()], (6,), False),
    "dropout": (lambda: [Dense(6), Dropout(0.4)], (5,), True),
    "flatten": (lambda: [Flatten(), Dense(3)], (2, 3, 2), False),
}


def _generic(rng, shape):
    # keep entries away from ReLU kinks and max-pool ties
    x = rng.normal(size=shape)
    return np.copysign(np.abs(x) + 0.05, x)


def quadratic_loss(rng, out_shape):
    a = rng.normal(size=out_shape)

    def loss(y):
        return float(np.sum(a * y) + 0.5 * np.sum(y * y)), a + y
    return loss


def layer_error(kind: str, seed: int) -> float:
    make, shape, training = LAYER_CASES[kind]
    rng = np.random.default_rng(seed)
    model = Model(make(), shape, seed=seed)
    x = _generic(rng, (2,) + shape)
    loss = quadratic_loss(rng, (2,) + model.output_shape)
    return finite_diff_check(model, x, loss, h=1e-5, n_coords=100, seed=seed, training=training)


def transfer_error(seed: int, n_coords: int = 100, h: float = 1e-5) -> float:
    """Max relative error of transfer_grad against central differences of transfer_loss."""
    rng = np.random.default_rng(seed)
    bins, frames = 9, 14
    cfg = TransferConfig(alpha=float(rng.uniform(0.1, 2.0)), n_filters=8, filter_width=3,
                         net_seed=seed, precision="float64")
    net = init_random_net(cfg, bins)
    x_c, x_s, x = (rng.normal(size=(bins, frames)) for _ in range(3))
    g = transfer_grad(x, x_c, x_s, net, cfg)
    idx = rng.choice(x.size, min(n_coords, x.size), replace=False)
    worst = 0.0
    for j in idx:
        xp, xm = x.copy(), x.copy()
        xp.flat[j] += h
        xm.flat[j] -= h
        num = (transfer_loss(xp, x_c, x_s, net, cfg).total
               - transfer_loss(xm, x_c, x_s, net, cfg).total) / (2 * h)
        ana = g.flat[j]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    return worst
