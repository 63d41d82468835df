"""Layer kinds for the numpy network engine.

Tensors are channel-last with a leading batch axis: (N, H, W, C) for 2-D
layers, (N, L, C) for 1-D layers and (N, D) for dense layers. Every layer
exposes ``forward(x, training, rng) -> (y, cache)`` and
``backward(cache, dy) -> (param_grads, dx)``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KINDS = ("conv2d_valid", "conv2d_same", "conv1d_valid", "maxpool2", "upsample2",
         "dense", "relu", "sigmoid", "softmax", "dropout", "flatten")


class ShapeError(ValueError):
    pass


def he_std(fan_in: int) -> float:
    return float(np.sqrt(2.0 / fan_in))


def glorot_std(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(2.0 / (fan_in + fan_out)))


class Layer:
    kind = ""
    params: dict

    def __init__(self):
        self.params = {}

    def spec(self) -> dict:
        return {"kind": self.kind}

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def init_params(self, in_shape: tuple, rng: np.random.Generator, init: str) -> None:
        pass

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.spec().items() if k != "kind")
        return f"{self.kind}({args})"


# ---------------------------------------------------------------- convolution

def conv2d_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """x (N,H,W,C), w (kh,kw,C,F) -> (N,H-kh+1,W-kw+1,F); cross-correlation."""
    kh, kw = w.shape[:2]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # N,Ho,Wo,C,kh,kw
    return np.tensordot(win, w.transpose(2, 0, 1, 3), axes=3)


def _conv2d_backward(x, w, dy):
    kh, kw = w.shape[:2]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    dw = np.tensordot(win, dy, axes=([0, 1, 2], [0, 1, 2]))  # C,kh,kw,F
    dw = dw.transpose(1, 2, 0, 3)
    pad = np.pad(dy, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    w_flip = w[::-1, ::-1].transpose(0, 1, 3, 2)  # kh,kw,F,C
    dx = conv2d_valid(pad, w_flip)
    return dw, dx


class Conv2D(Layer):
    def __init__(self, filters: int, kernel: int = 3, padding: str = "valid"):
        super().__init__()
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
        if padding == "same" and kernel % 2 == 0:
            raise ValueError("'same' padding needs an odd kernel")
        self.filters = int(filters)
        self.kernel = int(kernel)
        self.padding = padding
        self.kind = "conv2d_" + padding

    def spec(self):
        return {"kind": self.kind, "filters": self.filters, "kernel": self.kernel}

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"expects (H, W, C) input, got {shape}")
        h, w, _ = shape
        if self.padding == "same":
            return (h, w, self.filters)
        if h < self.kernel or w < self.kernel:
            raise ShapeError(f"input {shape} smaller than kernel {self.kernel}")
        return (h - self.kernel + 1, w - self.kernel + 1, self.filters)

    def init_params(self, in_shape, rng, init):
        c = in_shape[-1]
        fan_in = self.kernel * self.kernel * c
        std = he_std(fan_in) if init == "he" else glorot_std(fan_in, self.kernel ** 2 * self.filters)
        self.params = {
            "W": rng.normal(0.0, std, (self.kernel, self.kernel, c, self.filters)),
            "b": np.zeros(self.filters),
        }

    def _pad(self, x):
        if self.padding == "valid":
            return x
        p = self.kernel // 2
        return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))

    def forward(self, x, training=False, rng=None):
        xp = self._pad(x)
        y = conv2d_valid(xp, self.params["W"]) + self.params["b"]
        return y, xp

    def backward(self, cache, dy):
        dw, dxp = _conv2d_backward(cache, self.params["W"], dy)
        if self.padding == "same":
            p = self.kernel // 2
            dxp = dxp[:, p:dxp.shape[1] - p, p:dxp.shape[2] - p]
        return {"W": dw, "b": dy.sum(axis=(0, 1, 2))}, dxp


def conv1d_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """x (N,L,C), w (k,C,F) -> (N,L-k+1,F)."""
    k = w.shape[0]
    win = sliding_window_view(x, k, axis=1)  # N,Lo,C,k
    return np.tensordot(win, w.transpose(1, 0, 2), axes=2)


def conv1d_input_grad(dy: np.ndarray, w: np.ndarray) -> np.ndarray:
    k = w.shape[0]
    pad = np.pad(dy, ((0, 0), (k - 1, k - 1), (0, 0)))
    return conv1d_valid(pad, w[::-1].transpose(0, 2, 1))


class Conv1D(Layer):
    kind = "conv1d_valid"

    def __init__(self, filters: int, kernel: int, bias: bool = True):
        super().__init__()
        self.filters = int(filters)
        self.kernel = int(kernel)
        self.bias = bool(bias)

    def spec(self):
        return {"kind": self.kind, "filters": self.filters, "kernel": self.kernel, "bias": self.bias}

    def output_shape(self, shape):
        if len(shape) != 2:
            raise ShapeError(f"expects (L, C) input, got {shape}")
        if shape[0] < self.kernel:
            raise ShapeError(f"input length {shape[0]} shorter than kernel {self.kernel}")
        return (shape[0] - self.kernel + 1, self.filters)

    def init_params(self, in_shape, rng, init):
        c = in_shape[-1]
        fan_in = self.kernel * c
        std = he_std(fan_in) if init == "he" else glorot_std(fan_in, self.kernel * self.filters)
        self.params = {"W": rng.normal(0.0, std, (self.kernel, c, self.filters))}
        if self.bias:
            self.params["b"] = np.zeros(self.filters)

    def forward(self, x, training=False, rng=None):
        y = conv1d_valid(x, self.params["W"])
        if self.bias:
            y = y + self.params["b"]
        return y, x

    def backward(self, cache, dy):
        w = self.params["W"]
        win = sliding_window_view(cache, self.kernel, axis=1)  # N,Lo,C,k
        dw = np.tensordot(win, dy, axes=([0, 1], [0, 1])).transpose(1, 0, 2)
        grads = {"W": dw}
        if self.bias:
            grads["b"] = dy.sum(axis=(0, 1))
        return grads, conv1d_input_grad(dy, w)


# -------------------------------------------------------------- resampling

class MaxPool2(Layer):
    kind = "maxpool2"

    def output_shape(self, shape):
        h, w, c = shape
        if h < 2 or w < 2:
            raise ShapeError(f"cannot pool {shape}")
        return (h // 2, w // 2, c)

    def forward(self, x, training=False, rng=None):
        n, h, w, c = x.shape
        ho, wo = h // 2, w // 2
        blocks = x[:, :2 * ho, :2 * wo].reshape(n, ho, 2, wo, 2, c)
        blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, 4)
        idx = blocks.argmax(axis=-1)
        y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)

    def backward(self, cache, dy):
        shape, idx = cache
        n, h, w, c = shape
        ho, wo = h // 2, w // 2
        routed = np.zeros((n, ho, wo, c, 4))
        np.put_along_axis(routed, idx[..., None], dy[..., None], axis=-1)
        routed = routed.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros(shape)
        dx[:, :2 * ho, :2 * wo] = routed.reshape(n, 2 * ho, 2 * wo, c)
        return {}, dx


class Upsample2(Layer):
    """Nearest-neighbour 2x upsampling of both spatial axes."""

    kind = "upsample2"

    def output_shape(self, shape):
        h, w, c = shape
        return (2 * h, 2 * w, c)

    def forward(self, x, training=False, rng=None):
        return x.repeat(2, axis=1).repeat(2, axis=2), None

    def backward(self, cache, dy):
        n, h2, w2, c = dy.shape
        return {}, dy.reshape(n, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))


# ------------------------------------------------------------------- dense

class Dense(Layer):
    kind = "dense"

    def __init__(self, units: int):
        super().__init__()
        self.units = int(units)

    def spec(self):
        return {"kind": self.kind, "units": self.units}

    def output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"dense expects flat input, got {shape}")
        return (self.units,)

    def init_params(self, in_shape, rng, init):
        d = in_shape[0]
        std = he_std(d) if init == "he" else glorot_std(d, self.units)
        self.params = {"W": rng.normal(0.0, std, (d, self.units)), "b": np.zeros(self.units)}

    def forward(self, x, training=False, rng=None):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, cache, dy):
        return {"W": cache.T @ dy, "b": dy.sum(axis=0)}, dy @ self.params["W"].T


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, dy):
        return {}, dy.reshape(cache)


# ------------------------------------------------------------- activations

class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, cache, dy):
        return {}, dy * cache


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, training=False, rng=None):
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        y[~pos] = e / (1.0 + e)
        return y, y

    def backward(self, cache, dy):
        return {}, dy * cache * (1.0 - cache)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


class Softmax(Layer):
    """Softmax over the last (channel) axis."""

    kind = "softmax"

    def forward(self, x, training=False, rng=None):
        y = softmax(x, axis=-1)
        return y, y

    def backward(self, cache, dy):
        s = cache
        return {}, s * (dy - (dy * s).sum(axis=-1, keepdims=True))


class Dropout(Layer):
    """Inverted dropout: scale kept units by 1/(1-rate) at train time."""

    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"drop rate must be in [0, 1), got {rate}")
        self.rate = float(rate)

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            return x, None
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep) / keep
        return x * mask, mask

    def backward(self, cache, dy):
        if cache is None:
            return {}, dy
        return {}, dy * cache


def from_spec(spec: dict) -> Layer:
    kind = spec["kind"]
    if kind in ("conv2d_valid", "conv2d_same"):
        return Conv2D(spec["filters"], spec.get("kernel", 3), kind.split("_")[1])
    if kind == "conv1d_valid":
        return Conv1D(spec["filters"], spec["kernel"], spec.get("bias", True))
    if kind == "dense":
        return Dense(spec["units"])
    if kind == "dropout":
        return Dropout(spec["rate"])
    simple = {"maxpool2": MaxPool2, "upsample2": Upsample2, "relu": ReLU, "sigmoid": Sigmoid,
              "softmax": Softmax, "flatten": Flatten}
    if kind not in simple:
        raise ValueError(f"unknown layer kind {kind!r}")
    return simple[kind]()
