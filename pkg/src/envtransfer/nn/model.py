from __future__ import annotations

import copy

import numpy as np

from .layers import Layer, ShapeError, from_spec

# layers whose init depends on the following activation
_PARAM_KINDS = ("conv2d_valid", "conv2d_same", "conv1d_valid", "dense")


class StaleCacheError(ValueError):
    pass


class Model:
    """Sequential stack of layers over a fixed per-sample input shape."""

    def __init__(self, layers: list[Layer], input_shape: tuple, seed: int = 0):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = int(seed)
        self.shapes = self._infer_shapes()
        rng = np.random.default_rng(self.seed)
        for i, layer in enumerate(self.layers):
            if layer.kind in _PARAM_KINDS:
                layer.init_params(self.shapes[i], rng, self._init_for(i))

    def _init_for(self, i: int) -> str:
        for nxt in self.layers[i + 1:]:
            if nxt.kind in _PARAM_KINDS:
                break
            if nxt.kind in ("sigmoid", "softmax"):
                return "glorot"
            if nxt.kind == "relu":
                return "he"
        return "glorot"

    def _infer_shapes(self) -> list[tuple]:
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.output_shape(shapes[-1])))
            except (ShapeError, ValueError) as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from exc
        return shapes

    @property
    def output_shape(self) -> tuple:
        return self.shapes[-1]

    def specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def param_items(self):
        """Yield ``(layer_index, name, array)`` in serialization order."""
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.params[name]

    def n_params(self) -> int:
        return sum(a.size for _, _, a in self.param_items())

    def get_params(self) -> list[dict]:
        return [{k: v.copy() for k, v in layer.params.items()} for layer in self.layers]

    def set_params(self, params: list[dict]) -> None:
        for layer, p in zip(self.layers, params):
            layer.params = {k: np.array(v, dtype=np.float64) for k, v in p.items()}

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    @classmethod
    def from_specs(cls, specs: list[dict], input_shape, seed=0) -> "Model":
        return cls([from_spec(s) for s in specs], input_shape, seed)


class Cache(list):
    """Per-layer forward state, tagged with the model it came from."""

    def __init__(self, items, model_id, out_shape):
        super().__init__(items)
        self.model_id = model_id
        self.out_shape = out_shape


def forward(model: Model, x: np.ndarray, training: bool = False,
            rng: np.random.Generator | None = None, upto: int | None = None):
    """Run layers ``[0, upto)`` on batch ``x``; returns ``(output, cache)``.

    Dropout masks are drawn from ``rng`` (default: a fresh generator seeded
    with ``model.seed``), so repeated calls with equal seeds are identical.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != model.input_shape:
        raise ShapeError(f"layer 0 ({model.layers[0].kind}): expected input "
                         f"{model.input_shape}, got {x.shape[1:]}")
    if rng is None:
        rng = np.random.default_rng(model.seed)
    stop = len(model.layers) if upto is None else upto
    caches = []
    for layer in model.layers[:stop]:
        x, c = layer.forward(x, training, rng)
        caches.append(c)
    return x, Cache(caches, id(model), x.shape)


def backward(model: Model, cache: Cache, loss_grad: np.ndarray):
    """Backpropagate ``loss_grad`` through the layers covered by ``cache``.

    Returns ``(param_grads, input_grad)``; ``param_grads`` is a list of dicts
    aligned with ``model.layers``.
    """
    if not isinstance(cache, Cache) or cache.model_id != id(model):
        raise StaleCacheError("cache does not come from a forward pass of this model")
    if cache.out_shape != np.shape(loss_grad):
        raise StaleCacheError(f"loss gradient shape {np.shape(loss_grad)} does not match "
                              f"forward output {cache.out_shape}")
    grads = [dict() for _ in model.layers]
    dy = np.asarray(loss_grad, dtype=np.float64)
    for i in range(len(cache) - 1, -1, -1):
        g, dy = model.layers[i].backward(cache[i], dy)
        grads[i] = g
    return grads, dy


def predict(model: Model, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    outs = [forward(model, x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(outs, axis=0)


def finite_diff_check(model: Model, x: np.ndarray, loss, h: float = 1e-4,
                      n_coords: int = 100, seed: int = 0, training: bool = False) -> float:
    """Max relative error between backprop and central differences.

    ``loss(y)`` returns ``(value, dvalue/dy)``. Coordinates are sampled from
    all parameters and the input; when fewer than ``n_coords`` exist, all are
    checked. With ``training=True`` dropout masks stay fixed because every
    forward call reuses the model seed.
    """
    x = np.array(x, dtype=np.float64)

    def value():
        y, _ = forward(model, x, training)
        return loss(y)[0]

    y, cache = forward(model, x, training)
    grads, dx = backward(model, cache, loss(y)[1])

    targets = [(layer.params, name, grads[i][name])
               for i, layer in enumerate(model.layers) for name in sorted(layer.params)]
    holder = {"x": x}
    targets.append((holder, "x", dx))
    sizes = np.array([t[2].size for t in targets])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    flat_idx = np.arange(total) if total <= n_coords else rng.choice(total, n_coords, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for k in np.sort(flat_idx):
        t = int(np.searchsorted(offsets, k, side="right") - 1)
        store, name, g = targets[t]
        j = int(k - offsets[t])
        arr = store[name]
        old = arr.flat[j]
        arr.flat[j] = old + h
        fp = value()
        arr.flat[j] = old - h
        fm = value()
        arr.flat[j] = old
        num = (fp - fm) / (2.0 * h)
        ana = g.flat[j]
        err = abs(num - ana) / max(abs(num), abs(ana), 1e-8)
        worst = max(worst, err)
    return float(worst)
