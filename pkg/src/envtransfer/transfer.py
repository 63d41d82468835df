"""Environment (style) transfer on log-magnitude spectrograms.

A single wide layer of frozen random 1-D filters slides along time with the
frequency bins as input channels. Its ReLU activations serve as the content
representation, and their Gram matrix as the style statistic. A generated
log-magnitude grid is optimized with Adam against

    total = alpha * |F(x) - F(x_c)|^2 / N  +  |G(x) - G(x_s)|^2_F / N

where N = n_filters * n_positions and G = F F^T / n_positions.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import Waveform
from .dsp import LOG_EPS, MagnitudeGrid, StftParams, griffin_lim, log_magnitude, stft
from .nn.optim import Adam

log = logging.getLogger(__name__)


class TransferDiverged(FloatingPointError):
    """Loss went non-finite; ``trace`` holds the iterations completed so far."""

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class TransferConfig:
    alpha: float = 0.2
    n_filters: int = 4096
    filter_width: int = 11
    iterations: int = 300
    learning_rate: float = 0.05
    init: str = "content"
    net_seed: int = 0
    init_seed: int = 1
    gl_seed: int = 2
    gl_iterations: int = 100
    precision: str = "float32"
    content_layers: tuple = (0,)
    style_layers: tuple = (0,)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.n_filters < 1 or self.filter_width < 1:
            raise ValueError("n_filters and filter_width must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be 'float32' or 'float64', got {self.precision!r}")
        if self.init not in ("content", "noise"):
            raise ValueError(f"init must be 'content' or 'noise', got {self.init!r}")
        if tuple(self.content_layers) != (0,) or tuple(self.style_layers) != (0,):
            raise ValueError("only the single layer 0 is available for content and style")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["content_layers"] = list(self.content_layers)
        d["style_layers"] = list(self.style_layers)
        return d


@dataclass(frozen=True, eq=False)
class RandomConvNet:
    """Frozen filters of shape (n_filters, filter_width, n_bins)."""

    filters: np.ndarray
    seed: int

    def __post_init__(self):
        f = np.array(self.filters, dtype=np.float64)
        f.flags.writeable = False
        object.__setattr__(self, "filters", f)

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]

    @property
    def filter_width(self) -> int:
        return self.filters.shape[1]

    @property
    def n_bins(self) -> int:
        return self.filters.shape[2]

    @property
    def matrix(self) -> np.ndarray:
        # (n_filters, filter_width * n_bins), matches _patches ordering
        return self.filters.reshape(self.n_filters, -1)


def init_random_net(cfg: TransferConfig, n_bins: int) -> RandomConvNet:
    rng = np.random.default_rng(cfg.net_seed)
    std = np.sqrt(2.0 / (cfg.filter_width * n_bins))
    w = rng.normal(0.0, std, (cfg.n_filters, cfg.filter_width, n_bins))
    return RandomConvNet(w, cfg.net_seed)


@dataclass(eq=False)
class ActivationMap:
    values: np.ndarray          # (n_filters, n_positions), post-ReLU
    pre: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.values.size)


def _as_values(spec) -> np.ndarray:
    return spec.values if isinstance(spec, MagnitudeGrid) else np.asarray(spec, dtype=np.float64)


def _patches(x: np.ndarray, width: int) -> np.ndarray:
    # x (n_bins, n_frames) -> (n_positions, width * n_bins)
    win = sliding_window_view(x, width, axis=1)      # bins, P, width
    # a strided view here makes the following matmul an order of magnitude slower
    return np.ascontiguousarray(win.transpose(1, 2, 0).reshape(win.shape[1], -1))


def extract_features(net: RandomConvNet, spec) -> ActivationMap:
    """Valid 1-D convolution along time followed by ReLU."""
    x = _as_values(spec)
    if x.shape[0] != net.n_bins:
        raise ValueError(f"spectrogram has {x.shape[0]} bins, network expects {net.n_bins}")
    if x.shape[1] < net.filter_width:
        raise ValueError(f"{x.shape[1]} frames is fewer than the filter width {net.filter_width}")
    pre = net.matrix @ _patches(x, net.filter_width).T
    return ActivationMap(np.maximum(pre, 0.0), pre)


def gram(f: ActivationMap | np.ndarray) -> np.ndarray:
    a = f.values if isinstance(f, ActivationMap) else np.asarray(f)
    if not np.issubdtype(a.dtype, np.floating):
        a = a.astype(np.float64)
    return (a @ a.T) / a.shape[1]


@dataclass
class LossBreakdown:
    total: float
    content: float
    style: float
    alpha: float = 0.0
    trace_total: list = field(default_factory=list)
    trace_content: list = field(default_factory=list)
    trace_style: list = field(default_factory=list)

    def record(self, total, content, style):
        self.trace_total.append(total)
        self.trace_content.append(content)
        self.trace_style.append(style)
        self.total, self.content, self.style = total, content, style


@dataclass
class _Targets:
    content: np.ndarray
    style_gram: np.ndarray


def _targets(wmat, width, x_c, x_s) -> _Targets:
    a_c = np.maximum(wmat @ _patches(x_c, width).T, 0.0)
    a_s = np.maximum(wmat @ _patches(x_s, width).T, 0.0)
    return _Targets(a_c, gram(a_s))


def _loss_and_grad(x, wmat, width, tg: _Targets, alpha, need_grad=True):
    p = _patches(x, width)
    pre = wmat @ p.T
    a = np.maximum(pre, 0.0)
    n_pos = a.shape[1]
    n = a.size
    dc = a - tg.content
    dg = (a @ a.T) / n_pos - tg.style_gram
    content = float(np.sum(dc * dc) / n)
    style = float(np.sum(dg * dg) / n)
    total = alpha * content + style
    if not need_grad:
        return total, content, style, None
    # dG is symmetric so d/dA |G - Gs|^2 = 4 (G - Gs) A / (n_pos * n)
    da = (2.0 * alpha / n) * dc + (4.0 / (n * n_pos)) * (dg @ a)
    dpre = da * (pre > 0)
    dp = (dpre.T @ wmat).reshape(n_pos, width, x.shape[0])
    gx = np.zeros_like(x)
    for k in range(width):
        gx[:, k:k + n_pos] += dp[:, k, :].T
    return total, content, style, gx


def _check_shapes(x, x_c, x_s):
    if not (x.shape == x_c.shape == x_s.shape):
        raise ValueError(f"grid shapes differ: {x.shape}, {x_c.shape}, {x_s.shape}")


def transfer_loss(x, x_c, x_s, net: RandomConvNet, cfg: TransferConfig) -> LossBreakdown:
    x, x_c, x_s = _as_values(x), _as_values(x_c), _as_values(x_s)
    _check_shapes(x, x_c, x_s)
    w = net.matrix
    with np.errstate(over="ignore", invalid="ignore"):
        tg = _targets(w, net.filter_width, x_c, x_s)
    total, content, style, _ = _loss_and_grad(x, w, net.filter_width, tg, cfg.alpha, False)
    return LossBreakdown(total, content, style, cfg.alpha)


def transfer_grad(x, x_c, x_s, net: RandomConvNet, cfg: TransferConfig) -> np.ndarray:
    """Gradient of the total loss w.r.t. the generated grid (ReLU'(0) = 0)."""
    x, x_c, x_s = _as_values(x), _as_values(x_c), _as_values(x_s)
    _check_shapes(x, x_c, x_s)
    w = net.matrix
    return _loss_and_grad(x, w, net.filter_width, _targets(w, net.filter_width, x_c, x_s), cfg.alpha)[3]


@dataclass
class TransferResult:
    generated: Waveform
    grid: MagnitudeGrid
    loss: LossBreakdown
    gl_consistency: np.ndarray
    config: TransferConfig
    stft_params: StftParams
    timings: dict

    def record(self) -> dict:
        return {
            "config": self.config.as_dict(),
            "stft": asdict(self.stft_params),
            "loss": {"total": self.loss.trace_total, "content": self.loss.trace_content,
                     "style": self.loss.trace_style},
            "griffin_lim_consistency": [float(c) for c in self.gl_consistency],
            "timings": self.timings,
        }


def initial_grid(x_c: np.ndarray, cfg: TransferConfig) -> np.ndarray:
    if cfg.init == "content":
        return x_c.copy()
    rng = np.random.default_rng(cfg.init_seed)
    return rng.normal(x_c.mean(), x_c.std() + 1e-12, x_c.shape)


def noise_grid(content: Waveform, cfg: TransferConfig, stft_p: StftParams) -> np.ndarray:
    """Log-magnitude of seeded white noise at the content clip's RMS level."""
    rng = np.random.default_rng(cfg.init_seed)
    level = float(np.sqrt(np.mean(content.samples ** 2))) or 1e-3
    noise = Waveform(rng.normal(0.0, level, len(content)), content.sample_rate)
    return log_magnitude(stft(noise, stft_p)).values


def optimize_grid(x_c: np.ndarray, x_s: np.ndarray, net: RandomConvNet,
                  cfg: TransferConfig, x0: np.ndarray | None = None
                  ) -> tuple[np.ndarray, LossBreakdown]:
    """Run ``cfg.iterations`` Adam steps; the trace holds the loss before each step.

    ``x0`` overrides the starting grid chosen by ``cfg.init``. Arithmetic
    runs in ``cfg.precision``; the returned grid is float64.
    """
    _check_shapes(x_c, x_c, x_s)
    dt = np.dtype(cfg.precision)
    w = net.matrix.astype(dt)
    x_c, x_s = x_c.astype(dt), x_s.astype(dt)
    with np.errstate(over="ignore", invalid="ignore"):
        tg = _targets(w, net.filter_width, x_c, x_s)
    x = (initial_grid(x_c.astype(np.float64), cfg) if x0 is None else np.array(x0)).astype(dt)
    opt = Adam(cfg.learning_rate)
    trace = LossBreakdown(np.nan, np.nan, np.nan, cfg.alpha)
    for it in range(cfg.iterations):
        with np.errstate(over="ignore", invalid="ignore"):      # checked just below
            total, content, style, g = _loss_and_grad(x, w, net.filter_width, tg, cfg.alpha)
        if not (np.isfinite(total) and np.all(np.isfinite(g))):
            raise TransferDiverged(f"non-finite loss at iteration {it + 1}", trace)
        trace.record(total, content, style)
        x = opt.step(x, g)
    return x.astype(np.float64), trace


def run_transfer(content: Waveform, style: Waveform, cfg: TransferConfig = TransferConfig(),
                 stft_p: StftParams = StftParams(), net: RandomConvNet | None = None
                 ) -> TransferResult:
    """Transfer the texture of ``style`` onto ``content`` and resynthesize audio."""
    if len(content) != len(style) or content.sample_rate != style.sample_rate:
        raise ValueError("content and style must share length and sample rate; standardize first")
    t0 = time.perf_counter()
    x_c = log_magnitude(stft(content, stft_p)).values
    x_s = log_magnitude(stft(style, stft_p)).values
    if net is None:
        net = init_random_net(cfg, stft_p.n_bins)
    t1 = time.perf_counter()
    x0 = noise_grid(content, cfg, stft_p) if cfg.init == "noise" else None
    x, trace = optimize_grid(x_c, x_s, net, cfg, x0)
    t2 = time.perf_counter()
    grid = MagnitudeGrid(x, "log")
    gl = griffin_lim(grid.to_linear(), stft_p, cfg.gl_iterations, cfg.gl_seed,
                     content.sample_rate, len(content))
    audio = gl.waveform
    peak = float(np.max(np.abs(audio.samples)))
    if peak > 1.0:
        audio = Waveform(audio.samples * (0.95 / peak), audio.sample_rate)
    t3 = time.perf_counter()
    timings = {"features": t1 - t0, "optimize": t2 - t1, "griffin_lim": t3 - t2}
    return TransferResult(audio, grid, trace, gl.consistency, cfg, stft_p, timings)


def filter_width_sweep(pairs, widths, cfg: TransferConfig = TransferConfig(),
                       stft_p: StftParams = StftParams()) -> list[dict]:
    """Run :func:`run_transfer` for every (width, pair) with shared seeds.

    ``pairs`` is a sequence of ``(pair_id, content, style)``. Results come
    back ordered by width, then pair.
    """
    widths = list(widths)
    if not widths:
        raise ValueError("widths must be non-empty")
    out = []
    for w in widths:
        wcfg = replace(cfg, filter_width=int(w))
        for pair_id, content, style in pairs:
            res = run_transfer(content, style, wcfg, stft_p)
            out.append({"filter_width": int(w), "pair_id": pair_id, "result": res})
    return out


__all__ = [
    "TransferConfig", "RandomConvNet", "ActivationMap", "LossBreakdown", "TransferResult",
    "TransferDiverged", "init_random_net", "initial_grid", "noise_grid", "extract_features", "gram", "transfer_loss",
    "transfer_grad", "optimize_grid", "run_transfer", "filter_width_sweep", "LOG_EPS",
]
