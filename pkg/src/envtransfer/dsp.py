"""STFT analysis/synthesis, log-magnitude grids, grid resizing, Griffin-Lim."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

from .audio_io import Waveform

log = logging.getLogger(__name__)

LOG_EPS = 1e-5


class ColaError(ValueError):
    pass


@dataclass(frozen=True)
class StftParams:
    window_size: int = 1024
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        n = self.window_size
        if n < 2 or n & (n - 1):
            raise ValueError(f"window_size must be a power of two, got {n}")
        if not 0 < self.hop <= n:
            raise ValueError(f"hop must be in (0, window_size], got {self.hop}")

    @property
    def n_bins(self) -> int:
        return self.window_size // 2 + 1

    def taper(self) -> np.ndarray:
        return signal.get_window(self.window, self.window_size, fftbins=True)

    def is_cola(self) -> bool:
        return bool(signal.check_COLA(self.taper(), self.window_size,
                                      self.window_size - self.hop))

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.window_size) // self.hop


@dataclass(frozen=True, eq=False)
class ComplexSpectrogram:
    """One-sided STFT frames, shape (n_bins, n_frames)."""

    frames: np.ndarray
    params: StftParams
    sample_rate: int
    n_samples: int = -1

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.complex128)
        if f.ndim != 2 or f.shape[0] != self.params.n_bins:
            raise ValueError(f"frames must be ({self.params.n_bins}, n_frames), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("spectrogram entries must be finite")
        object.__setattr__(self, "frames", f)
        if self.n_samples < 0:
            n = self.params.window_size + (f.shape[1] - 1) * self.params.hop
            object.__setattr__(self, "n_samples", n)

    @property
    def magnitude(self) -> "MagnitudeGrid":
        return MagnitudeGrid(np.abs(self.frames), "linear")


@dataclass(frozen=True, eq=False)
class MagnitudeGrid:
    """Real (n_bins, n_frames) matrix, either linear magnitude or log domain."""

    values: np.ndarray
    domain: str = "linear"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"grid must be 2-D, got shape {v.shape}")
        if self.domain not in ("linear", "log"):
            raise ValueError(f"domain must be 'linear' or 'log', got {self.domain!r}")
        if self.domain == "linear" and np.any(v < 0):
            raise ValueError("linear-domain magnitudes must be non-negative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def to_linear(self) -> "MagnitudeGrid":
        if self.domain == "linear":
            return self
        return MagnitudeGrid(np.maximum(np.exp(self.values) - LOG_EPS, 0.0), "linear")


def _frames_of(x: np.ndarray, p: StftParams) -> np.ndarray:
    # (n_frames, window_size) view, frame t starts at t*hop
    return sliding_window_view(x, p.window_size)[::p.hop]


def stft(w: Waveform, p: StftParams = StftParams()) -> ComplexSpectrogram:
    x = w.samples
    if x.size < p.window_size:
        raise ValueError(f"waveform of {x.size} samples is shorter than one window ({p.window_size})")
    frames = _frames_of(x, p) * p.taper()
    spec = np.fft.rfft(frames, axis=1).T
    return ComplexSpectrogram(spec, p, w.sample_rate, x.size)


def istft(s: ComplexSpectrogram) -> Waveform:
    """Least-squares overlap-add inverse of :func:`stft`.

    Samples covered by no window weight (e.g. sample 0 of a periodic Hann
    frame) come back as zero.
    """
    p = s.params
    if not p.is_cola():
        raise ColaError(f"{p.window} window of {p.window_size} with hop {p.hop} is not COLA")
    win = p.taper()
    n_frames = s.frames.shape[1]
    frames = np.fft.irfft(s.frames.T, n=p.window_size, axis=1) * win
    length = max(s.n_samples, p.window_size + (n_frames - 1) * p.hop)
    out = np.zeros(length)
    norm = np.zeros(length)
    w2 = win ** 2
    for t in range(n_frames):
        a = t * p.hop
        out[a:a + p.window_size] += frames[t]
        norm[a:a + p.window_size] += w2
    nz = norm > np.finfo(np.float64).tiny
    out[nz] /= norm[nz]
    out[~nz] = 0.0
    return Waveform(out[:s.n_samples], s.sample_rate)


def log_magnitude(s: ComplexSpectrogram) -> MagnitudeGrid:
    return MagnitudeGrid(np.log(np.abs(s.frames) + LOG_EPS), "log")


def _interp_axis(v: np.ndarray, n: int, axis: int) -> np.ndarray:
    # corner-aligned linear interpolation along one axis
    m = v.shape[axis]
    pos = np.linspace(0.0, m - 1, n)
    lo = np.clip(np.floor(pos).astype(int), 0, m - 2)
    frac = pos - lo
    a = np.take(v, lo, axis=axis)
    b = np.take(v, lo + 1, axis=axis)
    shape = [1] * v.ndim
    shape[axis] = n
    frac = frac.reshape(shape)
    return a * (1.0 - frac) + b * frac


def bilinear(values: np.ndarray, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    return _interp_axis(_interp_axis(v, rows, 0), cols, 1)


def minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = float(v.min()), float(v.max())
    if hi - lo <= 0.0:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def resize_grid(g: MagnitudeGrid, rows: int, cols: int) -> np.ndarray:
    """Bilinear resize to ``rows x cols`` then min-max normalize to [0, 1].

    A constant grid maps to all zeros.
    """
    if rows < 2 or cols < 2:
        raise ValueError("target grid must be at least 2x2")
    if min(g.shape) < 2:
        raise ValueError(f"cannot interpolate a degenerate {g.shape} grid")
    return minmax(bilinear(g.values, rows, cols))


@dataclass
class GriffinLimResult:
    waveform: Waveform
    consistency: np.ndarray
    silent: bool = False
    params: StftParams = field(default_factory=StftParams)


def griffin_lim(m: MagnitudeGrid, p: StftParams = StftParams(), iterations: int = 100,
                seed: int = 0, sample_rate: int = 22050, n_samples: int | None = None
                ) -> GriffinLimResult:
    """Recover a waveform whose STFT magnitude approximates ``m``.

    Starts from uniformly random phase drawn with ``seed``. ``consistency[i]``
    is ``||stft(x_i)| - m|_F / |m|_F`` after projection ``i + 1``.
    """
    if m.domain != "linear":
        raise ValueError("griffin_lim expects a linear-domain magnitude grid")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    mag = m.values
    if mag.shape[0] != p.n_bins:
        raise ValueError(f"grid has {mag.shape[0]} bins, STFT params imply {p.n_bins}")
    if n_samples is None:
        n_samples = p.window_size + (mag.shape[1] - 1) * p.hop
    norm = float(np.linalg.norm(mag))
    if norm == 0.0:
        log.warning("griffin_lim: all-zero magnitude, returning silence")
        return GriffinLimResult(Waveform(np.zeros(n_samples), sample_rate),
                                np.zeros(iterations), silent=True, params=p)

    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random(mag.shape))
    trace = np.empty(iterations)
    x = istft(ComplexSpectrogram(mag * phase, p, sample_rate, n_samples))
    for i in range(iterations):
        spec = stft(x, p).frames
        a = np.abs(spec)
        trace[i] = np.linalg.norm(a - mag) / norm
        if i == iterations - 1:
            break
        ph = np.where(a > 0, spec / np.where(a > 0, a, 1.0), 1.0)
        x = istft(ComplexSpectrogram(mag * ph, p, sample_rate, n_samples))
    return GriffinLimResult(x, trace, params=p)
