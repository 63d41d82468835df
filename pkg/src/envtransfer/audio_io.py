"""Waveform container plus RIFF/WAVE reading, writing and standardization.

Everything downstream works on mono clips at a fixed rate and length, so
:func:`standardize` is the usual entry point after :func:`read_wav`.
"""
from __future__ import annotations

import os
import struct
import wave
from dataclasses import dataclass

import numpy as np

DEFAULT_RATE = 22050
DEFAULT_SECONDS = 4.0

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


class WavError(Exception):
    """Base class for WAV problems."""


class WavFileMissing(WavError, FileNotFoundError):
    pass


class MalformedWav(WavError):
    pass


class UnsupportedEncoding(WavError):
    pass


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono audio clip: float64 samples and an integer sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64).reshape(-1)
        if s.size == 0:
            raise ValueError("waveform must contain at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform samples must be finite")
        rate = int(self.sample_rate)
        if rate <= 0 or rate != self.sample_rate:
            raise ValueError(f"sample rate must be a positive integer, got {self.sample_rate!r}")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", rate)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    __hash__ = None


def _parse_fmt(body: bytes, path) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise MalformedWav(f"{path}: fmt chunk too short ({len(body)} bytes)")
    tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == _EXTENSIBLE:
        if len(body) < 26:
            raise MalformedWav(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE fmt chunk")
        tag = struct.unpack("<H", body[24:26])[0]
    return tag, channels, rate, bits


def read_wav(path) -> Waveform:
    """Read a PCM16 or float32 WAV file as a mono :class:`Waveform`.

    Stereo is collapsed by averaging the two channels. PCM16 samples are
    scaled by 1/32768 so that -32768 maps to exactly -1.0.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise WavFileMissing(f"no such file: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: missing RIFF/WAVE header")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid, size = struct.unpack("<4sI", raw[pos:pos + 8])
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise MalformedWav(f"{path}: chunk {cid!r} truncated")
        if cid == b"fmt ":
            fmt = _parse_fmt(body, path)
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise MalformedWav(f"{path}: no fmt chunk")
    if data is None:
        raise MalformedWav(f"{path}: no data chunk")

    tag, channels, rate, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{path}: {channels} channels (only mono/stereo)")
    if tag == _PCM and bits == 16:
        dtype, scale = "<i2", 1.0 / 32768.0
    elif tag == _IEEE_FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise UnsupportedEncoding(f"{path}: format tag {tag} with {bits}-bit samples")
    if rate <= 0:
        raise MalformedWav(f"{path}: sample rate {rate}")

    frame_bytes = channels * bits // 8
    n_frames = len(data) // frame_bytes
    if n_frames == 0:
        raise MalformedWav(f"{path}: empty data chunk")
    x = np.frombuffer(data[:n_frames * frame_bytes], dtype=dtype).astype(np.float64) * scale
    x = x.reshape(n_frames, channels).mean(axis=1)
    return Waveform(x, rate)


def write_wav(path, w: Waveform) -> None:
    """Write ``w`` as 16-bit mono PCM. Samples outside [-1, 1] are rejected."""
    s = np.asarray(w.samples, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("cannot write non-finite samples")
    peak = float(np.max(np.abs(s)))
    if peak > 1.0:
        raise ValueError(f"samples must lie in [-1, 1] (peak {peak:.4g}); clip or normalize first")
    q = np.clip(np.round(s * 32768.0), -32768, 32767).astype("<i2")
    try:
        raw = open(path, "wb")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    with raw, wave.open(raw, "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(q.tobytes())


def resample_linear(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if src_rate == dst_rate:
        return np.array(samples, dtype=np.float64)
    n_out = int(round(len(samples) * dst_rate / src_rate))
    t_out = np.arange(n_out) * (src_rate / dst_rate)
    return np.interp(t_out, np.arange(len(samples)), samples)


def standardize(w: Waveform, target_rate: int = DEFAULT_RATE,
                target_seconds: float = DEFAULT_SECONDS) -> Waveform:
    """Resample to ``target_rate`` and pad/truncate to ``target_seconds``.

    Padding is zeros at the end. The output length is always
    ``round(target_rate * target_seconds)``.
    """
    if target_rate <= 0 or target_seconds <= 0:
        raise ValueError("target rate and duration must be positive")
    if len(w) == 0:
        raise ValueError("empty waveform")
    n = int(round(target_rate * target_seconds))
    x = resample_linear(w.samples, w.sample_rate, target_rate)
    out = np.zeros(n)
    m = min(n, x.size)
    out[:m] = x[:m]
    return Waveform(out, target_rate)


def peak_normalize(w: Waveform, peak: float = 0.95) -> Waveform:
    """Scale so the largest absolute sample equals ``peak`` (silence unchanged)."""
    m = float(np.max(np.abs(w.samples)))
    if m == 0.0:
        return w
    return Waveform(w.samples * (peak / m), w.sample_rate)
