"""Sound-mixing baseline: overlay style audio on content audio."""
from __future__ import annotations

import logging

import numpy as np

from .audio_io import Waveform

log = logging.getLogger(__name__)

PEAK_CAP = 0.95


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def mix(content: Waveform, style: Waveform, style_gain_db: float = 0.0,
        return_flag: bool = False):
    """Equal-RMS sum of the two clips, style scaled by ``style_gain_db``.

    The sum is scaled down to a 0.95 peak only when it exceeds it. Both
    inputs silent gives silence (and ``silent=True`` with ``return_flag``).
    """
    if content.sample_rate != style.sample_rate or len(content) != len(style):
        raise ValueError("content and style must share sample rate and length; standardize first")
    rc, rs = rms(content.samples), rms(style.samples)
    silent = rc == 0.0 and rs == 0.0
    if silent:
        log.warning("mix: both inputs are silent")
        out = np.zeros(len(content))
    else:
        # common reference level so a silent input does not zero the other
        ref = max(rc, rs)
        a = content.samples * (ref / rc) if rc > 0 else np.zeros(len(content))
        b = style.samples * (ref / rs) if rs > 0 else np.zeros(len(style))
        out = a + b * 10.0 ** (style_gain_db / 20.0)
        peak = float(np.max(np.abs(out)))
        if peak > PEAK_CAP:
            out = out * (PEAK_CAP / peak)
    w = Waveform(out, content.sample_rate)
    return (w, silent) if return_flag else w
