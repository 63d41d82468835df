"""
Spectrograms, overlap-add and Griffin-Lim
=========================================

The transfer works on log-magnitude grids and has to turn them back into
sound without any phase. This script walks through that path on a short
synthetic clip: analysis, exact resynthesis with the true phase, and
phase recovery with Griffin-Lim.
"""
import numpy as np

from envtransfer.audio_io import Waveform
from envtransfer.dsp import StftParams, griffin_lim, istft, log_magnitude, stft

rate = 22050
t = np.arange(2 * rate) / rate

# a gliding tone with a little noise, loud enough to be heard when written out
x = 0.4 * np.sin(2 * np.pi * (300 + 200 * t) * t) + 0.01 * np.random.default_rng(0).normal(size=t.size)
clip = Waveform(x, rate)

# Hann window of 1024 samples, hop 256, no centring; every hop is COLA for Hann/4
p = StftParams()
spec = stft(clip, p)
print("frames:", spec.frames.shape, "(bins, frames)")

# with the true phase, least-squares overlap-add returns the interior exactly
back = istft(spec)
inner = slice(p.window_size, len(clip) - p.window_size)
print("round-trip interior error: %.2e" % np.max(np.abs(back.samples[inner] - x[inner])))

# the grid the optimizer sees: log(|X| + eps)
grid = log_magnitude(spec)
print("log-magnitude range: %.2f .. %.2f" % (grid.values.min(), grid.values.max()))

# drop the phase and recover one; the consistency trace only goes down
res = griffin_lim(spec.magnitude, p, iterations=100, seed=0, sample_rate=rate, n_samples=len(clip))
trace = res.consistency
for it in (0, 9, 49, 99):
    print("iteration %3d  relative inconsistency %.3f" % (it + 1, trace[it]))
print("monotone:", bool(np.all(np.diff(trace) <= 1e-9)))
