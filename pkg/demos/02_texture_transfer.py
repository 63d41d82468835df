"""
Transferring a background texture onto a foreground event
=========================================================

A content clip (a decaying harmonic pulse train) and a style clip (band
limited noise) are drawn from the synthetic corpus. A single random 1-D
convolution layer over the log-magnitude grid defines the loss: content
is matched feature-by-feature, style through the Gram matrix of the
features. Adam descends on the grid, and Griffin-Lim turns the result
into audio.

Output WAVs go to ``demo_out/`` in the working directory.
"""
import os

import numpy as np

from envtransfer.audio_io import write_wav
from envtransfer.corpus import SynthConfig, synth_corpus
from envtransfer.dsp import StftParams, log_magnitude, stft
from envtransfer.mixing import mix
from envtransfer.transfer import TransferConfig, run_transfer

clips = synth_corpus(SynthConfig(clips_per_class=2))
content = next(c for c in clips if c.role == "content")
style = next(c for c in clips if c.role == "style" and c.class_name == "noise1")
print("content:", content.id, content.class_name, "| style:", style.id, style.class_name)

# 512 random filters keep this to well under a minute on one core
cfg = TransferConfig(n_filters=512, iterations=300, alpha=0.2, init="noise")
res = run_transfer(content.waveform, style.waveform, cfg)

loss = res.loss
print("loss %.1f -> %.1f (content %.2f, style %.2f at the end)"
      % (loss.trace_total[0], loss.trace_total[-1], loss.trace_content[-1], loss.trace_style[-1]))
print("timings (s):", {k: round(v, 1) for k, v in res.timings.items()})

# how far did the grid travel from either source?
p = StftParams()
xc = log_magnitude(stft(content.waveform, p)).values
xs = log_magnitude(stft(style.waveform, p)).values
print("grid distance to content %.1f, to style %.1f" % (np.linalg.norm(res.grid.values - xc),
                                                        np.linalg.norm(res.grid.values - xs)))

os.makedirs("demo_out", exist_ok=True)
write_wav("demo_out/content.wav", content.waveform)
write_wav("demo_out/style.wav", style.waveform)
write_wav("demo_out/transferred.wav", res.generated)
write_wav("demo_out/mixed.wav", mix(content.waveform, style.waveform))
print("wrote demo_out/{content,style,transferred,mixed}.wav")
