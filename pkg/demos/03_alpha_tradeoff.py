"""
How the content weight trades content against style
===================================================

The loss is ``alpha * content + style``. Starting every run from the same
noise, a larger alpha should leave the result closer to the content clip.
Here the distance is measured directly on the log-magnitude grids of a
few synthetic pairs, with one random network shared by every run.
"""
from dataclasses import replace

import numpy as np

from envtransfer.corpus import SynthConfig, clips_as_recordings, make_pairs, synth_corpus
from envtransfer.dsp import StftParams, log_magnitude, stft
from envtransfer.experiment import pair_audio
from envtransfer.transfer import TransferConfig, init_random_net, run_transfer

p = StftParams()
fg, bg = clips_as_recordings(synth_corpus(SynthConfig(clips_per_class=5)))
pairs = pair_audio(make_pairs(fg, bg, 3, seed=0), {r.id: r for r in fg + bg})

base = TransferConfig(n_filters=256, iterations=200, init="noise")
net = init_random_net(base, p.n_bins)
alphas = (0.0, 0.2, 0.9, 5.0)

print("alpha  " + "  ".join(f"pair{pa.pair.pair_id}" for pa in pairs))
for a in alphas:
    cfg = replace(base, alpha=a)
    dists = []
    for pa in pairs:
        res = run_transfer(pa.content, pa.style, cfg, p, net=net)
        xc = log_magnitude(stft(pa.content, p)).values
        dists.append(np.linalg.norm(res.grid.values - xc))
    print(f"{a:5.1f}  " + "  ".join(f"{d:5.0f}" for d in dists))
