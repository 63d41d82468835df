"""
Scoring transferred audio against the mixing baseline
=====================================================

The full evaluation in miniature: train the classifier and the
autoencoder on the synthetic corpus, draw pairs from outside the
classifier's test split, generate transferred and mixed versions of each
pair, then compare

* how often the classifier still hears the content (or the style) class,
* how far each generated clip sits from its sources in embedding space,
  relative to the mixed clip.

Training sizes are kept small so this runs in a few minutes.
"""
from envtransfer.corpus import SynthConfig, clips_as_recordings, make_pairs, synth_corpus
from envtransfer.evaluation import labeled, train_autoencoder, train_base_classifier
from envtransfer.experiment import generate, pair_audio, score
from envtransfer.nn import TrainConfig
from envtransfer.transfer import TransferConfig

clips = synth_corpus(SynthConfig(clips_per_class=30))
clf = train_base_classifier(labeled(clips), TrainConfig(epochs=6, patience=3))
print("classifier test accuracy %.2f on %d clips" % (clf.accuracy, len(clf.test)))
ae = train_autoencoder(labeled(clips), TrainConfig(epochs=6, learning_rate=2e-3))
print("autoencoder test mse %.4f" % ae.test_mse)

# pairs never touch the classifier's test clips
test_ids = {c.id for c in clf.test}
fg, bg = clips_as_recordings([c for c in clips if c.id not in test_ids])
pairs = pair_audio(make_pairs(fg, bg, 6, seed=1), {r.id: r for r in fg + bg})

gen = generate(pairs, TransferConfig(n_filters=256, iterations=200, init="noise"))
rep = score(gen, clf.model, ae.model)
print("content-label accuracy: transferred %.2f, mixed %.2f" % (rep.Pt_content, rep.Pm_content))
print("style-label accuracy:   transferred %.2f, mixed %.2f" % (rep.Pt_style, rep.Pm_style))
m = rep.medians()
print("median distance ratio to content %.2f, to style %.2f (below 1: closer than the mix)"
      % (m["ratio_c"], m["ratio_s"]))
