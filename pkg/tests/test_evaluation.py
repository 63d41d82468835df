import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from envtransfer.audio_io import Waveform
from envtransfer.corpus import SynthConfig, synth_corpus
from envtransfer.evaluation import (AE_GRID, CLASSIFIER_FLATTEN, DROP_RATES, LATENT_SIZE, ENCODER_DEPTH,
                                    EvalReport, GeneratedClip, LeakageError, build_autoencoder,
                                    build_classifier, clip_to_autoencoder_input, clip_to_classifier_input,
                                    condition_accuracy, distances_from_embeddings, embed, labeled,
                                    preservation_ratios, retrain_with_augmentation, train_base_classifier,
                                    write_report)
from envtransfer.mixing import mix
from envtransfer.nn import TrainConfig, forward, predict


def valid(n, k=3):
    return n - k + 1


@pytest.fixture(scope="module")
def clips():
    return synth_corpus(SynthConfig(clips_per_class=10, seconds=1.0))


@pytest.fixture(scope="module")
def base_run(clips):
    return train_base_classifier(labeled(clips), TrainConfig(epochs=1))


def test_front_end_shapes(clips):
    w = clips[0].waveform
    x = clip_to_classifier_input(w)
    assert x.shape == (64, 44, 1) and x.min() == 0.0 and x.max() == 1.0
    a = clip_to_autoencoder_input(w)
    assert a.shape == (*AE_GRID, 2) and 0 <= a.min() and a.max() <= 1


def test_classifier_architecture():
    # two valid 3x3 convs, pool, two valid convs, pool, 64 channels
    h, w = 64, 44
    h, w = valid(valid(h)) // 2, valid(valid(w)) // 2
    h, w = valid(valid(h)) // 2, valid(valid(w)) // 2
    assert h * w * 64 == CLASSIFIER_FLATTEN == 6656
    m = build_classifier(5)
    kinds = [l.kind for l in m.layers]
    assert m.shapes[kinds.index("flatten") + 1] == (6656,)
    assert [l.rate for l in m.layers if l.kind == "dropout"] == list(DROP_RATES) == [0.15, 0.2, 0.5]
    assert m.output_shape == (5,) and kinds[-1] == "softmax"
    out = predict(m, np.random.default_rng(0).uniform(size=(3, 64, 44, 1)))
    np.testing.assert_allclose(out.sum(axis=1), 1.0)


def test_autoencoder_architecture():
    m = build_autoencoder()
    assert m.shapes[ENCODER_DEPTH] == (60 // 4, 32 // 4, 8) == (15, 8, 8)
    assert LATENT_SIZE == 15 * 8 * 8 == 960
    assert m.output_shape == m.input_shape == (60, 32, 2)
    y = predict(m, np.random.default_rng(1).uniform(size=(2, 60, 32, 2)))
    assert np.all((y > 0) & (y < 1))
    assert build_autoencoder(output="softmax").layers[-1].kind == "softmax"
    with pytest.raises(ValueError):
        build_autoencoder(output="tanh")


def test_condition_accuracy_matches_brute_force(clips):
    m = build_classifier(4, seed=3)
    gen = [GeneratedClip(f"g{i}", mix(clips[i].waveform, clips[25 + i].waveform), i % 2, 2 + i % 2, "mix")
           for i in range(12)]
    pred = [int(np.argmax(predict(m, clip_to_classifier_input(g.waveform)[None])[0])) for g in gen]
    pc = np.mean([p == g.content_label for p, g in zip(pred, gen)])
    ps = np.mean([p == g.style_label for p, g in zip(pred, gen)])
    assert condition_accuracy(m, gen) == (pc, ps)
    with pytest.raises(ValueError):
        condition_accuracy(m, [])


def test_generated_clip_validation():
    w = Waveform(np.zeros(10), 100)
    with pytest.raises(ValueError):
        GeneratedClip("g", w, 1, 1, "mix")
    with pytest.raises(ValueError):
        GeneratedClip("g", w, 1, 2, "blend")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_distances_are_metric(seed):
    ex, ec, es, ez = np.random.default_rng(seed).normal(size=(4, 20))
    d = distances_from_embeddings(ex, ec, es, ez)
    assert d["d_x_c"] == distances_from_embeddings(ec, ex, es, ez)["d_x_c"]
    assert d["d_x_c"] <= d["d_z_c"] + np.linalg.norm(ex - ez) + 1e-12
    assert d["ratio_c"] == pytest.approx(d["d_x_c"] / d["d_z_c"]) and not d["flagged"]
    same = distances_from_embeddings(ex, ec, es, ex)
    assert same["ratio_c"] == same["ratio_s"] == 1.0


def test_zero_denominator_is_flagged():
    e = np.ones(4)
    d = distances_from_embeddings(np.zeros(4), e, np.zeros(4), e)
    assert math.isnan(d["ratio_c"]) and d["ratio_s"] == 0.0 and d["flagged"]


def test_embedding_and_ratios(clips):
    ae = build_autoencoder(seed=0)
    quiet = clips[0].waveform
    loud = Waveform(quiet.samples * 1.1, quiet.sample_rate)
    e = embed(ae, quiet)
    assert e.shape == (LATENT_SIZE,)
    np.testing.assert_array_equal(e, forward(ae, clip_to_autoencoder_input(quiet)[None],
                                             upto=ENCODER_DEPTH)[0].reshape(-1))
    near = np.linalg.norm(embed(ae, loud) - e)
    far = np.linalg.norm(embed(ae, clips[30].waveform) - e)
    assert near < 0.1 * far
    silent = embed(ae, Waveform(np.zeros(len(quiet)), quiet.sample_rate))
    assert np.all(np.isfinite(silent))
    r = preservation_ratios(quiet, clips[1].waveform, clips[30].waveform, quiet, ae)
    assert r["ratio_c"] == r["ratio_s"] == 1.0


def test_empty_augmentation_value_is_exactly_zero(base_run):
    res = retrain_with_augmentation(base_run, [])
    assert res.P0 == base_run.accuracy and res.value == 0.0 and res.P1 == res.P0


def test_augmentation_value_and_leakage(clips, base_run):
    by_id = {c.id: c for c in clips}
    tr = [by_id[c.id] for c in base_run.train]
    fg = [c for c in tr if c.role == "content"][:4]
    bg = [c for c in tr if c.role == "style"][:4]
    gen = [GeneratedClip(f"m{i}", mix(f.waveform, b.waveform), f.class_id, b.class_id, "mix", f.id, b.id)
           for i, (f, b) in enumerate(zip(fg, bg))]
    res = retrain_with_augmentation(base_run, gen)
    assert res.value == res.P1 - res.P0 and 0 <= res.P1 <= 1
    t = base_run.test[0]
    leak = GeneratedClip("bad", t.waveform, 0, 3, "mix", t.id, bg[0].id)
    with pytest.raises(LeakageError):
        retrain_with_augmentation(base_run, gen + [leak])


def test_split_is_recorded(base_run):
    ids = base_run.split_ids
    assert (len(ids["train"]), len(ids["val"]), len(ids["test"])) == (29, 3, 8)
    assert not set(ids["test"]) & (set(ids["train"]) | set(ids["val"]))


def test_report_medians_and_json(tmp_path):
    rep = EvalReport()
    rep.set_value(0.5, 0.75)
    assert rep.value == 0.25
    rep.rows = [distances_from_embeddings(*np.eye(4)[[0, 1, 2, 3]]),
                distances_from_embeddings(np.zeros(2), np.ones(2), np.ones(2), np.ones(2)),
                distances_from_embeddings(*(np.arange(8.0).reshape(4, 2) ** 2))]
    med = rep.medians()
    good = [r["ratio_c"] for r in rep.rows if not r["flagged"]]
    assert med["ratio_c"] == pytest.approx(np.median(good))
    write_report(rep, tmp_path / "e.csv", tmp_path / "e.json")
    summary = json.loads((tmp_path / "e.json").read_text())
    assert summary["n_pairs"] == 3 and summary["n_flagged"] == 1 and summary["Pt_content"] is None
    assert (tmp_path / "e.csv").read_text().splitlines()[0].startswith("d_x_c,")
