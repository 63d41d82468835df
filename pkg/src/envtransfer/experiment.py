"""Generate transferred and mixed sets for pairs and score them.

This ties the pieces together for the CLI and the demos: cut the pair
windows, run the transfer and the mixing baseline, then compute classifier
predictions and embedding distances per pair.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .audio_io import DEFAULT_RATE, DEFAULT_SECONDS, Waveform
from .corpus import PairSpec, Recording, cut_window
from .dsp import StftParams
from .evaluation import (EvalReport, FeatureCache, GeneratedClip, clip_to_classifier_input,
                         distances_from_embeddings, embed, predict_labels)
from .mixing import mix
from .nn import Model
from .transfer import TransferConfig, init_random_net, run_transfer

log = logging.getLogger(__name__)


@dataclass(eq=False)
class PairAudio:
    pair: PairSpec
    content: Waveform
    style: Waveform


def pair_audio(pairs, sources: dict, rate: int = DEFAULT_RATE,
               seconds: float = DEFAULT_SECONDS) -> list[PairAudio]:
    """Cut the content and style windows of every pair from ``sources`` (id -> Recording)."""
    out = []
    for p in pairs:
        c: Recording = sources[p.content_id]
        s: Recording = sources[p.style_id]
        out.append(PairAudio(p, cut_window(c, p.content_offset, seconds, rate),
                             cut_window(s, p.style_offset, seconds, rate)))
    return out


@dataclass(eq=False)
class GeneratedPair:
    audio: PairAudio
    transferred: GeneratedClip
    mixed: GeneratedClip
    loss_first: float
    loss_last: float


def generate(pairs_audio, cfg: TransferConfig, stft_p: StftParams = StftParams(),
             gain_db: float = 0.0, tag: str = "") -> list[GeneratedPair]:
    """Transfer and mix every pair; one random network is shared by all pairs."""
    pairs_audio = list(pairs_audio)
    net = init_random_net(cfg, stft_p.n_bins)
    echo = cfg.as_dict()
    out = []
    for pa in pairs_audio:
        p = pa.pair
        res = run_transfer(pa.content, pa.style, cfg, stft_p, net=net)
        base = f"{tag}p{p.pair_id:04d}"
        t = GeneratedClip(base + "_t", res.generated, p.content_class, p.style_class, "transfer",
                          p.content_id, p.style_id, echo)
        m = GeneratedClip(base + "_m", mix(pa.content, pa.style, gain_db), p.content_class,
                          p.style_class, "mix", p.content_id, p.style_id, {"gain_db": gain_db})
        out.append(GeneratedPair(pa, t, m, res.loss.trace_total[0], res.loss.trace_total[-1]))
        log.info("pair %d: loss %.4g -> %.4g", p.pair_id, res.loss.trace_total[0], res.loss.trace_total[-1])
    return out


def score(generated, classifier: Model | None = None, ae: Model | None = None,
          stft_p: StftParams = StftParams(), extra: dict | None = None) -> EvalReport:
    """Per-pair rows (predictions, distances, ratios) and condition accuracies."""
    generated = list(generated)
    rep = EvalReport()
    pt = pm = None
    if classifier is not None and generated:
        feats = FeatureCache(clip_to_classifier_input, stft_p)
        pt = predict_labels(classifier, [g.transferred for g in generated], feats)
        pm = predict_labels(classifier, [g.mixed for g in generated], feats)
        cl = np.array([g.transferred.content_label for g in generated])
        sl = np.array([g.transferred.style_label for g in generated])
        rep.Pt_content, rep.Pt_style = float(np.mean(pt == cl)), float(np.mean(pt == sl))
        rep.Pm_content, rep.Pm_style = float(np.mean(pm == cl)), float(np.mean(pm == sl))
    for i, g in enumerate(generated):
        p = g.audio.pair
        row = dict(extra or {})
        row.update({
            "pair_id": p.pair_id, "content_id": p.content_id, "style_id": p.style_id,
            "content_class": p.content_class, "style_class": p.style_class,
            "loss_first": g.loss_first, "loss_last": g.loss_last,
        })
        if pt is not None:
            row["pred_transfer"] = int(pt[i])
            row["pred_mix"] = int(pm[i])
        if ae is not None:
            e = [embed(ae, w, stft_p) for w in (g.transferred.waveform, g.audio.content,
                                                g.audio.style, g.mixed.waveform)]
            row.update(distances_from_embeddings(*e))
        rep.rows.append(row)
    return rep


def sweep(pairs_audio, base: TransferConfig, field_name: str, values, classifier=None, ae=None,
          stft_p: StftParams = StftParams(), gain_db: float = 0.0):
    """Run :func:`generate` + :func:`score` for each value of one config field.

    Returns ``(rows, summaries)``: all per-pair rows with the swept value in
    column ``field_name``, and one summary dict per value.
    """
    rows, summaries = [], []
    for v in values:
        cfg = replace(base, **{field_name: type(getattr(base, field_name))(v)})
        gen = generate(pairs_audio, cfg, stft_p, gain_db, tag=f"{field_name}{v}_")
        rep = score(gen, classifier, ae, stft_p, {field_name: getattr(cfg, field_name)})
        rows.extend(rep.rows)
        s = rep.summary()
        s[field_name] = getattr(cfg, field_name)
        summaries.append(s)
    return rows, summaries


SUMMARY_COLUMNS = ("n_pairs", "Pt_content", "Pt_style", "Pm_content", "Pm_style",
                   "median_d_x_c", "median_d_x_s", "median_d_z_c", "median_d_z_s",
                   "median_ratio_c", "median_ratio_s", "median_loss_ratio")


def _num(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return float("nan")


def _median(vals):
    vals = [v for v in vals if np.isfinite(v)]
    return float(np.median(vals)) if vals else float("nan")


def summarize_rows(rows, by: str | None = None) -> list[dict]:
    """One summary per distinct value of column ``by`` (all rows when None).

    Works on rows as produced by :func:`score` or read back from CSV, so
    values may be strings. Groups keep first-appearance order.
    """
    groups: dict = {}
    for r in rows:
        groups.setdefault(r.get(by) if by else None, []).append(r)
    out = []
    for key, rs in groups.items():
        s = {by: key} if by else {}
        s["n_pairs"] = len(rs)
        for cond, col in (("Pt", "pred_transfer"), ("Pm", "pred_mix")):
            have = [r for r in rs if r.get(col) not in (None, "")]
            for lab in ("content", "style"):
                s[f"{cond}_{lab}"] = (float(np.mean([int(_num(r[col])) == int(_num(r[f"{lab}_class"]))
                                                     for r in have])) if have else float("nan"))
        ok = [r for r in rs if str(r.get("flagged", "")).lower() not in ("true", "1")]
        for k in ("d_x_c", "d_x_s", "d_z_c", "d_z_s", "ratio_c", "ratio_s"):
            s[f"median_{k}"] = _median([_num(r.get(k)) for r in ok])
        s["median_loss_ratio"] = _median([_num(r.get("loss_last")) / _num(r.get("loss_first"))
                                          for r in rs])
        out.append(s)
    return out
