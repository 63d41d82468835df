"""``envtransfer`` command line: one subcommand per pipeline stage.

Every invocation writes its artifacts into a run directory (``--out``, or
``<runs-root>/<UTC timestamp>-seed<pair_seed>``) together with
``manifest.json``: config echo, seeds, package versions, inputs, outputs
and exit status. Exit codes: 0 success, 1 usage/config error, 2 data
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import platform
import sys

import numpy as np

from . import __version__
from .audio_io import Waveform, WavError, read_wav, standardize, write_wav
from .config import ConfigError, RunConfig
from .corpus import (BACKGROUND, Clip, InsufficientMaterial, MetadataError, class_salience_counts,
                     clips_as_recordings, make_pairs, parse_metadata, read_corpus, read_pairs,
                     reconstruct_recordings, split, synth_corpus, write_corpus, write_pairs)
from .dsp import log_magnitude, stft
from .evaluation import (ClassifierRun, FeatureCache, LeakageError, _jsonable, clip_to_classifier_input,
                         labeled, retrain_with_augmentation, train_autoencoder,
                         train_base_classifier, write_rows_csv)
from .experiment import SUMMARY_COLUMNS, generate, pair_audio, score, summarize_rows, sweep
from .mixing import mix
from .nn import load_model, load_sidecar, save_model
from .nn.optim import NonFiniteGradient
from .nn.train import TrainingError
from .transfer import TransferDiverged, run_transfer

log = logging.getLogger("envtransfer")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATASET_ENV = "URBANSOUND8K_ROOT"
RUNS_ENV = "ENVTRANSFER_RUNS"
DEFAULT_ALPHAS = (0.0, 0.1, 0.2, 0.5, 0.9)
DEFAULT_WIDTHS = (2, 4, 8, 16)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ runs

class Run:
    """Run directory plus the manifest being accumulated for it."""

    def __init__(self, command: str, argv, cfg: RunConfig, out: str | None, runs_root: str | None):
        if out is None:
            root = runs_root or os.environ.get(RUNS_ENV, "runs")
            stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
            out = os.path.join(root, f"{stamp}-seed{cfg.eval.pair_seed}")
            base, n = out, 1
            while os.path.exists(out):
                out, n = f"{base}-{n}", n + 1
        os.makedirs(out, exist_ok=True)
        self.dir = out
        self.manifest = {
            "command": command,
            "argv": list(argv),
            "config": cfg.to_dict(),
            "seeds": cfg.seeds(),
            "versions": {"envtransfer": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": _scipy_version()},
            "inputs": {},
            "outputs": [],
            "results": {},
        }

    def path(self, name: str) -> str:
        self.manifest["outputs"].append(name)
        return os.path.join(self.dir, name)

    def finish(self, code: int, error: str | None = None) -> None:
        self.manifest["exit_code"] = code
        self.manifest["status"] = "ok" if code == EXIT_OK else "error"
        if error:
            self.manifest["error"] = error
        with open(os.path.join(self.dir, "manifest.json"), "w") as fh:
            json.dump(_jsonable(self.manifest), fh, indent=2, sort_keys=True)


def _scipy_version() -> str:
    import scipy

    return scipy.__version__


# --------------------------------------------------------------- helpers

def _load_clips(args, cfg: RunConfig) -> list[Clip]:
    if getattr(args, "corpus", None):
        clips = read_corpus(args.corpus)
    elif getattr(args, "synth", False):
        clips = synth_corpus(cfg.synth())
    else:
        raise UsageError("give --corpus DIR or --synth")
    rate, secs = cfg.audio.rate, cfg.audio.seconds
    return [c if (c.waveform.sample_rate == rate and len(c.waveform) == round(rate * secs))
            else Clip(c.id, standardize(c.waveform, rate, secs), c.class_id, c.class_name, c.role)
            for c in clips]


def _non_test_sources(clips, cfg: RunConfig):
    """Recordings available for pairing: everything outside the classifier's test split."""
    _, _, test = split(clips, 0.8, 0.1, cfg.eval.split_seed)
    test_ids = {c.id for c in test}
    fg, bg = clips_as_recordings([c for c in clips if c.id not in test_ids])
    return fg, bg


def _pairs_audio(args, cfg: RunConfig, run: Run):
    clips = _load_clips(args, cfg)
    fg, bg = _non_test_sources(clips, cfg)
    if args.pairs:
        pairs = read_pairs(args.pairs)
        run.manifest["inputs"]["pairs"] = args.pairs
    else:
        pairs = make_pairs(fg, bg, cfg.eval.n_pairs, cfg.eval.pair_seed, cfg.audio.seconds)
        write_pairs(pairs, run.path("pairs.csv"))
    sources = {r.id: r for r in fg + bg}
    missing = sorted({i for p in pairs for i in (p.content_id, p.style_id)} - set(sources))
    if missing:
        raise MetadataError(f"pairs reference {len(missing)} unknown or test-split clip(s), e.g. {missing[0]}")
    return clips, pair_audio(pairs, sources, cfg.audio.rate, cfg.audio.seconds)


def _load_models(args, run: Run):
    clf = ae = None
    if getattr(args, "classifier", None):
        clf = load_model(args.classifier)
        run.manifest["inputs"]["classifier"] = args.classifier
    if getattr(args, "autoencoder", None):
        ae = load_model(args.autoencoder)
        run.manifest["inputs"]["autoencoder"] = args.autoencoder
    return clf, ae


def _read_clip(path: str, cfg: RunConfig) -> Waveform:
    return standardize(read_wav(path), cfg.audio.rate, cfg.audio.seconds)


def _floats(text: str, kind=float) -> list:
    try:
        vals = [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise UsageError("empty value list")
    return vals


def _write_history(hist, path: str) -> None:
    d = hist.as_dict()
    n = len(d["train_loss"])
    rows = [{"epoch": i + 1, **{k: (d[k][i] if i < len(d[k]) else "") for k in
                                ("train_loss", "train_acc", "val_loss", "val_acc")}}
            for i in range(n)]
    write_rows_csv(rows, path, ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])


def _write_summary(summaries, path: str, by: str | None) -> None:
    cols = ([by] if by else []) + list(SUMMARY_COLUMNS)
    write_rows_csv(summaries, path, cols)


# -------------------------------------------------------------- commands

def cmd_synth_corpus(args, cfg, run):
    clips = synth_corpus(cfg.synth())
    out = os.path.join(run.dir, "corpus")
    write_corpus(clips, out)
    run.manifest["outputs"].append("corpus/")
    run.manifest["results"] = {"n_clips": len(clips)}
    print(out)


def cmd_ingest(args, cfg, run):
    root = os.environ.get(DATASET_ENV)
    metadata = args.metadata or cfg.corpus.metadata or (
        root and os.path.join(root, "metadata", "UrbanSound8K.csv"))
    audio_root = args.audio_root or cfg.corpus.audio_root or (root and os.path.join(root, "audio"))
    if not metadata or not audio_root:
        raise UsageError(f"give --metadata and --audio-root, or set {DATASET_ENV}")
    run.manifest["inputs"].update(metadata=metadata, audio_root=audio_root)
    records = parse_metadata(metadata)
    counts = class_salience_counts(records)
    with open(run.path("counts.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["class", "foreground", "background", "total"])
        for name, c in counts.items():
            wr.writerow([name, c["foreground"], c["background"], c["total"]])
    rep = reconstruct_recordings(records, audio_root, cfg.audio.rate)
    recs = rep.foreground + rep.background
    write_rows_csv(
        [{"id": r.id, "class": r.class_id, "class_name": r.class_name, "salience": r.salience,
          "n_clips": len(r.clips), "seconds": len(r.waveform) / r.waveform.sample_rate} for r in recs],
        run.path("recordings.csv"), ["id", "class", "class_name", "salience", "n_clips", "seconds"])
    if rep.skipped:
        write_rows_csv([{"file": f, "reason": why} for f, why in rep.skipped],
                       run.path("skipped.csv"), ["file", "reason"])
    if args.export_recordings:
        write_corpus([Clip(r.id, r.waveform, r.class_id, r.class_name,
                           "style" if r.salience == BACKGROUND else "content") for r in recs],
                     os.path.join(run.dir, "recordings"))
        run.manifest["outputs"].append("recordings/")
    run.manifest["results"] = {"n_records": len(records), **rep.counts}
    print(json.dumps(run.manifest["results"]))


def cmd_pairs(args, cfg, run):
    clips = _load_clips(args, cfg)
    fg, bg = _non_test_sources(clips, cfg)
    pairs = make_pairs(fg, bg, cfg.eval.n_pairs, cfg.eval.pair_seed, cfg.audio.seconds)
    write_pairs(pairs, run.path("pairs.csv"))
    run.manifest["results"] = {"n_pairs": len(pairs)}


def cmd_transfer(args, cfg, run):
    run.manifest["inputs"].update(content=args.content, style=args.style)
    content, style = _read_clip(args.content, cfg), _read_clip(args.style, cfg)
    res = run_transfer(content, style, cfg.transfer, cfg.stft)
    write_wav(run.path("generated.wav"), res.generated)
    with open(run.path("transfer.json"), "w") as fh:
        json.dump(_jsonable(res.record()), fh, indent=2, sort_keys=True)
    if args.grid_csv:
        np.savetxt(run.path("grid.csv"), res.grid.values, delimiter=",", fmt="%.9g")
        np.savetxt(run.path("content_grid.csv"), log_magnitude(stft(content, cfg.stft)).values,
                   delimiter=",", fmt="%.9g")
    run.manifest["results"] = {"loss_first": res.loss.trace_total[0], "loss_last": res.loss.trace_total[-1],
                               "gl_consistency": float(res.gl_consistency[-1])}


def cmd_mix(args, cfg, run):
    run.manifest["inputs"].update(content=args.content, style=args.style)
    gain = cfg.mix.gain_db if args.gain_db is None else args.gain_db
    run.manifest["results"] = {"gain_db": gain}
    write_wav(run.path("mixed.wav"), mix(_read_clip(args.content, cfg), _read_clip(args.style, cfg), gain))


def cmd_train_classifier(args, cfg, run):
    clips = labeled(_load_clips(args, cfg))
    res = train_base_classifier(clips, cfg.train.classifier, cfg.eval.split_seed)
    save_model(res.model, run.path("classifier.etnn"),
               {"accuracy": res.accuracy, "n_classes": res.n_classes, "split": res.split_ids,
                "split_seed": cfg.eval.split_seed})
    run.manifest["outputs"].append("classifier.etnn.json")
    _write_history(res.history, run.path("classifier_history.csv"))
    run.manifest["results"] = {"test_accuracy": res.accuracy, "best_epoch": res.history.best_epoch}
    print(f"test accuracy {res.accuracy:.4f}")


def cmd_train_autoencoder(args, cfg, run):
    clips = labeled(_load_clips(args, cfg))
    res = train_autoencoder(clips, cfg.train.autoencoder)
    save_model(res.model, run.path("autoencoder.etnn"),
               {"test_mse": res.test_mse, "train": [c.id for c in res.train],
                "test": [c.id for c in res.test]})
    run.manifest["outputs"].append("autoencoder.etnn.json")
    _write_history(res.history, run.path("autoencoder_history.csv"))
    run.manifest["results"] = {"test_mse": res.test_mse}
    print(f"test mse {res.test_mse:.6g}")


def cmd_evaluate(args, cfg, run):
    clf, ae = _load_models(args, run)
    clips, pa = _pairs_audio(args, cfg, run)
    gen = generate(pa, cfg.transfer, cfg.stft, cfg.mix.gain_db)
    rep = score(gen, clf, ae, cfg.stft)
    if args.retrain:
        if clf is None:
            raise UsageError("--retrain needs --classifier")
        extra = load_sidecar(args.classifier).get("extra", {})
        if "split" not in extra:
            raise MetadataError(f"{args.classifier}: sidecar has no split record")
        by_id = {c.id: c for c in labeled(clips)}
        try:
            parts = {k: [by_id[i] for i in extra["split"][k]] for k in ("train", "val", "test")}
        except KeyError as e:
            raise MetadataError(f"classifier split names clip {e} missing from the corpus") from None
        feats = FeatureCache(clip_to_classifier_input, cfg.stft)
        base = ClassifierRun(clf, float(extra["accuracy"]), parts["train"], parts["val"], parts["test"],
                             int(extra["n_classes"]), None, cfg.train.classifier)
        rr = retrain_with_augmentation(base, [g.transferred for g in gen], feats)
        rep.set_value(rr.P0, rr.P1)
    write_rows_csv(rep.rows, run.path("eval.csv"))
    with open(run.path("eval.json"), "w") as fh:
        json.dump(_jsonable(rep.summary()), fh, indent=2, sort_keys=True)
    if args.keep_audio:
        for g in gen:
            for c in (g.transferred, g.mixed):
                write_wav(run.path(f"{c.id}.wav"), c.waveform)
    run.manifest["results"] = rep.summary()


def _cmd_sweep(args, cfg, run, field_name, values, stem):
    clf, ae = _load_models(args, run)
    _, pa = _pairs_audio(args, cfg, run)
    rows, _ = sweep(pa, cfg.transfer, field_name, values, clf, ae, cfg.stft, cfg.mix.gain_db)
    write_rows_csv(rows, run.path(f"{stem}.csv"))
    summaries = summarize_rows(rows, field_name)
    _write_summary(summaries, run.path(f"{stem}_summary.csv"), field_name)
    run.manifest["results"] = {"values": values, "n_runs": len(rows)}


def cmd_sweep_alpha(args, cfg, run):
    alphas = _floats(args.alphas) if args.alphas else list(DEFAULT_ALPHAS)
    _cmd_sweep(args, cfg, run, "alpha", alphas, "sweep_alpha")


def cmd_sweep_width(args, cfg, run):
    widths = _floats(args.widths, int) if args.widths else list(DEFAULT_WIDTHS)
    _cmd_sweep(args, cfg, run, "filter_width", widths, "sweep_width")


def cmd_report(args, cfg, run):
    rows, by = [], args.by
    for path in args.inputs:
        with open(path, newline="") as fh:
            part = list(csv.DictReader(fh))
        if by is None:
            by = next((c for c in ("alpha", "filter_width") if part and c in part[0]), None)
        for r in part:
            r.setdefault("source", os.path.basename(path))
        rows.extend(part)
        run.manifest["inputs"].setdefault("csv", []).append(path)
    if not rows:
        raise MetadataError("no rows in the given CSV files")
    by = by or "source"
    if by not in rows[0]:
        raise UsageError(f"column {by!r} not found")
    _write_summary(summarize_rows(rows, by), run.path("summary.csv"), by)
    run.manifest["results"] = {"grouped_by": by, "n_rows": len(rows)}


# ---------------------------------------------------------------- parser

_SHORTCUTS = {
    "alpha": ("transfer.alpha", float), "iterations": ("transfer.iterations", int),
    "n_filters": ("transfer.n_filters", int), "filter_width": ("transfer.filter_width", int),
    "init": ("transfer.init", str), "lr": ("transfer.learning_rate", float),
    "n_pairs": ("eval.n_pairs", int), "seed": ("eval.pair_seed", int),
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="envtransfer", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def add(name, fn, help_text, data=False, models=False, pairs=False):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. transfer.alpha=0.5 (repeatable)")
        sp.add_argument("--out", help="run directory (default: <runs-root>/<timestamp>-seed<seed>)")
        sp.add_argument("--runs-root", help=f"parent of generated run directories (env {RUNS_ENV})")
        sp.add_argument("-v", "--verbose", action="store_true")
        for flag, (key, kind) in _SHORTCUTS.items():
            sp.add_argument("--" + flag.replace("_", "-"), dest=flag, type=kind, help=f"sets {key}")
        if data:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--corpus", help="corpus directory (WAV files + labels.csv)")
            g.add_argument("--synth", action="store_true", help="generate the synthetic corpus in memory")
        if models:
            sp.add_argument("--classifier", help="trained classifier (.etnn)")
            sp.add_argument("--autoencoder", help="trained autoencoder (.etnn)")
        if pairs:
            sp.add_argument("--pairs", help="pairs CSV (default: draw eval.n_pairs fresh pairs)")
        return sp

    add("synth-corpus", cmd_synth_corpus, "write the synthetic labeled corpus")
    sp = add("ingest", cmd_ingest, "parse UrbanSound8K metadata and rebuild recordings")
    sp.add_argument("--metadata", help=f"metadata CSV (default $%s/metadata/UrbanSound8K.csv)" % DATASET_ENV)
    sp.add_argument("--audio-root", help=f"directory holding fold1..fold10 (default ${DATASET_ENV}/audio)")
    sp.add_argument("--export-recordings", action="store_true",
                    help="also write the recordings as a corpus directory")
    add("pairs", cmd_pairs, "draw content/style pairs from the non-test clips", data=True)
    for name, fn, text in (("transfer", cmd_transfer, "transfer style onto content"),
                           ("mix", cmd_mix, "mixing baseline")):
        sp = add(name, fn, text)
        sp.add_argument("--content", required=True)
        sp.add_argument("--style", required=True)
        if name == "transfer":
            sp.add_argument("--grid-csv", action="store_true", help="also export log-magnitude grids as CSV")
        else:
            sp.add_argument("--gain-db", type=float, help="style gain (sets mix.gain_db)")
    add("train-classifier", cmd_train_classifier, "train the base classifier", data=True)
    add("train-autoencoder", cmd_train_autoencoder, "train the embedding autoencoder", data=True)
    sp = add("evaluate", cmd_evaluate, "transfer + mix every pair and score both", data=True,
             models=True, pairs=True)
    sp.add_argument("--retrain", action="store_true", help="also report P0, P1 and value (needs --classifier)")
    sp.add_argument("--keep-audio", action="store_true", help="write generated WAVs into the run directory")
    sp = add("sweep-alpha", cmd_sweep_alpha, "evaluate over a grid of alpha", data=True, models=True, pairs=True)
    sp.add_argument("--alphas", help="comma-separated grid (default 0,0.1,0.2,0.5,0.9)")
    sp = add("sweep-width", cmd_sweep_width, "evaluate over filter widths", data=True, models=True, pairs=True)
    sp.add_argument("--widths", help="comma-separated widths (default 2,4,8,16)")
    sp = add("report", cmd_report, "aggregate evaluation CSVs into a summary table")
    sp.add_argument("inputs", nargs="+", help="CSV files written by evaluate or the sweeps")
    sp.add_argument("--by", help="grouping column (default: alpha, filter_width, or source file)")
    return p


def _overrides(args) -> list[str]:
    out = list(args.set)
    for flag, (key, _) in _SHORTCUTS.items():
        v = getattr(args, flag, None)
        if v is not None:
            out.append(f"{key}={json.dumps(v)}")
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    run = None
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = RunConfig.load(args.config, _overrides(args))
        run = Run(args.command, argv, cfg, args.out, args.runs_root)
        if args.config:
            run.manifest["inputs"]["config"] = args.config
        args.fn(args, cfg, run)
        code, err = EXIT_OK, None
    except (UsageError, ConfigError) as e:
        code, err = EXIT_USAGE, str(e)
    except (TransferDiverged, NonFiniteGradient, TrainingError, FloatingPointError) as e:
        code, err = EXIT_NUMERIC, f"{type(e).__name__}: {e}"
    except (WavError, MetadataError, InsufficientMaterial, LeakageError, OSError, ValueError) as e:
        code, err = EXIT_DATA, f"{type(e).__name__}: {e}"
    if err:
        print(f"error: {err}", file=sys.stderr)
    if run is not None:
        run.finish(code, err)
    return code


if __name__ == "__main__":
    sys.exit(main())
