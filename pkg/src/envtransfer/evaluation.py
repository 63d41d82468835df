"""Classifier- and embedding-based evaluation of generated audio.

Two criteria compare transferred clips against the mixing baseline:

* accuracy: a base classifier trained without generated data is scored on
  the transferred and mixed sets against both content and style labels,
  and a retrained classifier measures the accuracy gain from augmentation;
* preservation: Euclidean distances between AutoEncoder embeddings of the
  generated clip and its two sources, normalized by the same distances for
  the mixed clip.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .audio_io import Waveform
from .dsp import StftParams, log_magnitude, minmax, resize_grid, stft
from .nn import (Conv2D, Dense, Dropout, Flatten, MaxPool2, Model, ReLU, Sigmoid, Softmax,
                 TrainConfig, Upsample2, accuracy, forward, predict, train)
from .nn.layers import ShapeError

log = logging.getLogger(__name__)

CLASSIFIER_GRID = (64, 44)
CLASSIFIER_FLATTEN = 6656
DROP_RATES = (0.15, 0.2, 0.5)
AE_GRID = (60, 32)
LATENT_SHAPE = (15, 8, 8)
LATENT_SIZE = 960
ENCODER_DEPTH = 6


class LeakageError(ValueError):
    pass


# ------------------------------------------------------------ front ends

def clip_to_classifier_input(w: Waveform, stft_p: StftParams = StftParams()) -> np.ndarray:
    g = log_magnitude(stft(w, stft_p))
    return resize_grid(g, *CLASSIFIER_GRID)[..., None]


def clip_to_autoencoder_input(w: Waveform, stft_p: StftParams = StftParams()) -> np.ndarray:
    """Two channels: normalized log-magnitude and its rescaled time difference."""
    ch1 = resize_grid(log_magnitude(stft(w, stft_p)), *AE_GRID)
    diff = np.zeros_like(ch1)
    diff[:, :-1] = ch1[:, 1:] - ch1[:, :-1]
    return np.stack([ch1, minmax(diff)], axis=-1)


# ---------------------------------------------------------- architectures

def build_classifier(n_classes: int, seed: int = 0, grid=CLASSIFIER_GRID) -> Model:
    layers = [
        Conv2D(32), ReLU(), Conv2D(32), ReLU(), MaxPool2(), Dropout(DROP_RATES[0]),
        Conv2D(64), ReLU(), Conv2D(64), ReLU(), MaxPool2(), Dropout(DROP_RATES[1]),
        Flatten(), Dense(64), ReLU(), Dropout(DROP_RATES[2]), Dense(n_classes), Softmax(),
    ]
    model = Model(layers, (*grid, 1), seed)
    flat = model.shapes[[l.kind for l in layers].index("flatten") + 1][0]
    if flat != CLASSIFIER_FLATTEN:
        raise ShapeError(f"classifier flatten size is {flat}, expected {CLASSIFIER_FLATTEN}")
    return model


def build_autoencoder(seed: int = 0, output: str = "sigmoid") -> Model:
    """Encoder 16->8 channels with two poolings, decoder 8->16->2 channels.

    ``output="softmax"`` applies a channel softmax at the end instead of
    the default per-unit sigmoid.
    """
    if output not in ("sigmoid", "softmax"):
        raise ValueError(f"output must be 'sigmoid' or 'softmax', got {output!r}")
    layers = [
        Conv2D(16, padding="same"), ReLU(), MaxPool2(),
        Conv2D(8, padding="same"), ReLU(), MaxPool2(),
        Conv2D(8, padding="same"), ReLU(), Upsample2(),
        Conv2D(16, padding="same"), ReLU(), Upsample2(),
        Conv2D(2, padding="same"), Sigmoid() if output == "sigmoid" else Softmax(),
    ]
    model = Model(layers, (*AE_GRID, 2), seed)
    if model.shapes[ENCODER_DEPTH] != LATENT_SHAPE:
        raise ShapeError(f"latent shape is {model.shapes[ENCODER_DEPTH]}, expected {LATENT_SHAPE}")
    if model.output_shape != model.input_shape:
        raise ShapeError(f"decoder output {model.output_shape} != input {model.input_shape}")
    return model


# -------------------------------------------------------------- datasets

@dataclass(eq=False)
class LabeledClip:
    id: str
    waveform: Waveform
    label: int


@dataclass(eq=False)
class GeneratedClip:
    id: str
    waveform: Waveform
    content_label: int
    style_label: int
    condition: str            # "transfer" or "mix"
    content_id: str = ""
    style_id: str = ""
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.condition not in ("transfer", "mix"):
            raise ValueError(f"condition must be 'transfer' or 'mix', got {self.condition!r}")
        if self.content_label == self.style_label:
            raise ValueError(f"{self.id}: content and style labels coincide")


class FeatureCache:
    """Memoizes per-clip network inputs by clip id."""

    def __init__(self, fn, stft_p: StftParams = StftParams()):
        self.fn = fn
        self.stft_p = stft_p
        self._store = {}

    def __call__(self, clips) -> np.ndarray:
        out = []
        for c in clips:
            key = c.id
            if key not in self._store:
                self._store[key] = self.fn(c.waveform, self.stft_p)
            out.append(self._store[key])
        return np.stack(out) if out else np.zeros((0,))


def labeled(clips) -> list[LabeledClip]:
    """Corpus clips (anything with ``id``, ``waveform``, ``class_id``) as :class:`LabeledClip`."""
    return [LabeledClip(c.id, c.waveform, c.class_id) for c in clips]


# ----------------------------------------------------------- classifiers

@dataclass(eq=False)
class ClassifierRun:
    model: Model
    accuracy: float
    train: list
    val: list
    test: list
    n_classes: int
    history: object
    cfg: TrainConfig

    @property
    def split_ids(self) -> dict:
        return {k: [c.id for c in getattr(self, k)] for k in ("train", "val", "test")}


def _check_classes(clips, min_per_class=10):
    counts = {}
    for c in clips:
        counts[c.label] = counts.get(c.label, 0) + 1
    if len(counts) < 2:
        raise ValueError(f"need at least two classes, found {len(counts)}")
    small = {k: v for k, v in counts.items() if v < min_per_class}
    if small:
        raise ValueError(f"classes with fewer than {min_per_class} clips: {small}")
    return max(counts) + 1


def _fit_classifier(train_clips, val_clips, n_classes, cfg, feats):
    model = build_classifier(n_classes, cfg.seed)
    x, y = feats(train_clips), np.array([c.label for c in train_clips])
    xv = feats(val_clips) if val_clips else None
    yv = np.array([c.label for c in val_clips]) if val_clips else None
    model, hist = train(model, x, y, cfg, "cross_entropy", xv, yv)
    return model, hist


def train_base_classifier(clips, cfg: TrainConfig = TrainConfig(), split_seed: int | None = None,
                          feats: FeatureCache | None = None) -> ClassifierRun:
    """Train on 80% (10% of it held out for selection) and score the other 20%."""
    from .corpus import split

    n_classes = _check_classes(clips)
    feats = feats or FeatureCache(clip_to_classifier_input)
    tr, va, te = split(clips, 0.8, 0.1, cfg.seed if split_seed is None else split_seed)
    model, hist = _fit_classifier(tr, va, n_classes, cfg, feats)
    p0 = accuracy(model, feats(te), np.array([c.label for c in te]))
    return ClassifierRun(model, p0, tr, va, te, n_classes, hist, cfg)


@dataclass
class RetrainResult:
    model: Model
    P0: float
    P1: float
    value: float
    history: object


def retrain_with_augmentation(base: ClassifierRun, generated, feats: FeatureCache | None = None,
                              cfg: TrainConfig | None = None) -> RetrainResult:
    """Retrain from scratch on base train + generated clips (content labels).

    The test split is the one ``base`` was scored on. A generated clip whose
    content or style source belongs to that split raises :class:`LeakageError`.
    """
    generated = list(generated)
    test_ids = {c.id for c in base.test}
    leaks = [g.id for g in generated if g.content_id in test_ids or g.style_id in test_ids]
    if leaks:
        raise LeakageError(f"{len(leaks)} generated clip(s) derive from test clips, e.g. {leaks[0]}")
    cfg = cfg or base.cfg
    feats = feats or FeatureCache(clip_to_classifier_input)
    aug = list(base.train) + [LabeledClip(g.id, g.waveform, g.content_label) for g in generated]
    model, hist = _fit_classifier(aug, base.val, base.n_classes, cfg, feats)
    p1 = accuracy(model, feats(base.test), np.array([c.label for c in base.test]))
    return RetrainResult(model, base.accuracy, p1, p1 - base.accuracy, hist)


def predict_labels(model: Model, clips, feats: FeatureCache | None = None) -> np.ndarray:
    feats = feats or FeatureCache(clip_to_classifier_input)
    return predict(model, feats(clips)).argmax(axis=1)


def condition_accuracy(model: Model, generated, feats: FeatureCache | None = None):
    """Fraction of clips predicted as their content label, and as their style label."""
    generated = list(generated)
    if not generated:
        raise ValueError("empty generated set")
    pred = predict_labels(model, generated, feats)
    content = np.array([g.content_label for g in generated])
    style = np.array([g.style_label for g in generated])
    return float(np.mean(pred == content)), float(np.mean(pred == style))


# ------------------------------------------------------------ autoencoder

@dataclass(eq=False)
class AutoEncoderRun:
    model: Model
    history: object
    train: list
    test: list
    test_mse: float


def train_autoencoder(clips, cfg: TrainConfig = TrainConfig(epochs=40, learning_rate=2e-3),
                      output: str = "sigmoid", feats: FeatureCache | None = None) -> AutoEncoderRun:
    from .corpus import split
    from .nn.train import evaluate

    clips = list(clips)
    if len(clips) < 2:
        raise ValueError("need at least two clips")
    feats = feats or FeatureCache(clip_to_autoencoder_input)
    tr, va, te = split(clips, 0.8, 0.1, cfg.seed)
    tr = tr + va   # plain 80/20 split, no selection set
    model = build_autoencoder(cfg.seed, output)
    x = feats(tr)
    model, hist = train(model, x, x, cfg, "mse")
    xt = feats(te)
    test_mse = evaluate(model, xt, xt, "mse")[0] if len(te) else float("nan")
    return AutoEncoderRun(model, hist, tr, te, test_mse)


def embed(ae: Model, w: Waveform, stft_p: StftParams = StftParams()) -> np.ndarray:
    x = clip_to_autoencoder_input(w, stft_p)[None]
    z, _ = forward(ae, x, upto=ENCODER_DEPTH)
    return z.reshape(-1)


def preservation_ratios(x: Waveform, x_c: Waveform, x_s: Waveform, z: Waveform, ae: Model,
                        stft_p: StftParams = StftParams()) -> dict:
    """Embedding distances of generated ``x`` and mixed ``z`` to both sources.

    Ratios with a zero denominator are NaN and set ``flagged``.
    """
    e = {k: embed(ae, w, stft_p) for k, w in (("x", x), ("c", x_c), ("s", x_s), ("z", z))}
    return distances_from_embeddings(e["x"], e["c"], e["s"], e["z"])


def distances_from_embeddings(ex, ec, es, ez) -> dict:
    d = {
        "d_x_c": float(np.linalg.norm(ex - ec)),
        "d_x_s": float(np.linalg.norm(ex - es)),
        "d_z_c": float(np.linalg.norm(ez - ec)),
        "d_z_s": float(np.linalg.norm(ez - es)),
    }
    flagged = False
    for num, den, key in (("d_x_c", "d_z_c", "ratio_c"), ("d_x_s", "d_z_s", "ratio_s")):
        if d[den] == 0.0:
            d[key] = float("nan")
            flagged = True
        else:
            d[key] = d[num] / d[den]
    d["flagged"] = flagged
    return d


# ---------------------------------------------------------------- report

@dataclass
class EvalReport:
    P0: float = float("nan")
    P1: float = float("nan")
    value: float = float("nan")
    Pt_content: float = float("nan")
    Pt_style: float = float("nan")
    Pm_content: float = float("nan")
    Pm_style: float = float("nan")
    rows: list = field(default_factory=list)

    def set_value(self, p0: float, p1: float):
        self.P0, self.P1 = p0, p1
        self.value = p1 - p0

    def medians(self) -> dict:
        keys = ("d_x_c", "d_x_s", "d_z_c", "d_z_s", "ratio_c", "ratio_s")
        out = {}
        for k in keys:
            vals = [r[k] for r in self.rows if k in r and not r.get("flagged")]
            vals = [v for v in vals if np.isfinite(v)]
            out[k] = float(np.median(vals)) if vals else float("nan")
        return out

    def summary(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "rows"}
        d["n_pairs"] = len(self.rows)
        d["n_flagged"] = sum(bool(r.get("flagged")) for r in self.rows)
        d["medians"] = self.medians()
        return d


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else "nan"
    return v


def write_rows_csv(rows, path, columns=None) -> None:
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c, "")) for c in columns])


def write_report(report: EvalReport, csv_path, json_path) -> None:
    write_rows_csv(report.rows, csv_path)
    with open(json_path, "w") as fh:
        json.dump(_jsonable(report.summary()), fh, indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
