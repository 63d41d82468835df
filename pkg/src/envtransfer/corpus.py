"""UrbanSound8K ingestion, content/style pairing and a synthetic corpus."""
from __future__ import annotations

import csv
import logging
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import signal

from .audio_io import DEFAULT_RATE, DEFAULT_SECONDS, Waveform, read_wav, resample_linear, standardize

log = logging.getLogger(__name__)

METADATA_COLUMNS = ("slice_file_name", "fsID", "start", "end", "salience", "fold", "classID", "class")
FOREGROUND, BACKGROUND = 1, 2


class MetadataError(ValueError):
    pass


class InsufficientMaterial(ValueError):
    pass


@dataclass(frozen=True)
class ClipRecord:
    file_name: str
    source_id: str
    start: float
    end: float
    salience: int
    fold: int
    class_id: int
    class_name: str

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"{self.file_name}: end {self.end} <= start {self.start}")
        if self.salience not in (FOREGROUND, BACKGROUND):
            raise ValueError(f"{self.file_name}: salience {self.salience} not in {{1, 2}}")
        if not 0 <= self.class_id < 10:
            raise ValueError(f"{self.file_name}: class id {self.class_id} outside [0, 10)")

    @property
    def relpath(self) -> str:
        return os.path.join(f"fold{self.fold}", self.file_name)


def parse_metadata(path) -> list[ClipRecord]:
    """Parse an UrbanSound8K-style metadata CSV into :class:`ClipRecord` rows."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in METADATA_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise MetadataError(f"{path}: missing column(s) {', '.join(missing)}")
        out = []
        for row in reader:
            try:
                out.append(ClipRecord(
                    file_name=row["slice_file_name"],
                    source_id=row["fsID"],
                    start=float(row["start"]),
                    end=float(row["end"]),
                    salience=int(row["salience"]),
                    fold=int(row["fold"]),
                    class_id=int(row["classID"]),
                    class_name=row["class"],
                ))
            except (TypeError, ValueError) as exc:
                raise MetadataError(f"{path}: line {reader.line_num}: {exc}") from exc
    return out


def class_salience_counts(records) -> dict:
    """``{class_name: {"foreground": n, "background": m, "total": n + m}}``."""
    counts = defaultdict(Counter)
    for r in records:
        counts[r.class_name]["foreground" if r.salience == FOREGROUND else "background"] += 1
    return {name: {"foreground": c["foreground"], "background": c["background"],
                   "total": c["foreground"] + c["background"]} for name, c in sorted(counts.items())}


@dataclass(eq=False)
class Recording:
    id: str
    class_id: int
    class_name: str
    salience: int
    waveform: Waveform
    clips: tuple = ()


@dataclass
class ReconstructionReport:
    foreground: list = field(default_factory=list)
    background: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def by_salience(self, salience: int) -> list:
        return self.foreground if salience == FOREGROUND else self.background

    @property
    def counts(self) -> dict:
        return {"foreground": len(self.foreground), "background": len(self.background),
                "skipped": len(self.skipped)}


def reconstruct_recordings(records, audio_root, rate: int = DEFAULT_RATE) -> ReconstructionReport:
    """Butt-join clips sharing (source recording, salience) in start-time order.

    Unreadable or missing clip files are skipped and listed in the report.
    Each recording takes the most common class among its clips.
    """
    groups = defaultdict(list)
    for r in records:
        groups[(r.source_id, r.salience)].append(r)
    rep = ReconstructionReport()
    for (src, sal), members in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        members.sort(key=lambda r: (r.start, r.file_name))
        parts, used = [], []
        for r in members:
            try:
                w = read_wav(os.path.join(audio_root, r.relpath))
            except (OSError, ValueError) as exc:
                rep.skipped.append((r.file_name, str(exc)))
                continue
            parts.append(resample_linear(w.samples, w.sample_rate, rate))
            used.append(r)
        if not parts:
            continue
        cls = Counter((r.class_id, r.class_name) for r in used).most_common(1)[0][0]
        rec = Recording(f"{src}-{sal}", cls[0], cls[1], sal, Waveform(np.concatenate(parts), rate),
                        tuple(r.file_name for r in used))
        rep.by_salience(sal).append(rec)
    if rep.skipped:
        log.warning("reconstruct_recordings: skipped %d clip(s)", len(rep.skipped))
    return rep


@dataclass(frozen=True)
class PairSpec:
    pair_id: int
    content_id: str
    content_offset: int
    content_class: int
    style_id: str
    style_offset: int
    style_class: int
    seed: int

    def __post_init__(self):
        if self.content_class == self.style_class:
            raise ValueError(f"pair {self.pair_id}: content and style share class {self.style_class}")


def _n_windows(rec: Recording, win: int) -> int:
    return max(1, len(rec.waveform) - win + 1)


def make_pairs(fg, bg, n: int, seed: int = 0, seconds: float = DEFAULT_SECONDS) -> list[PairSpec]:
    """Draw ``n`` distinct cross-class (foreground window, background window) pairs.

    Window offsets are uniform over each recording; recordings shorter than
    the window contribute a single window at offset 0 (padded later).
    """
    fg, bg = list(fg), list(bg)
    if n < 0:
        raise ValueError("n must be non-negative")
    if not fg or not bg:
        raise InsufficientMaterial("need at least one foreground and one background recording")
    rate = fg[0].waveform.sample_rate
    win = int(round(rate * seconds))
    combos = [(i, j) for i, f in enumerate(fg) for j, b in enumerate(bg) if f.class_id != b.class_id]
    capacity = sum(_n_windows(fg[i], win) * _n_windows(bg[j], win) for i, j in combos)
    if capacity < n:
        raise InsufficientMaterial(f"only {capacity} distinct cross-class windows for {n} pairs")

    rng = np.random.default_rng(seed)
    seen = set()
    pairs = []
    attempts = 0
    while len(pairs) < n:
        attempts += 1
        if attempts > 1000 * (n + 10):
            raise InsufficientMaterial(f"gave up after {attempts} draws ({len(pairs)} of {n} pairs)")
        i, j = combos[rng.integers(len(combos))]
        fo = int(rng.integers(_n_windows(fg[i], win)))
        bo = int(rng.integers(_n_windows(bg[j], win)))
        key = (i, fo, j, bo)
        if key in seen:
            continue
        seen.add(key)
        pairs.append(PairSpec(len(pairs), fg[i].id, fo, fg[i].class_id,
                              bg[j].id, bo, bg[j].class_id, int(rng.integers(2 ** 31))))
    return pairs


PAIR_COLUMNS = tuple(f.name for f in fields(PairSpec))


def write_pairs(pairs, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(PAIR_COLUMNS)
        for p in pairs:
            wr.writerow([getattr(p, c) for c in PAIR_COLUMNS])


def read_pairs(path) -> list[PairSpec]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for n, r in enumerate(rows, start=2):
        try:
            out.append(PairSpec(**{c: (r[c] if c.endswith("_id") and c != "pair_id" else int(r[c]))
                                   for c in PAIR_COLUMNS}))
        except (KeyError, TypeError, ValueError) as e:
            raise MetadataError(f"{path}:{n}: bad pair row: {e}") from None
    return out


def cut_window(rec: Recording, offset: int, seconds: float = DEFAULT_SECONDS,
               rate: int = DEFAULT_RATE) -> Waveform:
    w = rec.waveform
    start = Waveform(w.samples[offset:], w.sample_rate) if offset else w
    return standardize(start, rate, seconds)


def split(records, train_frac: float = 0.8, val_frac_of_train: float = 0.1, seed: int = 0):
    """Seeded shuffle, then ``train_frac`` for training with ``val_frac_of_train`` of it held out.

    Returns ``(train, val, test)`` lists; 100 records give (72, 8, 20).
    """
    records = list(records)
    if not records:
        raise ValueError("cannot split an empty collection")
    if not (0 < train_frac < 1 and 0 < val_frac_of_train < 1):
        raise ValueError("fractions must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(records))
    n_train_all = int(round(train_frac * len(records)))
    n_val = int(round(val_frac_of_train * n_train_all))
    train_all = [records[i] for i in order[:n_train_all]]
    test = [records[i] for i in order[n_train_all:]]
    return train_all[n_val:], train_all[:n_val], test


# ------------------------------------------------------------ synthetic data

@dataclass(eq=False)
class Clip:
    id: str
    waveform: Waveform
    class_id: int
    class_name: str
    role: str           # "content" or "style"

    @property
    def salience(self) -> int:
        return FOREGROUND if self.role == "content" else BACKGROUND


@dataclass(frozen=True)
class SynthConfig:
    n_content_classes: int = 2
    n_style_classes: int = 2
    clips_per_class: int = 50
    seed: int = 0
    sample_rate: int = DEFAULT_RATE
    seconds: float = DEFAULT_SECONDS

    def __post_init__(self):
        if self.n_content_classes < 2 or self.n_style_classes < 2:
            raise ValueError("need at least two content and two style classes")
        if self.clips_per_class < 1:
            raise ValueError("clips_per_class must be >= 1")
        if self.n_content_classes + self.n_style_classes > 10:
            raise ValueError("at most ten classes in total")


def content_design(k: int) -> tuple[float, float]:
    """(fundamental Hz, pulses per second) for content class ``k``."""
    return 150.0 * 2.4 ** k, 1.5 + 3.0 * k


def style_design(j: int) -> float:
    """Centre frequency (Hz) of the noise band for style class ``j``."""
    return 350.0 * 3.5 ** j


def _pulse_train(rng, f0, rate, n, sr):
    t = np.arange(n) / sr
    out = np.zeros(n)
    pulse_len = int(0.12 * sr)
    tp = np.arange(pulse_len) / sr
    env = np.exp(-tp / 0.035) * (1.0 - np.exp(-tp / 0.003))
    period = 1.0 / rate
    onset = rng.uniform(0, period)
    while onset < n / sr:
        f = f0 * rng.uniform(0.97, 1.03)
        tone = sum((1.0 / h) * np.sin(2 * np.pi * h * f * tp + rng.uniform(0, 2 * np.pi))
                   for h in range(1, 7) if h * f < sr / 2)
        a = int(onset * sr)
        seg = (env * tone * rng.uniform(0.7, 1.0))[: n - a]
        out[a:a + seg.size] += seg
        onset += period * rng.uniform(0.9, 1.1)
    return out + 0.002 * rng.standard_normal(t.size)


def _noise_texture(rng, fc, n, sr):
    lo, hi = fc / 1.6, min(fc * 1.6, 0.45 * sr)
    sos = signal.butter(3, [lo, hi], btype="bandpass", fs=sr, output="sos")
    x = signal.sosfilt(sos, rng.standard_normal(n + 2048))[2048:]
    t = np.arange(n) / sr
    x *= 1.0 + 0.2 * np.sin(2 * np.pi * rng.uniform(0.2, 0.5) * t + rng.uniform(0, 2 * np.pi))
    return x


def synth_corpus(cfg: SynthConfig = SynthConfig()) -> list[Clip]:
    """Separable stand-in corpus.

    Content classes are decaying harmonic pulse trains whose fundamental and
    repetition rate grow with the class index; style classes are stationary
    band-limited noise textures with class-specific centre frequencies.
    Class ids run over content classes first, then style classes.
    """
    rng = np.random.default_rng(cfg.seed)
    n = int(round(cfg.sample_rate * cfg.seconds))
    clips = []
    for k in range(cfg.n_content_classes):
        f0, rate = content_design(k)
        for i in range(cfg.clips_per_class):
            x = _pulse_train(rng, f0 * rng.uniform(0.95, 1.05), rate * rng.uniform(0.9, 1.1), n,
                             cfg.sample_rate)
            x *= rng.uniform(0.5, 0.9) / np.max(np.abs(x))
            clips.append(Clip(f"c{k}_{i:03d}", Waveform(x, cfg.sample_rate), k, f"pulse{k}", "content"))
    for j in range(cfg.n_style_classes):
        fc = style_design(j)
        cid = cfg.n_content_classes + j
        for i in range(cfg.clips_per_class):
            x = _noise_texture(rng, fc * rng.uniform(0.9, 1.1), n, cfg.sample_rate)
            x *= rng.uniform(0.3, 0.6) / np.max(np.abs(x))
            clips.append(Clip(f"s{j}_{i:03d}", Waveform(x, cfg.sample_rate), cid, f"noise{j}", "style"))
    return clips


def clips_as_recordings(clips) -> tuple[list[Recording], list[Recording]]:
    fg = [Recording(c.id, c.class_id, c.class_name, FOREGROUND, c.waveform, (c.id,))
          for c in clips if c.role == "content"]
    bg = [Recording(c.id, c.class_id, c.class_name, BACKGROUND, c.waveform, (c.id,))
          for c in clips if c.role == "style"]
    return fg, bg


def write_corpus(clips, out_dir) -> str:
    """Write clips as WAV files plus ``labels.csv`` (file, class, role, ...)."""
    from .audio_io import write_wav

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "labels.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["file", "class", "role", "class_name"])
        for c in clips:
            name = f"{c.id}.wav"
            write_wav(os.path.join(out_dir, name), c.waveform)
            wr.writerow([name, c.class_id, c.role, c.class_name])
    return path


def read_corpus(corpus_dir) -> list[Clip]:
    path = os.path.join(corpus_dir, "labels.csv")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for col in ("file", "class", "role"):
        if rows and col not in rows[0]:
            raise MetadataError(f"{path}: missing column {col}")
    clips = []
    for r in rows:
        if r["role"] not in ("content", "style"):
            raise MetadataError(f"{path}: bad role {r['role']!r} for {r['file']}")
        w = read_wav(os.path.join(corpus_dir, r["file"]))
        cid = int(r["class"])
        clips.append(Clip(os.path.splitext(r["file"])[0], w, cid, r.get("class_name") or str(cid), r["role"]))
    return clips
