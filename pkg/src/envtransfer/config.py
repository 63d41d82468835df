"""JSON run configuration with strict keys and full echo-back.

A config file is a JSON object with the sections ``audio``, ``stft``,
``transfer``, ``mix``, ``train``, ``eval`` and ``corpus``. Every section and
key is optional; missing ones take the defaults below, and unknown ones are
an error. :meth:`RunConfig.to_dict` returns the complete resolved document,
seeds included, so a run can be repeated from its manifest alone.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field

from .audio_io import DEFAULT_RATE, DEFAULT_SECONDS
from .corpus import SynthConfig
from .dsp import StftParams
from .nn.optim import TrainConfig
from .transfer import TransferConfig


class ConfigError(ValueError):
    """Unknown key, wrong type or invalid value in a run configuration."""


@dataclass(frozen=True)
class AudioSection:
    rate: int = DEFAULT_RATE
    seconds: float = DEFAULT_SECONDS


@dataclass(frozen=True)
class MixSection:
    gain_db: float = 0.0


@dataclass(frozen=True)
class TrainSection:
    classifier: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=12, patience=5))
    autoencoder: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=20, learning_rate=2e-3, patience=20))


@dataclass(frozen=True)
class EvalSection:
    n_pairs: int = 50
    pair_seed: int = 0
    split_seed: int = 0


@dataclass(frozen=True)
class CorpusSection:
    """Synthetic-corpus parameters, or paths to real data.

    ``metadata``/``audio_root`` point at an UrbanSound8K-style layout; when
    ``audio_root`` is null the ``URBANSOUND8K_ROOT`` environment variable is
    consulted by the commands that need it.
    """
    n_content_classes: int = 2
    n_style_classes: int = 2
    clips_per_class: int = 50
    seed: int = 0
    metadata: typing.Optional[str] = None
    audio_root: typing.Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    audio: AudioSection = field(default_factory=AudioSection)
    stft: StftParams = field(default_factory=StftParams)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    mix: MixSection = field(default_factory=MixSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    corpus: CorpusSection = field(default_factory=CorpusSection)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        return _build(cls, doc, "")

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        """Read ``path`` (or start from defaults) and apply ``key.path=value`` overrides."""
        doc = {}
        if path is not None:
            try:
                with open(path) as fh:
                    doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: invalid JSON: {e}") from None
        for item in overrides:
            set_path(doc, item)
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return _dump(self)

    def synth(self) -> SynthConfig:
        c = self.corpus
        return SynthConfig(c.n_content_classes, c.n_style_classes, c.clips_per_class, c.seed,
                           self.audio.rate, self.audio.seconds)

    def seeds(self) -> dict:
        """Every seed the pipeline uses, flattened for the manifest."""
        t = self.transfer
        return {
            "transfer.net_seed": t.net_seed, "transfer.init_seed": t.init_seed,
            "transfer.gl_seed": t.gl_seed, "train.classifier.seed": self.train.classifier.seed,
            "train.autoencoder.seed": self.train.autoencoder.seed,
            "eval.pair_seed": self.eval.pair_seed, "eval.split_seed": self.eval.split_seed,
            "corpus.seed": self.corpus.seed,
        }


def set_path(doc: dict, item: str) -> None:
    """Apply one ``section.key=value`` override; the value is parsed as JSON when possible."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like section.key=value, got {item!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    *parents, leaf = key.split(".")
    node = doc
    for p in parents:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key}: {p} is not a section")
    node[leaf] = value


def _build(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'}: expected an object, got {type(doc).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {unknown}; allowed {sorted(names)}")
    kwargs = {}
    for name, value in doc.items():
        path = f"{where}.{name}" if where else name
        kwargs[name] = _coerce(hints[name], value, path)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where or 'config'}: {e}") from None


def _coerce(hint, value, path):
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path)
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        hint = next(a for a in args if a is not type(None))
    if hint is bool or (hint is int and isinstance(value, bool)):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if hint is tuple or origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return tuple(value)
    return value


def _dump(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _dump(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_dump(v) for v in obj]
    return obj


__all__ = ["RunConfig", "ConfigError", "AudioSection", "MixSection", "TrainSection",
           "EvalSection", "CorpusSection", "set_path"]
