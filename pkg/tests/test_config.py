import json

import pytest

from envtransfer.config import ConfigError, RunConfig, set_path
from envtransfer.dsp import StftParams
from envtransfer.transfer import TransferConfig


def test_defaults_and_round_trip():
    cfg = RunConfig()
    assert cfg.transfer == TransferConfig() and cfg.stft == StftParams()
    doc = cfg.to_dict()
    json.dumps(doc)
    assert RunConfig.from_dict(doc) == cfg
    assert doc["transfer"]["alpha"] == 0.2 and doc["audio"]["rate"] == 22050


def test_partial_file_and_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"transfer": {"alpha": 0.5, "iterations": 7}, "audio": {"seconds": 1}}))
    cfg = RunConfig.load(p, ["transfer.alpha=0.9", "eval.n_pairs=3", "transfer.init=noise"])
    assert cfg.transfer.alpha == 0.9 and cfg.transfer.iterations == 7 and cfg.transfer.init == "noise"
    assert cfg.audio.seconds == 1.0 and isinstance(cfg.audio.seconds, float)
    assert cfg.eval.n_pairs == 3 and cfg.transfer.n_filters == 4096
    assert cfg.synth().seconds == 1.0
    assert cfg.seeds()["eval.pair_seed"] == 0


def test_nested_train_section():
    cfg = RunConfig.load(None, ["train.classifier.epochs=2"])
    assert cfg.train.classifier.epochs == 2 and cfg.train.autoencoder.epochs == 20


@pytest.mark.parametrize("doc, match", [
    ({"transfer": {"alpah": 0.1}}, "unknown key"),
    ({"extra": {}}, "unknown key"),
    ({"transfer": {"iterations": "many"}}, "integer"),
    ({"transfer": {"alpha": True}}, "number"),
    ({"transfer": {"alpha": -1}}, "alpha"),
    ({"transfer": 3}, "object"),
    ({"corpus": {"metadata": 5}}, "string"),
])
def test_rejections(doc, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_dict(doc)


def test_bad_json_and_override_syntax(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        RunConfig.load(p)
    with pytest.raises(ConfigError):
        set_path({}, "no-equals-sign")
    doc = {"transfer": 1}
    with pytest.raises(ConfigError, match="not a section"):
        set_path(doc, "transfer.alpha=1")
