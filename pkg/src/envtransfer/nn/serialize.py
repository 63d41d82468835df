"""Binary model container plus a JSON sidecar.

Layout: ``ETNN`` magic, uint32 version, uint32 header length, UTF-8 JSON
header (layer specs, input shape, seed), then every parameter block as
little-endian float64 in layer order (names sorted within a layer).
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .model import Model

MAGIC = b"ETNN"
VERSION = 1


def save_model(model: Model, path, extra: dict | None = None) -> None:
    header = json.dumps({"layers": model.specs(), "input_shape": list(model.input_shape),
                         "seed": model.seed}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for _, _, arr in model.param_items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    sidecar = {
        "seed": model.seed,
        "input_shape": list(model.input_shape),
        "output_shape": list(model.output_shape),
        "layers": model.specs(),
        "params": [{"layer": i, "name": n, "shape": list(a.shape)} for i, n, a in model.param_items()],
        "n_params": model.n_params(),
    }
    if extra:
        sidecar["extra"] = extra
    with open(os.fspath(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a model file")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    model = Model.from_specs(header["layers"], header["input_shape"], header["seed"])
    pos = 12 + hlen
    for _, name, arr in list(model.param_items()):
        nbytes = arr.size * 8
        block = raw[pos:pos + nbytes]
        if len(block) != nbytes:
            raise ValueError(f"{path}: truncated parameter block {name}")
        arr[...] = np.frombuffer(block, dtype="<f8").reshape(arr.shape)
        pos += nbytes
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return model


def load_sidecar(path) -> dict:
    with open(os.fspath(path) + ".json") as fh:
        return json.load(fh)
