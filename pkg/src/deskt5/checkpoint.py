"""Checkpoint directory format.

A checkpoint directory holds two files:

``manifest.json``
    Human-readable JSON: step, model config, vocab layout, optimizer
    hyperparameters, run manifest, the SHA-256 of ``tensors.bin`` and one entry
    per tensor (name, shape, dtype, byte offset, byte length).
``tensors.bin``
    Concatenated little-endian float32 tensors in row-major order. Parameters
    are stored under ``param/<name>``, Adam moments under ``adam_m/<name>`` and
    ``adam_v/<name>``.
"""
from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .model import ModelConfig, OptState, Params, param_shapes
from .vocab import Vocab

FORMAT = "deskt5-checkpoint"
VERSION = 1
TENSOR_DTYPE = "<f4"
MANIFEST = "manifest.json"
DATA = "tensors.bin"


class CheckpointError(ValueError):
    pass


class CheckpointIntegrityWarning(UserWarning):
    pass


@dataclass
class Checkpoint:
    step: int
    params: Params
    opt_state: Optional[OptState]
    vocab: Vocab
    run: dict = field(default_factory=dict)
    integrity_ok: bool = True

    @property
    def config(self) -> ModelConfig:
        return self.params.config


def save_checkpoint(c: Checkpoint, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    hasher = hashlib.sha256()
    groups = [("param", c.params.tensors)]
    if c.opt_state is not None:
        groups += [("adam_m", c.opt_state.m), ("adam_v", c.opt_state.v)]
    tmp = d / (DATA + ".tmp")
    with open(tmp, "wb") as f:
        for prefix, tensors in groups:
            for name in param_shapes(c.config):
                arr = np.ascontiguousarray(tensors[name], dtype=TENSOR_DTYPE)
                data = arr.tobytes(order="C")
                f.write(data)
                hasher.update(data)
                entries.append({"name": f"{prefix}/{name}", "shape": list(arr.shape),
                                "dtype": "float32-le", "offset": offset, "nbytes": len(data)})
                offset += len(data)
    os.replace(tmp, d / DATA)
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "step": int(c.step),
        "model_config": c.config.as_dict(),
        "vocab": c.vocab.layout(),
        "optimizer": None if c.opt_state is None else {
            "name": "adam", "step": int(c.opt_state.step), "lr": c.opt_state.lr,
            "beta1": c.opt_state.beta1, "beta2": c.opt_state.beta2, "eps": c.opt_state.eps},
        "run": c.run,
        "data_file": DATA,
        "sha256": hasher.hexdigest(),
        "tensors": entries,
    }
    with open(d / MANIFEST, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=False)
        f.write("\n")
    return d


def load_checkpoint(directory) -> Checkpoint:
    d = Path(directory)
    with open(d / MANIFEST, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{d}: not a {FORMAT} directory")
    cfg = ModelConfig(**manifest["model_config"])
    vocab = Vocab(tuple(manifest["vocab"]["lang_codes"]), manifest["vocab"]["sentinel_count"])
    raw = (d / manifest.get("data_file", DATA)).read_bytes()
    ok = hashlib.sha256(raw).hexdigest() == manifest["sha256"]
    if not ok:
        warnings.warn(f"{d}: tensor data does not match the stored content hash",
                      CheckpointIntegrityWarning, stacklevel=2)

    index = {e["name"]: e for e in manifest["tensors"]}
    shapes = param_shapes(cfg)

    def read(prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for name, shape in shapes.items():
            key = f"{prefix}/{name}"
            if key not in index:
                raise CheckpointError(f"tensor {key!r} missing from manifest")
            e = index[key]
            if tuple(e["shape"]) != shape:
                raise CheckpointError(f"tensor {key!r} has shape {tuple(e['shape'])}, expected {shape}")
            if e["dtype"] != "float32-le":
                raise CheckpointError(f"tensor {key!r} has unsupported dtype {e['dtype']!r}")
            nbytes = int(np.prod(shape)) * 4
            if e["nbytes"] != nbytes or e["offset"] + nbytes > len(raw):
                raise CheckpointError(f"tensor {key!r} byte range does not fit the data file")
            out[name] = np.frombuffer(raw, dtype=TENSOR_DTYPE, count=int(np.prod(shape)),
                                      offset=e["offset"]).reshape(shape).astype(np.float32)
        return out

    params = Params(cfg, read("param"))
    opt = None
    if manifest.get("optimizer") is not None:
        o = manifest["optimizer"]
        opt = OptState(read("adam_m"), read("adam_v"), o["step"], o["lr"], o["beta1"], o["beta2"], o["eps"])
    return Checkpoint(manifest["step"], params, opt, vocab, manifest.get("run", {}), integrity_ok=ok)
