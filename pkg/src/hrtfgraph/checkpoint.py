"""Versioned binary checkpoints.

Layout: 8-byte magic ``HGCKPT1\\n``, an 8-byte little-endian header length,
a UTF-8 JSON header, then the named arrays concatenated as little-endian
float64 in C order.  The header lists model type, hyperparameters, and each
array's name and shape in payload order.  Serialization is canonical
(sorted keys), so identical models produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .features import FeatureStats, RffEncoder
from .model_p import ModelP, ModelPConfig
from .model_u import ModelU, ModelUConfig

MAGIC = b"HGCKPT1\n"


class CheckpointError(Exception):
    pass


def write_checkpoint(path, model_type: str, hyper: dict, arrays):
    """``arrays`` is an ordered list of (name, float64 ndarray)."""
    header = {
        "model_type": model_type,
        "hyper": hyper,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Returns (model_type, hyper, {name: array})."""
    p = Path(path)
    if not p.is_file():
        raise CheckpointError(f"no checkpoint at {p}")
    raw = p.read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{p} is not a checkpoint (bad magic)")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"unreadable checkpoint header: {err}") from None
    off += hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if off + nbytes > len(raw):
            raise CheckpointError(f"truncated payload in {p}")
        arrays[entry["name"]] = np.frombuffer(
            raw, dtype="<f8", count=count, offset=off
        ).reshape(shape).copy()
        off += nbytes
    if off != len(raw):
        raise CheckpointError(f"trailing bytes in {p}")
    return header["model_type"], header["hyper"], arrays


def _param_arrays(model) -> list:
    return [(name, p.data) for name, p in model.named_parameters()]


def save_model_p(model: ModelP, path):
    arrays = _param_arrays(model)
    if model.rff is not None:
        arrays.append(("rff.matrix", model.rff.matrix))
    if model.feature_stats is not None:
        arrays.append(("stats.mean", model.feature_stats.mean))
        arrays.append(("stats.std", model.feature_stats.std))
    write_checkpoint(path, "model_p", model.hyper(), arrays)


def load_model_p(path) -> ModelP:
    model_type, hyper, arrays = read_checkpoint(path)
    if model_type != "model_p":
        raise CheckpointError(f"expected a model_p checkpoint, got {model_type}")
    config = ModelPConfig(
        heads_gat1=hyper["heads_gat1"],
        heads_gat2=hyper["heads_gat2"],
        heads_fusion=hyper["heads_fusion"],
        dim_gat1=hyper["dim_gat1"],
        dim_gat2=hyper["dim_gat2"],
        dim_fusion=hyper["dim_fusion"],
        decoder_hidden=hyper["decoder_hidden"],
        rff_features=hyper["rff_features"],
        rff_sigma=hyper["rff_sigma"],
        use_clue=hyper["use_clue"],
        use_fusion=hyper["use_fusion"],
        feature_kind=hyper["feature_kind"],
        retrieval_count=hyper["retrieval_count"],
    )
    model = ModelP.create(
        np.random.default_rng(0), hyper["K"], hyper["measurement_count"],
        config,
    )
    _load_params(model, arrays)
    if model.config.use_clue:
        model.rff = RffEncoder(matrix=_pop(arrays, "rff.matrix"))
    if "stats.mean" in arrays:
        model.feature_stats = FeatureStats(
            mean=_pop(arrays, "stats.mean"), std=_pop(arrays, "stats.std")
        )
    _check_consumed(arrays, path)
    return model


def save_model_u(model: ModelU, path):
    write_checkpoint(path, "model_u", model.hyper(), _param_arrays(model))


def load_model_u(path) -> ModelU:
    model_type, hyper, arrays = read_checkpoint(path)
    if model_type != "model_u":
        raise CheckpointError(f"expected a model_u checkpoint, got {model_type}")
    config = ModelUConfig(
        heads_gat1=hyper["heads_gat1"],
        heads_gat2=hyper["heads_gat2"],
        dim_gat1=hyper["dim_gat1"],
        dim_gat2=hyper["dim_gat2"],
    )
    model = ModelU.create(np.random.default_rng(0), hyper["K"], config)
    _load_params(model, arrays)
    _check_consumed(arrays, path)
    return model


def _load_params(model, arrays: dict):
    for name, p in model.named_parameters():
        if name not in arrays:
            raise CheckpointError(f"checkpoint missing array {name!r}")
        value = arrays.pop(name)
        if value.shape != p.data.shape:
            raise CheckpointError(
                f"array {name!r} has shape {value.shape}, "
                f"model expects {p.data.shape}"
            )
        p.data = value


def _pop(arrays: dict, name: str) -> np.ndarray:
    if name not in arrays:
        raise CheckpointError(f"checkpoint missing array {name!r}")
    return arrays.pop(name)


def _check_consumed(arrays: dict, path):
    if arrays:
        raise CheckpointError(
            f"unexpected arrays in {path}: {sorted(arrays)}"
        )
