"""Model files.

Both trained and merged models are stored as uncompressed ``.npz`` archives
(one ``.npy`` member per tensor, float64, C order, so values round-trip bit for
bit) plus a ``meta`` member holding a JSON document.

Trained model (``meta.format == "karst-model"``), for layer ``i``:

    layers.{i}.w0, layers.{i}.bias0            frozen base (bias0 optional)
    layers.{i}.kernels.{k}.c / .a / .b         adapter factors, k < n_kernels
    layers.{i}.s1, layers.{i}.s2               re-scaling (optional)
    layers.{i}.weight, layers.{i}.bias         trainable head (probe layers)

``meta.layers[i]`` records ``kind`` ("adapted" or "linear"), ``d_in``,
``d_out``, ``m``, ``r``, ``n_kernels``, ``seed``, ``has_bias`` and
``has_rescale``. Merged model (``"karst-merged"``) only has
``layers.{i}.weight`` and optionally ``layers.{i}.bias``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .adapter import AdaptedLinear, KarstAdapter, KronKernel
from .rescale import RescaleParams
from .training.model import ToyModel, TrainableLinear

MODEL_FORMAT = "karst-model"
MERGED_FORMAT = "karst-merged"
FORMAT_VERSION = 1


class ModelFileError(ValueError):
    pass


def _write(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    payload = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in arrays.items()}
    payload["meta"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def _read(path, expected_format: str) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with np.load(path, allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
        meta = json.loads(str(arrays.pop("meta")))
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    if meta.get("format") != expected_format:
        raise ModelFileError(f"{path} is not a {expected_format} file (format={meta.get('format')!r})")
    if meta.get("version") != FORMAT_VERSION:
        raise ModelFileError(f"{path} has unsupported format version {meta.get('version')!r}")
    return arrays, meta


def layer_meta(layer) -> dict:
    if isinstance(layer, TrainableLinear):
        return {"kind": "linear", "d_in": layer.d_in, "d_out": layer.d_out}
    info = {
        "kind": "adapted",
        "d_in": layer.d_in,
        "d_out": layer.d_out,
        "has_bias": layer.bias0 is not None,
        "has_rescale": layer.rescale is not None,
        "n_kernels": 0,
    }
    if layer.adapter is not None:
        a = layer.adapter
        info.update(m=a.m, r=a.r, n_kernels=a.n_kernels, seed=a.seed)
    return info


def model_arrays(model: ToyModel) -> dict[str, np.ndarray]:
    arrays = dict(model.frozen_arrays())
    arrays.update(model.named_parameters())
    return arrays


def save_model(path, model: ToyModel, extra_meta: Optional[dict] = None) -> None:
    meta = {"format": MODEL_FORMAT, "version": FORMAT_VERSION, "layers": [layer_meta(l) for l in model.layers]}
    meta.update(extra_meta or {})
    _write(path, model_arrays(model), meta)


def load_model(path) -> tuple[ToyModel, dict]:
    arrays, meta = _read(path, MODEL_FORMAT)
    try:
        layers = []
        for i, info in enumerate(meta["layers"]):
            p = f"layers.{i}."
            if info["kind"] == "linear":
                layers.append(TrainableLinear(arrays[p + "weight"], arrays[p + "bias"]))
                continue
            adapter = None
            if info["n_kernels"]:
                kernels = [
                    KronKernel(arrays[f"{p}kernels.{k}.c"], arrays[f"{p}kernels.{k}.a"], arrays[f"{p}kernels.{k}.b"])
                    for k in range(info["n_kernels"])
                ]
                adapter = KarstAdapter(kernels, info.get("seed"))
            rescale = RescaleParams(arrays[p + "s1"], arrays[p + "s2"]) if info["has_rescale"] else None
            bias0 = arrays[p + "bias0"] if info["has_bias"] else None
            layers.append(AdaptedLinear(arrays[p + "w0"], bias0, adapter, rescale))
        model = ToyModel(layers)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file {path}: {exc}") from exc
    return model, meta


def save_merged(path, merged: list[tuple[np.ndarray, Optional[np.ndarray]]], extra_meta: Optional[dict] = None) -> None:
    arrays = {}
    for i, (w, b) in enumerate(merged):
        arrays[f"layers.{i}.weight"] = w
        if b is not None:
            arrays[f"layers.{i}.bias"] = b
    meta = {"format": MERGED_FORMAT, "version": FORMAT_VERSION, "n_layers": len(merged)}
    meta.update(extra_meta or {})
    _write(path, arrays, meta)


def load_merged(path) -> tuple[list[tuple[np.ndarray, Optional[np.ndarray]]], dict]:
    arrays, meta = _read(path, MERGED_FORMAT)
    try:
        merged = [(arrays[f"layers.{i}.weight"], arrays.get(f"layers.{i}.bias")) for i in range(meta["n_layers"])]
    except KeyError as exc:
        raise ModelFileError(f"malformed merged file {path}: missing {exc}") from exc
    return merged, meta


def trainable_names(path) -> list[str]:
    """Names of the serialized trainable tensors (everything but the frozen base)."""
    arrays, _ = _read(path, MODEL_FORMAT)
    return [k for k in arrays if not (k.endswith(".w0") or k.endswith(".bias0"))]


def count_serialized_trainables(path) -> int:
    arrays, _ = _read(path, MODEL_FORMAT)
    return sum(v.size for k, v in arrays.items() if not (k.endswith(".w0") or k.endswith(".bias0")))
