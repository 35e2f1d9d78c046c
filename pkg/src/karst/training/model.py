"""Toy network of adapted linear layers with hand-written reverse-mode gradients.

Layers are chained with ``tanh`` in between; the last layer emits logits for a
mean softmax cross-entropy. Batches are row-major ``(n, features)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np

from ..adapter import AdaptedLinear, adapter_apply_transpose, merge
from ..numerics import DTYPE, ShapeError, as_matrix, as_vector


class TrainableLinear:
    """Plain affine head whose weight and bias are both trained (linear probing)."""

    def __init__(self, weight: np.ndarray, bias: Optional[np.ndarray] = None) -> None:
        self.weight = as_matrix(weight, "weight").copy()
        self.bias = np.zeros(self.weight.shape[1]) if bias is None else as_vector(bias, "bias").copy()

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def affine(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"layer expects inputs of length {self.d_in}, got {x.shape[-1]}")
        return x @ self.weight + self.bias

    forward = affine

    def copy(self) -> "TrainableLinear":
        return TrainableLinear(self.weight, self.bias)


Layer = Union[AdaptedLinear, TrainableLinear]


class ToyModel:
    def __init__(self, layers: list[Layer]) -> None:
        if not layers:
            raise ValueError("model needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].d_in != layers[i - 1].d_out:
                raise ShapeError(f"layer {i} expects {layers[i].d_in} inputs, layer {i - 1} emits {layers[i - 1].d_out}")
        self.layers = layers
        self.version = 0

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def n_classes(self) -> int:
        return self.layers[-1].d_out

    def named_parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        """Trainable arrays in a fixed order; yields the live arrays, not copies."""
        for i, layer in enumerate(self.layers):
            if isinstance(layer, TrainableLinear):
                yield f"layers.{i}.weight", layer.weight
                yield f"layers.{i}.bias", layer.bias
                continue
            if layer.adapter is not None:
                for k, kern in enumerate(layer.adapter.kernels):
                    yield f"layers.{i}.kernels.{k}.c", kern.c
                    yield f"layers.{i}.kernels.{k}.a", kern.a
                    yield f"layers.{i}.kernels.{k}.b", kern.b
            if layer.rescale is not None:
                yield f"layers.{i}.s1", layer.rescale.s1
                yield f"layers.{i}.s2", layer.rescale.s2

    def frozen_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            if isinstance(layer, AdaptedLinear):
                yield f"layers.{i}.w0", layer.w0
                if layer.bias0 is not None:
                    yield f"layers.{i}.bias0", layer.bias0

    def n_trainable(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def touch(self) -> None:
        """Mark parameters as changed; caches from earlier forwards become stale."""
        self.version += 1

    def copy(self) -> "ToyModel":
        return ToyModel([layer.copy() for layer in self.layers])


@dataclass
class LayerCache:
    x: np.ndarray  # layer input
    z: np.ndarray  # pre-rescale affine output
    y: np.ndarray  # layer output before the nonlinearity


@dataclass
class Cache:
    layers: list[LayerCache]
    model_id: int
    version: int

    @property
    def batch_size(self) -> int:
        return self.layers[0].x.shape[0]


class StaleCacheError(RuntimeError):
    pass


@dataclass
class GradientSet:
    """Gradients keyed by the names of :meth:`ToyModel.named_parameters`."""

    grads: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.grads[name]

    def items(self):
        return self.grads.items()

    def layer(self, i: int) -> dict[str, np.ndarray]:
        prefix = f"layers.{i}."
        return {k[len(prefix):]: v for k, v in self.grads.items() if k.startswith(prefix)}

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(g))) for g in self.grads.values() if g.size), default=0.0)


def forward(model: ToyModel, x_batch: np.ndarray) -> tuple[np.ndarray, Cache]:
    x = np.asarray(x_batch, dtype=DTYPE)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.d_in:
        raise ShapeError(f"model expects a batch of width {model.d_in}, got shape {x.shape}")
    caches = []
    h = x
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        z = layer.affine(h)
        if isinstance(layer, AdaptedLinear) and layer.rescale is not None:
            y = layer.rescale.gain * z + layer.rescale.s2
        else:
            y = z
        caches.append(LayerCache(h, z, y))
        h = y if i == last else np.tanh(y)
    return h, Cache(caches, id(model), model.version)


def predict(model: ToyModel, x_batch: np.ndarray) -> np.ndarray:
    return np.argmax(forward(model, x_batch)[0], axis=1)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy."""
    lp = log_softmax(logits)
    return float(-lp[np.arange(len(labels)), labels].mean())


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    probs = np.exp(log_softmax(logits))
    probs[np.arange(len(labels)), labels] -= 1.0
    return probs / len(labels)


def loss_fn(model: ToyModel, x: np.ndarray, labels: np.ndarray) -> float:
    return cross_entropy(forward(model, x)[0], labels)


def _adapter_grads(layer: AdaptedLinear, x: np.ndarray, g_z: np.ndarray, prefix: str, out: dict) -> None:
    adapter = layer.adapter
    n, m = x.shape[0], adapter.m
    din, dout = layer.d_in // m, layer.d_out // m
    xr = x.reshape(n, m, din)
    gr = g_z.reshape(n, m, dout)
    # gradient wrt delta_W is G = x.T @ g_z; block (p, q) of G is sum_n xr[n, p]^T gr[n, q]
    gr_flat = gr.transpose(1, 0, 2).reshape(m, n * dout)
    for k, kern in enumerate(adapter.kernels):
        d = kern.a @ kern.b
        t = (xr.reshape(n * m, din) @ d).reshape(n, m, dout)
        g_c = t.transpose(1, 0, 2).reshape(m, n * dout) @ gr_flat.T
        u = np.matmul(kern.c, gr)
        g_d = xr.reshape(n * m, din).T @ u.reshape(n * m, dout)
        out[f"{prefix}kernels.{k}.c"] = g_c
        out[f"{prefix}kernels.{k}.a"] = g_d @ kern.b.T
        out[f"{prefix}kernels.{k}.b"] = kern.a.T @ g_d


def backward_from_logits(model: ToyModel, cache: Cache, g_logits: np.ndarray) -> GradientSet:
    """Backpropagate ``dL/dlogits`` through the cached forward."""
    if cache.model_id != id(model) or cache.version != model.version or len(cache.layers) != len(model.layers):
        raise StaleCacheError("cache does not belong to the current state of this model")
    g = np.asarray(g_logits, dtype=DTYPE)
    if g.shape != cache.layers[-1].y.shape:
        raise ShapeError(f"output gradient has shape {g.shape}, expected {cache.layers[-1].y.shape}")
    grads: dict[str, np.ndarray] = {}
    last = len(model.layers) - 1
    for i in range(last, -1, -1):
        layer, lc = model.layers[i], cache.layers[i]
        if i != last:
            g = g * (1.0 - np.tanh(lc.y) ** 2)
        prefix = f"layers.{i}."
        if isinstance(layer, TrainableLinear):
            grads[prefix + "weight"] = lc.x.T @ g
            grads[prefix + "bias"] = g.sum(axis=0)
            g = g @ layer.weight.T
            continue
        if layer.rescale is not None:
            grads[prefix + "s1"] = (g * lc.z).sum(axis=0)
            grads[prefix + "s2"] = g.sum(axis=0)
            g = g * layer.rescale.gain
        if layer.adapter is not None:
            _adapter_grads(layer, lc.x, g, prefix, grads)
        if i > 0:
            g_in = g @ layer.w0.T
            if layer.adapter is not None:
                g_in = g_in + adapter_apply_transpose(layer.adapter, g)
            g = g_in
    ordered = {name: grads[name] for name, _ in model.named_parameters()}
    return GradientSet(ordered)


def backward(model: ToyModel, cache: Cache, labels: np.ndarray) -> GradientSet:
    labels = np.asarray(labels)
    if labels.shape != (cache.batch_size,):
        raise ShapeError(f"got {labels.shape[0] if labels.ndim else 0} labels for a batch of {cache.batch_size}")
    logits = cache.layers[-1].y
    return backward_from_logits(model, cache, cross_entropy_grad(logits, labels))


def merge_model(model: ToyModel) -> list[tuple[np.ndarray, Optional[np.ndarray]]]:
    """Plain ``(W, b)`` per layer; adapters and re-scaling folded in."""
    merged = []
    for layer in model.layers:
        if isinstance(layer, TrainableLinear):
            merged.append((layer.weight.copy(), layer.bias.copy()))
        else:
            merged.append(merge(layer))
    return merged


def merged_forward(merged: list[tuple[np.ndarray, Optional[np.ndarray]]], x: np.ndarray) -> np.ndarray:
    h = np.asarray(x, dtype=DTYPE)
    for i, (w, b) in enumerate(merged):
        h = h @ w
        if b is not None:
            h = h + b
        if i < len(merged) - 1:
            h = np.tanh(h)
    return h
