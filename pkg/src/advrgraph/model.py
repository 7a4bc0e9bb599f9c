"""Uniform adapter over small feed-forward convolutional DAG classifiers.

The engine is plain numpy in float64: forward passes cache every
post-nonlinearity map, and a hand-written reverse pass supplies input
gradients (for attacks and feature visualization) and parameter gradients
(for the fixture trainer). Channel masking zeroes a channel's
post-nonlinearity map before any downstream layer sees it.

Array conventions: inputs and feature maps are channel-last,
(N, height, width, channels); conv weights are (c_out, c_in, kh, kw).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ModelLoadError, UnsupportedLayerError

LAYER_KINDS = ("input", "conv", "pool", "concat", "dense")

# Layer kinds that own maskable feature channels.
FEATURE_KINDS = ("conv", "pool", "concat")


@dataclass(frozen=True, order=True)
class NeuronId:
    """Address of one feature detector: (layer name, channel index)."""

    layer: str
    channel: int

    def key(self) -> str:
        return f"{self.layer}/{self.channel}"


@dataclass(frozen=True)
class EditSet:
    """A set of neurons whose activation maps are forced to zero."""

    neurons: frozenset[NeuronId] = frozenset()

    @classmethod
    def of(cls, neurons: Iterable[NeuronId]) -> "EditSet":
        return cls(frozenset(neurons))

    def __bool__(self) -> bool:
        return bool(self.neurons)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    channels: int
    spatial_shape: tuple[int, int]
    predecessors: tuple[str, ...]
    kernel_shape: tuple[int, int] | None = None
    stride: int = 1
    padding: int = 0
    pool_size: int = 1

    def to_manifest(self) -> dict:
        entry: dict = {
            "name": self.name,
            "kind": self.kind,
            "channels": self.channels,
            "spatialShape": list(self.spatial_shape),
            "predecessors": list(self.predecessors),
        }
        if self.kind == "conv":
            entry["kernelShape"] = list(self.kernel_shape)
            entry["stride"] = self.stride
            entry["padding"] = self.padding
        if self.kind == "pool":
            entry["poolSize"] = self.pool_size
            entry["stride"] = self.stride
        return entry


@dataclass(frozen=True)
class ModelHandle:
    """Immutable handle over a loaded model; masking returns a new handle."""

    model_id: str
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    num_classes: int
    weight_digest: str
    weights: Mapping[str, Mapping[str, np.ndarray]]
    active_mask: frozenset[NeuronId] = frozenset()

    def layer(self, name: str) -> LayerSpec:
        for spec in self.layers:
            if spec.name == name:
                return spec
        raise KeyError(f"unknown layer {name!r} in model {self.model_id}")

    def has_layer(self, name: str) -> bool:
        return any(spec.name == name for spec in self.layers)

    def feature_layers(self) -> tuple[LayerSpec, ...]:
        return tuple(s for s in self.layers if s.kind in FEATURE_KINDS)

    def masked_channels(self, layer: str) -> list[int]:
        return sorted(n.channel for n in self.active_mask if n.layer == layer)


# ---------------------------------------------------------------------------
# Construction and validation


def _infer_spatial(kind: str, prev_shape: tuple[int, int], kernel: tuple[int, int] | None,
                   stride: int, padding: int, pool_size: int) -> tuple[int, int]:
    h, w = prev_shape
    if kind == "conv":
        kh, kw = kernel
        oh = (h + 2 * padding - kh) // stride + 1
        ow = (w + 2 * padding - kw) // stride + 1
    elif kind == "pool":
        oh = (h - pool_size) // stride + 1
        ow = (w - pool_size) // stride + 1
    else:
        oh, ow = h, w
    if oh < 1 or ow < 1:
        raise ModelLoadError(f"layer geometry collapses to {oh}x{ow}")
    return oh, ow


def build_model(model_id: str, layer_defs: Sequence[dict],
                weights: Mapping[str, Mapping[str, np.ndarray]],
                input_shape: tuple[int, int, int]) -> ModelHandle:
    """Validate a layer DAG, infer spatial shapes, and freeze a handle.

    ``layer_defs`` entries carry name/kind/predecessors plus kind-specific
    geometry (channels, kernelShape, stride, padding, poolSize). The list
    must be topologically ordered with a single input first and a single
    terminal dense layer.
    """
    names = [d["name"] for d in layer_defs]
    if len(set(names)) != len(names):
        raise ModelLoadError(f"duplicate layer names in model {model_id!r}")
    seen: set[str] = set()
    specs: dict[str, LayerSpec] = {}
    order: list[LayerSpec] = []
    for d in layer_defs:
        kind = d["kind"]
        if kind not in LAYER_KINDS:
            raise ModelLoadError(f"unknown layer kind {kind!r} in model {model_id!r}")
        preds = tuple(d.get("predecessors", ()))
        for p in preds:
            if p not in seen:
                # Catches both forward references and cycles: topological
                # order requires every predecessor to appear earlier.
                raise ModelLoadError(
                    f"layer {d['name']!r} references {p!r} before its definition "
                    f"(cycle or bad order) in model {model_id!r}")
        if kind == "input":
            if preds or order:
                raise ModelLoadError("input layer must be first and have no predecessors")
            spec = LayerSpec(d["name"], "input", input_shape[2],
                             (input_shape[0], input_shape[1]), ())
        elif kind == "concat":
            if len(preds) < 2:
                raise ModelLoadError("concat layer needs at least two predecessors")
            shapes = {specs[p].spatial_shape for p in preds}
            if len(shapes) != 1:
                raise ModelLoadError(f"concat over mismatched spatial shapes {shapes}")
            spec = LayerSpec(d["name"], "concat", sum(specs[p].channels for p in preds),
                             shapes.pop(), preds)
        else:
            if len(preds) != 1:
                raise ModelLoadError(f"{kind} layer must have exactly one predecessor")
            prev = specs[preds[0]]
            if kind == "conv":
                kernel = tuple(d["kernelShape"])
                stride = int(d.get("stride", 1))
                padding = int(d.get("padding", 0))
                shape = _infer_spatial("conv", prev.spatial_shape, kernel, stride, padding, 1)
                spec = LayerSpec(d["name"], "conv", int(d["channels"]), shape, preds,
                                 kernel_shape=kernel, stride=stride, padding=padding)
            elif kind == "pool":
                pool = int(d.get("poolSize", 2))
                stride = int(d.get("stride", pool))
                shape = _infer_spatial("pool", prev.spatial_shape, None, stride, 0, pool)
                spec = LayerSpec(d["name"], "pool", prev.channels, shape, preds,
                                 stride=stride, pool_size=pool)
            else:  # dense
                spec = LayerSpec(d["name"], "dense", int(d["channels"]), (1, 1), preds)
        seen.add(spec.name)
        specs[spec.name] = spec
        order.append(spec)

    if not order or order[0].kind != "input":
        raise ModelLoadError("model must start with an input layer")
    if order[-1].kind != "dense":
        raise ModelLoadError("model must end with a dense layer")
    if sum(1 for s in order if s.kind == "dense") != 1:
        raise ModelLoadError("exactly one dense (classifier) layer is supported")

    frozen: dict[str, dict[str, np.ndarray]] = {}
    for spec in order:
        if spec.kind == "conv":
            w = np.asarray(weights[spec.name]["W"], dtype=np.float64)
            b = np.asarray(weights[spec.name]["b"], dtype=np.float64)
            prev = specs[spec.predecessors[0]]
            expect = (spec.channels, prev.channels) + spec.kernel_shape
            if w.shape != expect:
                raise ModelLoadError(f"{spec.name}: weight shape {w.shape} != {expect}")
            if b.shape != (spec.channels,):
                raise ModelLoadError(f"{spec.name}: bias shape {b.shape}")
        elif spec.kind == "dense":
            prev = specs[spec.predecessors[0]]
            flat = prev.spatial_shape[0] * prev.spatial_shape[1] * prev.channels
            w = np.asarray(weights[spec.name]["W"], dtype=np.float64)
            b = np.asarray(weights[spec.name]["b"], dtype=np.float64)
            if w.shape != (spec.channels, flat):
                raise ModelLoadError(f"{spec.name}: weight shape {w.shape} != {(spec.channels, flat)}")
        else:
            continue
        w.setflags(write=False)
        b.setflags(write=False)
        frozen[spec.name] = {"W": w, "b": b}

    digest = weight_digest(order, frozen)
    return ModelHandle(model_id, tuple(order), input_shape, order[-1].channels, digest, frozen)


def weight_digest(layers: Sequence[LayerSpec], weights: Mapping[str, Mapping[str, np.ndarray]]) -> str:
    h = hashlib.sha256()
    manifest = json.dumps([s.to_manifest() for s in layers], sort_keys=True)
    h.update(manifest.encode())
    for spec in layers:
        if spec.name in weights:
            for key in ("W", "b"):
                arr = np.ascontiguousarray(weights[spec.name][key], dtype=np.float64)
                h.update(spec.name.encode())
                h.update(key.encode())
                h.update(str(arr.shape).encode())
                h.update(arr.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Persistence


def save_model(model: ModelHandle, directory: Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "modelId": model.model_id,
        "inputShape": list(model.input_shape),
        "numClasses": model.num_classes,
        "weightDigest": model.weight_digest,
        "layers": [s.to_manifest() for s in model.layers],
    }
    (directory / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    arrays = {}
    for name, params in model.weights.items():
        arrays[f"{name}/W"] = params["W"]
        arrays[f"{name}/b"] = params["b"]
    np.savez_compressed(directory / "weights.npz", **arrays)


def load_model(directory: Path) -> ModelHandle:
    directory = Path(directory)
    manifest_path = directory / "model.json"
    weights_path = directory / "weights.npz"
    if not manifest_path.exists() or not weights_path.exists():
        raise ModelLoadError(f"no model at {directory}")
    try:
        manifest = json.loads(manifest_path.read_text())
        with np.load(weights_path) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except Exception as exc:  # corrupt files
        raise ModelLoadError(f"cannot load model {directory}: {exc}") from exc
    weights: dict[str, dict[str, np.ndarray]] = {}
    for key, arr in arrays.items():
        layer, _, part = key.rpartition("/")
        weights.setdefault(layer, {})[part] = arr
    model = build_model(manifest["modelId"], manifest["layers"], weights,
                        tuple(manifest["inputShape"]))
    recorded = manifest.get("weightDigest")
    if recorded and recorded != model.weight_digest:
        raise ModelLoadError(
            f"model {manifest['modelId']!r}: weight digest mismatch "
            f"(manifest {recorded[:12]}, computed {model.weight_digest[:12]})")
    return model


# ---------------------------------------------------------------------------
# Forward / backward engine


def _as_batch(model: ModelHandle, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == model.input_shape:
        return x[None], True
    if x.ndim == 4 and x.shape[1:] == model.input_shape:
        return x, False
    raise ConfigError(f"input shape {x.shape} does not match model input {model.input_shape}")


def _conv_windows(a: np.ndarray, kernel: tuple[int, int], stride: int, padding: int) -> np.ndarray:
    if padding:
        a = np.pad(a, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(a, kernel, axis=(1, 2))
    return win[:, ::stride, ::stride]  # (N, oh, ow, c_in, kh, kw)


def _forward_full(model: ModelHandle, x: np.ndarray) -> dict[str, dict]:
    """Run the DAG, returning per-layer caches keyed by layer name.

    Cache entries: ``out`` is the post-nonlinearity (and post-mask) map for
    every layer; conv keeps ``pre`` (pre-ReLU), pool keeps flat argmax
    indices, dense keeps its flattened input.
    """
    caches: dict[str, dict] = {}
    for spec in model.layers:
        if spec.kind == "input":
            caches[spec.name] = {"out": x}
            continue
        prev_outs = [caches[p]["out"] for p in spec.predecessors]
        if spec.kind == "conv":
            win = _conv_windows(prev_outs[0], spec.kernel_shape, spec.stride, spec.padding)
            w = model.weights[spec.name]["W"]
            pre = np.einsum("nyxcij,ocij->nyxo", win, w, optimize=True)
            pre += model.weights[spec.name]["b"]
            out = np.maximum(pre, 0.0)
            cache = {"out": out, "pre": pre}
        elif spec.kind == "pool":
            a = prev_outs[0]
            n = a.shape[0]
            win = np.lib.stride_tricks.sliding_window_view(a, (spec.pool_size, spec.pool_size),
                                                           axis=(1, 2))[:, ::spec.stride, ::spec.stride]
            flat = win.reshape(win.shape[:4] + (-1,))
            idx = flat.argmax(axis=-1)
            out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
            cache = {"out": out, "argmax": idx, "in_shape": a.shape}
        elif spec.kind == "concat":
            out = np.concatenate(prev_outs, axis=-1)
            cache = {"out": out, "split": [p.shape[-1] for p in prev_outs]}
        else:  # dense
            flat = prev_outs[0].reshape(prev_outs[0].shape[0], -1)
            w = model.weights[spec.name]["W"]
            out = flat @ w.T + model.weights[spec.name]["b"]
            cache = {"out": out, "flat": flat, "in_shape": prev_outs[0].shape}
        if spec.kind in FEATURE_KINDS:
            masked = model.masked_channels(spec.name)
            if masked:
                out = cache["out"].copy()
                out[..., masked] = 0.0
                cache["out"] = out
        caches[spec.name] = cache
    return caches


def _backward(model: ModelHandle, caches: dict[str, dict],
              seed_grads: dict[str, np.ndarray],
              want_params: bool = False) -> tuple[np.ndarray, dict[str, dict[str, np.ndarray]]]:
    """Reverse pass from gradients on named layer outputs down to the input.

    ``seed_grads`` maps layer name -> gradient w.r.t. that layer's ``out``.
    Returns (d_input, param_grads); param_grads only filled when requested.
    """
    grads: dict[str, np.ndarray] = {}
    for name, g in seed_grads.items():
        grads[name] = np.array(g, dtype=np.float64, copy=True)
    params: dict[str, dict[str, np.ndarray]] = {}

    def push(name: str, g: np.ndarray) -> None:
        if name in grads:
            grads[name] = grads[name] + g
        else:
            grads[name] = g

    d_input: np.ndarray | None = None
    for spec in reversed(model.layers):
        g = grads.pop(spec.name, None)
        if g is None:
            continue
        if spec.kind in FEATURE_KINDS:
            masked = model.masked_channels(spec.name)
            if masked:
                g = g.copy()
                g[..., masked] = 0.0
        if spec.kind == "input":
            d_input = g if d_input is None else d_input + g
        elif spec.kind == "conv":
            cache = caches[spec.name]
            dz = g * (cache["pre"] > 0)
            w = model.weights[spec.name]["W"]
            if want_params:
                win = _conv_windows(caches[spec.predecessors[0]]["out"],
                                    spec.kernel_shape, spec.stride, spec.padding)
                params[spec.name] = {
                    "W": np.einsum("nyxcij,nyxo->ocij", win, dz, optimize=True),
                    "b": dz.sum(axis=(0, 1, 2)),
                }
            prev_spec = model.layer(spec.predecessors[0])
            ph, pw = prev_spec.spatial_shape
            pad = spec.padding
            da = np.zeros((g.shape[0], ph + 2 * pad, pw + 2 * pad, prev_spec.channels))
            kh, kw = spec.kernel_shape
            oh, ow = spec.spatial_shape
            s = spec.stride
            for dy in range(kh):
                for dx in range(kw):
                    da[:, dy:dy + s * oh:s, dx:dx + s * ow:s, :] += np.einsum(
                        "nyxo,oc->nyxc", dz, w[:, :, dy, dx], optimize=True)
            if pad:
                da = da[:, pad:-pad, pad:-pad, :]
            push(spec.predecessors[0], da)
        elif spec.kind == "pool":
            cache = caches[spec.name]
            n, ih, iw, c = cache["in_shape"]
            da = np.zeros((n, ih * iw, c))
            oh, ow = spec.spatial_shape
            ys, xs = np.divmod(cache["argmax"], spec.pool_size)
            oy, ox = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
            rows = oy[None, :, :, None] * spec.stride + ys
            cols = ox[None, :, :, None] * spec.stride + xs
            flat_idx = rows * iw + cols
            np.add.at(da, (np.arange(n)[:, None, None, None], flat_idx,
                           np.arange(c)[None, None, None, :]), g)
            push(spec.predecessors[0], da.reshape(n, ih, iw, c))
        elif spec.kind == "concat":
            offsets = np.cumsum([0] + caches[spec.name]["split"])
            for p, lo, hi in zip(spec.predecessors, offsets[:-1], offsets[1:]):
                push(p, g[..., lo:hi])
        else:  # dense
            cache = caches[spec.name]
            w = model.weights[spec.name]["W"]
            if want_params:
                params[spec.name] = {"W": g.T @ cache["flat"], "b": g.sum(axis=0)}
            push(spec.predecessors[0], (g @ w).reshape(cache["in_shape"]))
    assert d_input is not None
    return d_input, params


# ---------------------------------------------------------------------------
# Public operations


def list_layers(model: ModelHandle) -> list[LayerSpec]:
    """Topologically ordered layer specs; stable across calls."""
    return list(model.layers)


def logits(model: ModelHandle, images: np.ndarray) -> np.ndarray:
    batch, single = _as_batch(model, images)
    out = _forward_full(model, batch)[model.layers[-1].name]["out"]
    return out[0] if single else out


def predict(model: ModelHandle, images: np.ndarray) -> np.ndarray:
    """Softmax class probabilities, one row per input."""
    z = logits(model, images)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def feature_maps(model: ModelHandle, images: np.ndarray, layer: str) -> np.ndarray:
    """Post-nonlinearity (and post-mask) maps of one layer, (N, h, w, c)."""
    spec = model.layer(layer)
    if spec.kind not in FEATURE_KINDS:
        raise UnsupportedLayerError(f"layer {layer!r} has kind {spec.kind!r}, expected one of {FEATURE_KINDS}")
    batch, single = _as_batch(model, images)
    out = _forward_full(model, batch)[layer]["out"]
    return out[0] if single else out


def channel_activation(model: ModelHandle, x: np.ndarray, layer: str) -> np.ndarray:
    """Per-channel spatial maximum of the post-nonlinearity map, shape (c,)."""
    maps = feature_maps(model, x, layer)
    if maps.ndim == 4:
        return maps.max(axis=(1, 2))
    return maps.max(axis=(0, 1))


def input_gradient(model: ModelHandle, x: np.ndarray, target: int) -> np.ndarray:
    """Gradient of cross-entropy against ``target`` w.r.t. the input pixels."""
    if not (0 <= int(target) < model.num_classes):
        raise ConfigError(f"target class {target} out of range [0, {model.num_classes})")
    batch, single = _as_batch(model, x)
    caches = _forward_full(model, batch)
    z = caches[model.layers[-1].name]["out"]
    zs = z - z.max(axis=-1, keepdims=True)
    p = np.exp(zs)
    p /= p.sum(axis=-1, keepdims=True)
    dz = p.copy()
    dz[:, int(target)] -= 1.0
    dx, _ = _backward(model, caches, {model.layers[-1].name: dz})
    return dx[0] if single else dx


def channel_mean_gradient(model: ModelHandle, x: np.ndarray, neuron: NeuronId) -> np.ndarray:
    """Gradient of the mean post-nonlinearity activation of one channel."""
    spec = model.layer(neuron.layer)
    if spec.kind not in FEATURE_KINDS:
        raise UnsupportedLayerError(f"layer {neuron.layer!r} has no feature channels")
    if not (0 <= neuron.channel < spec.channels):
        raise ConfigError(f"channel {neuron.channel} out of range for layer {neuron.layer!r}")
    batch, single = _as_batch(model, x)
    caches = _forward_full(model, batch)
    out = caches[neuron.layer]["out"]
    seed = np.zeros_like(out)
    seed[..., neuron.channel] = 1.0 / (spec.spatial_shape[0] * spec.spatial_shape[1])
    dx, _ = _backward(model, caches, {neuron.layer: seed})
    return dx[0] if single else dx


def kernel_slice(model: ModelHandle, layer: str, c_prev: int, c: int) -> np.ndarray:
    """The 2-D kernel connecting predecessor channel ``c_prev`` to channel ``c``."""
    spec = model.layer(layer)
    if spec.kind != "conv":
        raise UnsupportedLayerError(f"kernel_slice needs a conv layer, got {spec.kind!r}")
    w = model.weights[layer]["W"]
    if not (0 <= c < w.shape[0] and 0 <= c_prev < w.shape[1]):
        raise ConfigError(f"kernel index ({c_prev}, {c}) out of range for {layer!r} {w.shape}")
    return w[c, c_prev]


def validate_neurons(model: ModelHandle, neurons: Iterable[NeuronId]) -> frozenset[NeuronId]:
    out = []
    for n in neurons:
        if not isinstance(n, NeuronId):
            n = NeuronId(str(n[0]), int(n[1]))
        if not model.has_layer(n.layer):
            raise ConfigError(f"unknown layer in neuron {n.key()}")
        spec = model.layer(n.layer)
        if spec.kind not in FEATURE_KINDS:
            raise ConfigError(f"neuron {n.key()}: layer kind {spec.kind!r} has no maskable channels")
        if not (0 <= n.channel < spec.channels):
            raise ConfigError(f"neuron {n.key()}: channel out of range (layer has {spec.channels})")
        out.append(n)
    return frozenset(out)


def masked(model: ModelHandle, edits: EditSet | Iterable[NeuronId]) -> ModelHandle:
    """New handle whose forward pass zeroes each edited channel's map."""
    neurons = edits.neurons if isinstance(edits, EditSet) else frozenset(edits)
    valid = validate_neurons(model, neurons)
    return replace(model, active_mask=model.active_mask | valid)
