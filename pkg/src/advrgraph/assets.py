"""Per-neuron explanation artifacts: top dataset patches and feature visualization.

Patches are receptive-field crops around the spatial argmax of a neuron's
map, ranked by activation over the dataset. Feature visualization is plain
clipped gradient ascent on the mean channel activation with backtracking
step-size halving.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import (FEATURE_KINDS, ModelHandle, NeuronId, channel_mean_gradient,
                    feature_maps)

MAX_HALVINGS = 10


@dataclass(frozen=True)
class PatchRef:
    image_id: int
    box: tuple[int, int, int, int]   # (row0, col0, row1, col1), half-open
    activation: float


@dataclass(frozen=True)
class FeatureVis:
    neuron: NeuronId
    image: np.ndarray
    objective: float
    steps: int
    seed: int


def receptive_field_box(model: ModelHandle, layer: str, pos: tuple[int, int],
                        channel: int | None = None) -> tuple[int, int, int, int]:
    """Input-pixel box that feeds one spatial position of a layer, clipped.

    Backprojects through the cumulative kernel/stride/padding geometry; for a
    concat layer the first hop follows the predecessor owning the channel,
    deeper hops union every branch.
    """
    h, w = model.input_shape[:2]

    def back(name: str, box: tuple[int, int, int, int], chan: int | None) -> tuple[int, int, int, int]:
        spec = model.layer(name)
        r0, c0, r1, c1 = box
        if spec.kind == "input":
            return box
        if spec.kind == "conv":
            kh, kw = spec.kernel_shape
            s, p = spec.stride, spec.padding
            nb = (r0 * s - p, c0 * s - p, (r1 - 1) * s - p + kh, (c1 - 1) * s - p + kw)
            return back(spec.predecessors[0], nb, None)
        if spec.kind == "pool":
            ps, s = spec.pool_size, spec.stride
            nb = (r0 * s, c0 * s, (r1 - 1) * s + ps, (c1 - 1) * s + ps)
            return back(spec.predecessors[0], nb, None)
        if spec.kind == "concat":
            if chan is not None:
                off = 0
                for p in spec.predecessors:
                    n = model.layer(p).channels
                    if chan < off + n:
                        return back(p, box, chan - off)
                    off += n
                raise ConfigError(f"channel {chan} out of range for concat {name!r}")
            boxes = [back(p, box, None) for p in spec.predecessors]
            return (min(b[0] for b in boxes), min(b[1] for b in boxes),
                    max(b[2] for b in boxes), max(b[3] for b in boxes))
        raise ConfigError(f"receptive field undefined for {spec.kind!r} layer {name!r}")

    y, x = pos
    r0, c0, r1, c1 = back(layer, (y, x, y + 1, x + 1), channel)
    return (max(r0, 0), max(c0, 0), min(r1, h), min(c1, w))


def top_patches(model: ModelHandle, images: np.ndarray, image_ids: np.ndarray,
                neuron: NeuronId, count: int = 9) -> list[PatchRef]:
    """The ``count`` dataset patches that most activate a neuron, descending."""
    if count < 0:
        raise ConfigError("patch count must be >= 0")
    spec = model.layer(neuron.layer)
    if spec.kind not in FEATURE_KINDS:
        raise ConfigError(f"layer {neuron.layer!r} has no feature channels")
    if not (0 <= neuron.channel < spec.channels):
        raise ConfigError(f"channel {neuron.channel} out of range for {neuron.layer!r}")
    if count == 0:
        return []
    images = np.asarray(images, dtype=np.float64)
    maps = feature_maps(model, images, neuron.layer)[..., neuron.channel]  # (N, h, w)
    flat = maps.reshape(len(images), -1)
    peaks = flat.max(axis=1)
    order = sorted(range(len(images)), key=lambda i: (-peaks[i], int(image_ids[i])))
    refs = []
    for i in order[:count]:
        y, x = np.unravel_index(int(flat[i].argmax()), maps.shape[1:])
        box = receptive_field_box(model, neuron.layer, (int(y), int(x)), neuron.channel)
        refs.append(PatchRef(int(image_ids[i]), box, float(peaks[i])))
    return refs


def _objective(model: ModelHandle, x: np.ndarray, neuron: NeuronId) -> float:
    maps = feature_maps(model, x, neuron.layer)
    return float(maps[..., neuron.channel].mean())


def synthesize_feature_vis(model: ModelHandle, neuron: NeuronId, steps: int = 128,
                           step_size: float = 0.1, seed: int = 0,
                           pixel_range: tuple[float, float] = (0.0, 1.0)) -> FeatureVis:
    """Gradient ascent on mean channel activation from a seeded random init.

    Steps that fail to increase the objective are rejected and the step size
    halved; after MAX_HALVINGS rejections the ascent stops early.
    """
    if steps < 0:
        raise ConfigError("steps must be >= 0")
    lo, hi = pixel_range
    rng = np.random.default_rng(seed)
    mid, span = (lo + hi) / 2.0, hi - lo
    x = np.clip(mid + 0.1 * span * rng.standard_normal(model.input_shape), lo, hi)
    best = _objective(model, x, neuron)
    size = step_size
    halvings = 0
    for _ in range(steps):
        g = channel_mean_gradient(model, x, neuron)
        candidate = np.clip(x + size * g, lo, hi)
        value = _objective(model, candidate, neuron)
        if value > best:
            x, best = candidate, value
        else:
            halvings += 1
            if halvings > MAX_HALVINGS:
                break
            size /= 2.0
    return FeatureVis(neuron, x, best, steps, seed)


def to_png(image: np.ndarray, path: Path, pixel_range: tuple[float, float] = (0.0, 1.0),
           scale: int = 1) -> None:
    """Write a feature map or image tensor as a lossless grayscale/RGB PNG."""
    from PIL import Image

    lo, hi = pixel_range
    arr = (np.clip((np.asarray(image, dtype=np.float64) - lo) / (hi - lo), 0, 1) * 255).round()
    arr = arr.astype(np.uint8)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    img = Image.fromarray(arr, mode="L" if arr.ndim == 2 else "RGB")
    if scale > 1:
        img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")
