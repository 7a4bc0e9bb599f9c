"""Deterministic desk-scale fixture: a 4-class pattern dataset and a small CNN.

The dataset is synthesized from a seed (oriented gratings, checkerboard,
blobs) so the whole fixture is reproducible from scratch; weights and images
are persisted under the data root and loaded on every subsequent call so the
digest is shared by all tests and tools.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ModelLoadError
from .model import ModelHandle, _backward, _forward_full, build_model, load_model, predict, save_model

CLASS_NAMES = ("stripes-h", "stripes-v", "checker", "blob")
IMAGE_SHAPE = (16, 16, 1)
TRAIN_PER_CLASS = 120
TEST_PER_CLASS = 40
DEFAULT_SEED = 7


def data_root() -> Path:
    return Path(os.environ.get("ADVRGRAPH_DATA_DIR", "data"))


@dataclass(frozen=True)
class FixtureDataset:
    images: np.ndarray          # (N, 16, 16, 1) float64 in [0, 1]
    labels: np.ndarray          # (N,) int
    splits: np.ndarray          # (N,) str, "train" | "test"
    ids: np.ndarray             # (N,) int, row index
    class_names: tuple[str, ...]

    def subset(self, label: int | None = None, split: str | None = None) -> np.ndarray:
        keep = np.ones(len(self.ids), dtype=bool)
        if label is not None:
            keep &= self.labels == label
        if split is not None:
            keep &= self.splits == split
        return self.ids[keep]


def image_digest(img: np.ndarray) -> str:
    arr = np.ascontiguousarray(img, dtype=np.float32)
    return hashlib.sha256(arr.tobytes()).hexdigest()[:16]


def _render_class(rng: np.random.Generator, label: int) -> np.ndarray:
    h, w, _ = IMAGE_SHAPE
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    amp = rng.uniform(0.18, 0.32)
    freq = rng.uniform(1.8, 3.2)
    phase = rng.uniform(0, 2 * np.pi)
    if label == 0:
        img = 0.5 + amp * np.sin(2 * np.pi * freq * yy / h + phase)
    elif label == 1:
        img = 0.5 + amp * np.sin(2 * np.pi * freq * xx / w + phase)
    elif label == 2:
        phase2 = rng.uniform(0, 2 * np.pi)
        img = 0.5 + amp * np.sin(2 * np.pi * freq * yy / h + phase) * \
            np.sin(2 * np.pi * freq * xx / w + phase2)
    else:
        cy, cx = rng.uniform(4, h - 4), rng.uniform(4, w - 4)
        sigma = rng.uniform(2.0, 3.5)
        img = 0.25 + 2 * amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    img = img + rng.normal(0, 0.04, size=(h, w))
    return np.clip(img, 0.0, 1.0)[..., None]


def make_dataset(seed: int) -> FixtureDataset:
    rng = np.random.default_rng(seed)
    images, labels, splits = [], [], []
    for label in range(len(CLASS_NAMES)):
        for i in range(TRAIN_PER_CLASS + TEST_PER_CLASS):
            images.append(_render_class(rng, label))
            labels.append(label)
            splits.append("train" if i < TRAIN_PER_CLASS else "test")
    images = np.asarray(images, dtype=np.float64)
    order = np.random.default_rng(seed + 1).permutation(len(images))
    images, labels, splits = images[order], np.asarray(labels)[order], np.asarray(splits)[order]
    return FixtureDataset(images, labels, splits, np.arange(len(images)), CLASS_NAMES)


FIXTURE_LAYERS = [
    {"name": "input", "kind": "input", "predecessors": []},
    {"name": "conv1", "kind": "conv", "channels": 8, "kernelShape": [3, 3],
     "stride": 1, "padding": 0, "predecessors": ["input"]},
    {"name": "conv2", "kind": "conv", "channels": 8, "kernelShape": [3, 3],
     "stride": 1, "padding": 0, "predecessors": ["conv1"]},
    {"name": "dense", "kind": "dense", "channels": len(CLASS_NAMES), "predecessors": ["conv2"]},
]


def _init_weights(rng: np.random.Generator) -> dict[str, dict[str, np.ndarray]]:
    def he(shape, fan_in):
        return rng.normal(0, np.sqrt(2.0 / fan_in), size=shape)

    flat = 12 * 12 * 8
    return {
        "conv1": {"W": he((8, 1, 3, 3), 9), "b": np.zeros(8)},
        "conv2": {"W": he((8, 8, 3, 3), 72), "b": np.zeros(8)},
        "dense": {"W": he((len(CLASS_NAMES), flat), flat), "b": np.zeros(len(CLASS_NAMES))},
    }


def train_fixture(seed: int = DEFAULT_SEED, epochs: int = 30, batch_size: int = 64,
                  lr: float = 3e-3) -> tuple[ModelHandle, FixtureDataset]:
    """Train the fixture CNN with Adam; fully deterministic given the seed."""
    dataset = make_dataset(seed)
    rng = np.random.default_rng(seed + 2)
    weights = _init_weights(rng)
    train_idx = np.where(dataset.splits == "train")[0]

    m_state = {k: {p: np.zeros_like(v) for p, v in params.items()} for k, params in weights.items()}
    v_state = {k: {p: np.zeros_like(v) for p, v in params.items()} for k, params in weights.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    model = build_model("fixture", FIXTURE_LAYERS, weights, IMAGE_SHAPE)
    for epoch in range(epochs):
        order = rng.permutation(train_idx)
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            xb, yb = dataset.images[idx], dataset.labels[idx]
            caches = _forward_full(model, xb)
            z = caches["dense"]["out"]
            zs = z - z.max(axis=-1, keepdims=True)
            p = np.exp(zs)
            p /= p.sum(axis=-1, keepdims=True)
            dz = p
            dz[np.arange(len(yb)), yb] -= 1.0
            dz /= len(yb)
            _, grads = _backward(model, caches, {"dense": dz}, want_params=True)
            step += 1
            for name, params in grads.items():
                for part, g in params.items():
                    m_state[name][part] = beta1 * m_state[name][part] + (1 - beta1) * g
                    v_state[name][part] = beta2 * v_state[name][part] + (1 - beta2) * g * g
                    mhat = m_state[name][part] / (1 - beta1 ** step)
                    vhat = v_state[name][part] / (1 - beta2 ** step)
                    weights[name][part] = weights[name][part] - lr * mhat / (np.sqrt(vhat) + eps)
            model = build_model("fixture", FIXTURE_LAYERS, weights, IMAGE_SHAPE)
    return model, dataset


def accuracy(model: ModelHandle, dataset: FixtureDataset, split: str = "test") -> float:
    idx = np.where(dataset.splits == split)[0]
    preds = predict(model, dataset.images[idx]).argmax(axis=-1)
    return float((preds == dataset.labels[idx]).mean())


def write_manifest(path: Path, model: ModelHandle, dataset: FixtureDataset,
                   seed: int, test_accuracy: float) -> None:
    lines = [
        "# advrgraph fixture manifest",
        f"# seed {seed}",
        f"# model_digest {model.weight_digest}",
        f"# test_accuracy {test_accuracy:.4f}",
        "# classes " + ",".join(dataset.class_names),
        "id\tsplit\tlabel\tdigest",
    ]
    for i in dataset.ids:
        lines.append(f"{i}\t{dataset.splits[i]}\t{dataset.labels[i]}\t{image_digest(dataset.images[i])}")
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path: Path) -> dict:
    meta: dict = {"rows": []}
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            parts = line[1:].strip().split(" ", 1)
            if len(parts) == 2:
                meta[parts[0]] = parts[1]
        elif line and not line.startswith("id\t"):
            i, split, label, digest = line.split("\t")
            meta["rows"].append({"id": int(i), "split": split, "label": int(label), "digest": digest})
    return meta


def fixture_dir(base: Path | None = None) -> Path:
    return (base or data_root()) / "fixture"


def fixture_model(seed: int = DEFAULT_SEED, base: Path | None = None,
                  rebuild: bool = False,
                  directory: Path | None = None) -> tuple[ModelHandle, FixtureDataset]:
    """Load the persisted fixture, building and persisting it if absent."""
    directory = Path(directory) if directory is not None else fixture_dir(base)
    manifest_path = directory / "manifest.txt"
    dataset_path = directory / "dataset.npz"
    if not rebuild and manifest_path.exists() and dataset_path.exists():
        model = load_model(directory)
        with np.load(dataset_path, allow_pickle=False) as npz:
            dataset = FixtureDataset(
                npz["images"].astype(np.float64), npz["labels"],
                npz["splits"].astype(str), npz["ids"], tuple(str(s) for s in npz["class_names"]))
        meta = read_manifest(manifest_path)
        if meta.get("model_digest") != model.weight_digest:
            raise ModelLoadError("fixture manifest does not match stored weights")
        return model, dataset

    model, dataset = train_fixture(seed)
    test_acc = accuracy(model, dataset, "test")
    directory.mkdir(parents=True, exist_ok=True)
    save_model(model, directory)
    np.savez_compressed(
        dataset_path,
        images=dataset.images.astype(np.float32), labels=dataset.labels,
        splits=dataset.splits.astype("U8"), ids=dataset.ids,
        class_names=np.asarray(dataset.class_names, dtype="U16"))
    # Reload so in-memory images match the float32 on-disk precision.
    with np.load(dataset_path, allow_pickle=False) as npz:
        dataset = FixtureDataset(
            npz["images"].astype(np.float64), npz["labels"],
            npz["splits"].astype(str), npz["ids"], tuple(str(s) for s in npz["class_names"]))
    write_manifest(manifest_path, model, dataset, seed, test_acc)
    return model, dataset
