import os
import shutil
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory) -> Path:
    """Session data root seeded with the committed fixture assets.

    Pipeline caches and generated images land in the tmp dir, never in the
    repo. If the committed fixture is missing the first open() retrains it.
    """
    root = tmp_path_factory.mktemp("advrgraph-data")
    src = REPO / "data" / "fixture"
    if src.exists():
        shutil.copytree(src, root / "fixture")
    os.environ["ADVRGRAPH_DATA_DIR"] = str(root)
    return root


@pytest.fixture(scope="session")
def ctx(data_dir):
    from advrgraph.pipeline import PipelineContext

    return PipelineContext.open(data_dir)


@pytest.fixture(scope="session")
def model(ctx):
    return ctx.model


@pytest.fixture(scope="session")
def dataset(ctx):
    return ctx.dataset


@pytest.fixture(scope="session")
def default_cfg():
    from advrgraph.pipeline import RunConfig

    return RunConfig(benign_class=0, target_class=1, k=4, m=3)


@pytest.fixture(scope="session")
def comparison_key_doc(ctx, default_cfg):
    """Comparison graph computed once for the default scenario."""
    from advrgraph.pipeline import compute_comparison

    key, _ = compute_comparison(ctx, default_cfg)
    return key, ctx.store.get_json(key)


def build_tiny(layer_defs, weights, input_shape, model_id="tiny"):
    from advrgraph.model import build_model

    return build_model(model_id, layer_defs, weights, input_shape)


@pytest.fixture
def single_conv_same():
    """One 3x3 same-padded conv channel; kernel has mixed signs."""
    kernel = np.array([[1.0, -0.5, 0.25], [0.5, 1.0, -1.0], [-0.25, 0.75, 0.5]])
    layers = [
        {"name": "input", "kind": "input", "predecessors": []},
        {"name": "conv", "kind": "conv", "channels": 1, "kernelShape": [3, 3],
         "stride": 1, "padding": 1, "predecessors": ["input"]},
        {"name": "dense", "kind": "dense", "channels": 2, "predecessors": ["conv"]},
    ]
    weights = {
        "conv": {"W": kernel[None, None], "b": np.zeros(1)},
        "dense": {"W": np.ones((2, 64)), "b": np.zeros(2)},
    }
    return build_tiny(layers, weights, (8, 8, 1)), kernel


def random_small_model(rng, with_pool=False, with_concat=False):
    """Random little conv DAG for oracle-equivalence property tests."""
    c1 = int(rng.integers(1, 4))
    c2 = int(rng.integers(1, 4))
    h = int(rng.integers(6, 9))
    pad = int(rng.integers(0, 2))
    layers = [
        {"name": "input", "kind": "input", "predecessors": []},
        {"name": "conv1", "kind": "conv", "channels": c1, "kernelShape": [3, 3],
         "stride": 1, "padding": pad, "predecessors": ["input"]},
    ]
    weights = {"conv1": {"W": rng.normal(size=(c1, 2, 3, 3)), "b": rng.normal(size=c1) * 0.1}}
    prev, prev_c = "conv1", c1
    size = h + 2 * pad - 2
    if with_pool:
        layers.append({"name": "pool1", "kind": "pool", "poolSize": 2, "stride": 2,
                       "predecessors": [prev]})
        prev = "pool1"
        size = (size - 2) // 2 + 1
    layers.append({"name": "conv2", "kind": "conv", "channels": c2, "kernelShape": [2, 2],
                   "stride": 1, "padding": 0, "predecessors": [prev]})
    weights["conv2"] = {"W": rng.normal(size=(c2, prev_c, 2, 2)), "b": rng.normal(size=c2) * 0.1}
    branch_pred = prev
    prev, prev_c = "conv2", c2
    size -= 1
    if with_concat:
        layers.append({"name": "conv3", "kind": "conv", "channels": c1, "kernelShape": [2, 2],
                       "stride": 1, "padding": 0, "predecessors": [branch_pred]})
        weights["conv3"] = {"W": rng.normal(size=(c1, c1, 2, 2)), "b": rng.normal(size=c1) * 0.1}
        layers.append({"name": "cat", "kind": "concat", "predecessors": ["conv2", "conv3"]})
        prev, prev_c = "cat", c2 + c1
    layers.append({"name": "dense", "kind": "dense", "channels": 3, "predecessors": [prev]})
    weights["dense"] = {"W": rng.normal(size=(3, size * size * prev_c)), "b": rng.normal(size=3) * 0.1}
    return build_tiny(layers, weights, (h, h, 2))


# ---------------------------------------------------------------------------
# Independent reference implementations used as oracles


def naive_forward(model, x, masked=frozenset()):
    """From-scratch forward pass with explicit loops; oracle for the engine."""
    acts = {}
    for spec in model.layers:
        if spec.kind == "input":
            acts[spec.name] = np.asarray(x, dtype=np.float64)
            continue
        if spec.kind == "conv":
            a = acts[spec.predecessors[0]]
            p = spec.padding
            if p:
                a = np.pad(a, ((p, p), (p, p), (0, 0)))
            kh, kw = spec.kernel_shape
            oh, ow = spec.spatial_shape
            w = model.weights[spec.name]["W"]
            b = model.weights[spec.name]["b"]
            out = np.zeros((oh, ow, spec.channels))
            for y in range(oh):
                for xx in range(ow):
                    for c in range(spec.channels):
                        s = b[c]
                        for ci in range(a.shape[-1]):
                            for i in range(kh):
                                for j in range(kw):
                                    s += a[y * spec.stride + i, xx * spec.stride + j, ci] * w[c, ci, i, j]
                        out[y, xx, c] = max(s, 0.0)
        elif spec.kind == "pool":
            a = acts[spec.predecessors[0]]
            oh, ow = spec.spatial_shape
            out = np.zeros((oh, ow, spec.channels))
            for y in range(oh):
                for xx in range(ow):
                    for c in range(spec.channels):
                        window = a[y * spec.stride:y * spec.stride + spec.pool_size,
                                   xx * spec.stride:xx * spec.stride + spec.pool_size, c]
                        out[y, xx, c] = window.max()
        elif spec.kind == "concat":
            out = np.concatenate([acts[p] for p in spec.predecessors], axis=-1)
        else:  # dense
            flat = acts[spec.predecessors[0]].reshape(-1)
            out = model.weights[spec.name]["W"] @ flat + model.weights[spec.name]["b"]
        if spec.kind in ("conv", "pool", "concat"):
            for n in masked:
                if n.layer == spec.name:
                    out[:, :, n.channel] = 0.0
        acts[spec.name] = out
    return acts


def naive_influence(prev_map, kernel):
    """Quadruple-loop valid cross-correlation max, floored at zero."""
    h, w = prev_map.shape
    kh, kw = kernel.shape
    best = -np.inf
    for y in range(h - kh + 1):
        for x in range(w - kw + 1):
            s = 0.0
            for i in range(kh):
                for j in range(kw):
                    s += prev_map[y + i, x + j] * kernel[i, j]
            best = max(best, s)
    return max(best, 0.0)
