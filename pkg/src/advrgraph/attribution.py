"""Activation profiling, inter-neuron influence, and attribution graphs.

One condition (benign, or attacked at one strength) is summarized by a
median-per-channel activation profile plus per-layer influence tables; the
attribution graph keeps the top-k channels per layer and the top-m most
influential incoming edges per kept node.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MissingDependencyError, UnsupportedLayerError
from .model import ModelHandle, NeuronId, feature_maps, kernel_slice
from .store import _format_float, digest_of

DEFAULT_REDUCER = "median-of-spatial-max"
DEFAULT_K = 10
DEFAULT_M = 5


@dataclass(frozen=True)
class Condition:
    kind: str                      # "benign" | "attacked"
    benign_class: int
    input_set_ref: str
    target_class: int | None = None
    strength: float | None = None

    def __post_init__(self):
        if self.kind == "benign" and self.strength is not None:
            raise ConfigError("benign condition carries no strength")
        if self.kind == "attacked" and not (self.strength and self.strength > 0):
            raise ConfigError("attacked condition needs strength > 0")

    def describe(self) -> dict:
        out: dict = {"kind": self.kind, "benignClass": self.benign_class,
                     "inputSetRef": self.input_set_ref}
        if self.kind == "attacked":
            out["targetClass"] = self.target_class
            out["strength"] = self.strength
        return out

    def digest_fields(self) -> dict:
        return self.describe()


@dataclass(frozen=True)
class ActivationProfile:
    condition: Condition
    model_digest: str
    reducer: str
    layers: tuple[str, ...]
    values: dict[str, np.ndarray]  # layer -> (channels,) aggregate activation

    def value(self, layer: str, channel: int) -> float:
        return float(self.values[layer][channel])


@dataclass(frozen=True)
class InfluenceTable:
    condition: Condition
    layer: str
    prev_channels: tuple[int, ...]
    channels: tuple[int, ...]
    entries: dict[tuple[int, int], float]  # (c_prev, c) -> influence >= 0


@dataclass(frozen=True)
class GraphNode:
    neuron: NeuronId
    score: float


@dataclass(frozen=True)
class GraphEdge:
    source: NeuronId
    target: NeuronId
    weight: float


@dataclass(frozen=True)
class AttributionGraph:
    condition: Condition
    model_digest: str
    k: int
    m: int
    layers: tuple[str, ...]
    nodes: dict[str, tuple[GraphNode, ...]]   # layer -> selected nodes, rank order
    edges: tuple[GraphEdge, ...]              # sorted (target layer, target ch, desc weight, src ch)

    def node_set(self) -> set[NeuronId]:
        return {n.neuron for layer_nodes in self.nodes.values() for n in layer_nodes}

    def edge_set(self) -> set[tuple[NeuronId, NeuronId]]:
        return {(e.source, e.target) for e in self.edges}

    def incoming(self, neuron: NeuronId) -> list[GraphEdge]:
        return [e for e in self.edges if e.target == neuron]


def per_input_influence(model: ModelHandle, x: np.ndarray, layer: str,
                        c_prev: int, c: int) -> float:
    """Peak valid cross-correlation of the predecessor map with one kernel slice.

    Quantifies how strongly predecessor channel ``c_prev`` could drive channel
    ``c`` anywhere in the image for this input; floored at zero.
    """
    spec = model.layer(layer)
    if spec.kind != "conv":
        raise UnsupportedLayerError(
            f"per-input influence is defined for conv layers, not {spec.kind!r}")
    prev_name = spec.predecessors[0]
    prev_spec = model.layer(prev_name)
    if prev_spec.kind == "input":
        prev_map = np.asarray(x, dtype=np.float64)
    else:
        prev_map = feature_maps(model, x, prev_name)
    kernel = kernel_slice(model, layer, c_prev, c)
    chan = prev_map[:, :, c_prev]
    kh, kw = kernel.shape
    win = np.lib.stride_tricks.sliding_window_view(chan, (kh, kw))
    corr = np.einsum("yxij,ij->yx", win, kernel, optimize=True)
    return max(float(corr.max()), 0.0)


def aggregate_profile(model: ModelHandle, inputs: np.ndarray, layers: tuple[str, ...],
                      condition: Condition, reducer: str = DEFAULT_REDUCER) -> ActivationProfile:
    """Median over inputs of each channel's spatial-max activation."""
    if reducer != DEFAULT_REDUCER:
        raise ConfigError(f"unknown reducer {reducer!r}")
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 4 or len(inputs) == 0:
        raise ConfigError("profile needs a non-empty batch of inputs")
    values: dict[str, np.ndarray] = {}
    for layer in layers:
        maps = feature_maps(model, inputs, layer)     # (N, h, w, c)
        per_input = maps.max(axis=(1, 2))             # (N, c)
        values[layer] = np.median(per_input, axis=0)
    return ActivationProfile(condition, model.weight_digest, reducer, tuple(layers), values)


def aggregate_influence(model: ModelHandle, inputs: np.ndarray, layer: str,
                        candidate_prev: tuple[int, ...], candidate_channels: tuple[int, ...],
                        condition: Condition) -> InfluenceTable:
    """Median over inputs of per-input influence, restricted to candidates."""
    if not candidate_prev or not candidate_channels:
        raise ConfigError("candidate channel sets must be non-empty")
    inputs = np.asarray(inputs, dtype=np.float64)
    spec = model.layer(layer)
    prev_name = spec.predecessors[0]
    prev_spec = model.layer(prev_name)
    entries: dict[tuple[int, int], float] = {}
    if spec.kind == "conv":
        if prev_spec.kind == "input":
            prev_maps = inputs
        else:
            prev_maps = feature_maps(model, inputs, prev_name)
        kh, kw = spec.kernel_shape
        win = np.lib.stride_tricks.sliding_window_view(prev_maps, (kh, kw), axis=(1, 2))
        win = win[:, :, :, list(candidate_prev)]                      # (N, y, x, P, kh, kw)
        w = model.weights[layer]["W"][list(candidate_channels)][:, list(candidate_prev)]
        corr = np.einsum("nyxpij,cpij->nyxpc", win, w, optimize=True)
        peak = np.maximum(corr.max(axis=(1, 2)), 0.0)  # per-input floor, then aggregate
        med = np.median(peak, axis=0)                                 # (P, C)
        for pi, cp in enumerate(candidate_prev):
            for ci, c in enumerate(candidate_channels):
                entries[(cp, c)] = float(med[pi, ci])
    elif spec.kind == "pool":
        acts = feature_maps(model, inputs, prev_name).max(axis=(1, 2))  # (N, c)
        med = np.median(acts, axis=0)
        for c in candidate_channels:
            if c in candidate_prev:
                entries[(c, c)] = max(float(med[c]), 0.0)
    elif spec.kind == "concat":
        offsets = {}
        off = 0
        for p in spec.predecessors:
            offsets[p] = off
            off += model.layer(p).channels
        # Influence only flows from the predecessor that owns each channel.
        for p in spec.predecessors:
            acts = feature_maps(model, inputs, p).max(axis=(1, 2))
            med = np.median(acts, axis=0)
            for cp in range(model.layer(p).channels):
                c = offsets[p] + cp
                if c in candidate_channels and cp in candidate_prev:
                    entries[(cp, c)] = max(float(med[cp]), 0.0)
    else:
        raise UnsupportedLayerError(f"influence is undefined for {spec.kind!r} layers")
    return InfluenceTable(condition, layer, tuple(candidate_prev),
                          tuple(candidate_channels), entries)


def top_channels(profile: ActivationProfile, layer: str, k: int) -> list[int]:
    """Channels ranked by descending score, ties broken by ascending index."""
    scores = profile.values[layer]
    order = sorted(range(len(scores)), key=lambda c: (-scores[c], c))
    return order[:k]


def build_graph(model: ModelHandle, profile: ActivationProfile,
                influences: dict[str, InfluenceTable], k: int, m: int) -> AttributionGraph:
    """Select top-k nodes per layer and top-m incoming edges per node.

    Edge candidates are ranked within the influence table before dropping
    pairs whose source did not survive node selection, so nodes can end up
    with fewer than m incoming edges.
    """
    if k < 1 or m < 1:
        raise ConfigError("k and m must be >= 1")
    selected: dict[str, list[GraphNode]] = {}
    for layer in profile.layers:
        chans = top_channels(profile, layer, k)
        selected[layer] = [GraphNode(NeuronId(layer, c), profile.value(layer, c)) for c in chans]

    profiled = set(profile.layers)
    edges: list[GraphEdge] = []
    for layer in profile.layers:
        spec = model.layer(layer)
        prev_name = spec.predecessors[0] if spec.predecessors else None
        if prev_name is None or prev_name not in profiled:
            continue
        table = influences.get(layer)
        if table is None:
            raise MissingDependencyError(f"no influence table for layer {layer!r}")
        prev_selected = {n.neuron.channel for n in selected[prev_name]}
        for node in selected[layer]:
            c = node.neuron.channel
            if c not in table.channels:
                raise MissingDependencyError(
                    f"influence table for {layer!r} does not cover selected channel {c}")
            for cp in prev_selected:
                if cp in table.prev_channels and (cp, c) not in table.entries:
                    raise MissingDependencyError(
                        f"influence table for {layer!r} is missing pair ({cp}, {c})")
            candidates = [(cp, v) for (cp, cc), v in table.entries.items() if cc == c]
            candidates.sort(key=lambda t: (-t[1], t[0]))
            kept = [(cp, v) for cp, v in candidates[:m] if cp in prev_selected]
            for cp, v in kept:
                edges.append(GraphEdge(NeuronId(prev_name, cp), node.neuron, v))

    layer_index = {name: i for i, name in enumerate(profile.layers)}
    edges.sort(key=lambda e: (layer_index[e.target.layer], e.target.channel,
                              -e.weight, e.source.channel))
    return AttributionGraph(profile.condition, model.weight_digest, k, m,
                            tuple(profile.layers),
                            {l: tuple(nodes) for l, nodes in selected.items()},
                            tuple(edges))


def candidate_channels(profiles: list[ActivationProfile], layer: str, k: int) -> tuple[int, ...]:
    """Union of each condition's top-2k channels, ascending; bounds influence cost."""
    cands: set[int] = set()
    for p in profiles:
        cands.update(top_channels(p, layer, 2 * k))
    return tuple(sorted(cands))


# ---------------------------------------------------------------------------
# Serialization: columnar text tables for profiles/influence, JSON for graphs


def profile_to_table(profile: ActivationProfile) -> str:
    cond = digest_of(profile.condition.digest_fields())
    lines = [
        "# advrgraph profile v1",
        f"# model {profile.model_digest}",
        f"# reducer {profile.reducer}",
        f"# layers {','.join(profile.layers)}",
        "layer\tchannel\tcondition\tvalue",
    ]
    for layer in profile.layers:
        for c, v in enumerate(profile.values[layer]):
            lines.append(f"{layer}\t{c}\t{cond}\t{_format_float(float(v))}")
    return "\n".join(lines) + "\n"


def profile_from_table(text: str, condition: Condition) -> ActivationProfile:
    model_digest = reducer = ""
    layers: tuple[str, ...] = ()
    rows: dict[str, dict[int, float]] = {}
    for line in text.splitlines():
        if line.startswith("# model "):
            model_digest = line.split(" ", 2)[2]
        elif line.startswith("# reducer "):
            reducer = line.split(" ", 2)[2]
        elif line.startswith("# layers "):
            layers = tuple(line.split(" ", 2)[2].split(","))
        elif line and not line.startswith(("#", "layer\t")):
            layer, c, _cond, v = line.split("\t")
            rows.setdefault(layer, {})[int(c)] = float(v)
    values = {layer: np.array([chans[c] for c in range(len(chans))]) for layer, chans in rows.items()}
    return ActivationProfile(condition, model_digest, reducer, layers, values)


def influence_to_table(table: InfluenceTable) -> str:
    cond = digest_of(table.condition.digest_fields())
    lines = [
        "# advrgraph influence v1",
        f"# layer {table.layer}",
        f"# prevChannels {','.join(map(str, table.prev_channels))}",
        f"# channels {','.join(map(str, table.channels))}",
        "layer\tchannelPrev\tchannel\tcondition\tvalue",
    ]
    for (cp, c) in sorted(table.entries):
        lines.append(f"{table.layer}\t{cp}\t{c}\t{cond}\t{_format_float(table.entries[(cp, c)])}")
    return "\n".join(lines) + "\n"


def influence_from_table(text: str, condition: Condition) -> InfluenceTable:
    layer = ""
    prev_channels: tuple[int, ...] = ()
    channels: tuple[int, ...] = ()
    entries: dict[tuple[int, int], float] = {}
    for line in text.splitlines():
        if line.startswith("# layer "):
            layer = line.split(" ", 2)[2]
        elif line.startswith("# prevChannels "):
            prev_channels = tuple(int(v) for v in line.split(" ", 2)[2].split(",") if v)
        elif line.startswith("# channels "):
            channels = tuple(int(v) for v in line.split(" ", 2)[2].split(",") if v)
        elif line and not line.startswith(("#", "layer\t")):
            _l, cp, c, _cond, v = line.split("\t")
            entries[(int(cp), int(c))] = float(v)
    return InfluenceTable(condition, layer, prev_channels, channels, entries)


def graph_to_doc(graph: AttributionGraph) -> dict:
    return {
        "schema": "advrgraph/attribution-graph/v1",
        "condition": graph.condition.describe(),
        "modelDigest": graph.model_digest,
        "k": graph.k,
        "m": graph.m,
        "layers": list(graph.layers),
        "nodes": [
            {"layer": layer, "channel": n.neuron.channel, "score": n.score}
            for layer in graph.layers for n in graph.nodes[layer]
        ],
        "edges": [
            {"sourceLayer": e.source.layer, "sourceChannel": e.source.channel,
             "targetLayer": e.target.layer, "targetChannel": e.target.channel,
             "weight": e.weight}
            for e in graph.edges
        ],
    }


def graph_from_doc(doc: dict, condition: Condition) -> AttributionGraph:
    layers = tuple(doc["layers"])
    nodes: dict[str, list[GraphNode]] = {l: [] for l in layers}
    for n in doc["nodes"]:
        nodes[n["layer"]].append(GraphNode(NeuronId(n["layer"], int(n["channel"])), float(n["score"])))
    edges = tuple(
        GraphEdge(NeuronId(e["sourceLayer"], int(e["sourceChannel"])),
                  NeuronId(e["targetLayer"], int(e["targetChannel"])), float(e["weight"]))
        for e in doc["edges"])
    return AttributionGraph(condition, doc["modelDigest"], int(doc["k"]), int(doc["m"]),
                            layers, {l: tuple(ns) for l, ns in nodes.items()}, edges)
