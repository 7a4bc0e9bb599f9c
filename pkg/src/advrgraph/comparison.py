"""Merging benign and attacked attribution graphs into one comparison graph.

Nodes of the merged graph are grouped by attack response (suppressed /
shared / emphasized), fractionated by vulnerability across the strength
sweep, and given deterministic layout metadata (column, in-column order,
color scalar) for the UI.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .attribution import ActivationProfile, AttributionGraph
from .errors import ConfigError, MissingDependencyError
from .model import NeuronId

GROUPS = ("suppressed", "shared", "emphasized")
COLUMNS = {"suppressed": "L", "shared": "M", "emphasized": "R"}


@dataclass(frozen=True)
class ActivationTrajectory:
    neuron: NeuronId
    points: tuple[tuple[float, float], ...]  # (strength, activation), ascending, includes 0

    def at(self, eps: float) -> float:
        for e, a in self.points:
            if e == eps:
                return a
        raise KeyError(f"trajectory of {self.neuron.key()} has no point at {eps}")

    def deviation(self) -> float:
        base = self.at(0.0)
        return float(sum(abs(a - base) for e, a in self.points if e > 0))


@dataclass(frozen=True)
class VulnerabilityRecord:
    neuron: NeuronId
    group: str
    flip_strength: float | None   # smallest eps matching final membership; None for shared
    deviation: float
    rank_in_group: int            # 0 = most vulnerable, unique within (layer, group)


@dataclass(frozen=True)
class NodeLayout:
    column: str                   # "L" | "M" | "R"
    order_in_column: int          # left-to-right position within the column
    color_scalar: float           # 0 = pure blue, 0.5 = purple, 1 = pure orange


@dataclass(frozen=True)
class ComparisonNode:
    neuron: NeuronId
    group: str
    benign_score: float
    attacked_score: float
    trajectory: ActivationTrajectory | None = None
    record: VulnerabilityRecord | None = None
    layout: NodeLayout | None = None


@dataclass(frozen=True)
class ComparisonEdge:
    source: NeuronId
    target: NeuronId
    provenance: str               # "both" | "benign-only" | "attacked-only"
    weight_benign: float | None
    weight_attacked: float | None

    def display_weight(self) -> float:
        w = self.weight_attacked if self.weight_attacked is not None else self.weight_benign
        return float(w)


@dataclass(frozen=True)
class ComparisonGraph:
    benign_class: int
    target_class: int
    method: str
    model_digest: str
    strengths: tuple[float, ...]
    eval_strength: float
    k: int
    m: int
    layers: tuple[str, ...]
    nodes: tuple[ComparisonNode, ...]
    edges: tuple[ComparisonEdge, ...]

    def node(self, neuron: NeuronId) -> ComparisonNode:
        for n in self.nodes:
            if n.neuron == neuron:
                return n
        raise KeyError(neuron.key())

    def groups(self) -> dict[NeuronId, str]:
        return {n.neuron: n.group for n in self.nodes}


def merge_and_classify(g0: AttributionGraph, gmax: AttributionGraph,
                       benign_profile: ActivationProfile | None = None,
                       attacked_profile: ActivationProfile | None = None) -> ComparisonGraph:
    """Partition the union of both node sets and tag edge provenance.

    Scores come from the full profiles when given (covers nodes absent from
    one graph); otherwise from graph node scores with 0 for absences.
    """
    if g0.model_digest != gmax.model_digest:
        raise ConfigError("graphs come from different models")
    if (g0.k, g0.m, g0.layers) != (gmax.k, gmax.m, gmax.layers):
        raise ConfigError("graphs were built with different k/m/layer configuration")

    v0, vmax = g0.node_set(), gmax.node_set()
    score0 = {n.neuron: n.score for nodes in g0.nodes.values() for n in nodes}
    score_max = {n.neuron: n.score for nodes in gmax.nodes.values() for n in nodes}

    def benign_score(n: NeuronId) -> float:
        if benign_profile is not None:
            return benign_profile.value(n.layer, n.channel)
        return score0.get(n, 0.0)

    def attacked_score(n: NeuronId) -> float:
        if attacked_profile is not None:
            return attacked_profile.value(n.layer, n.channel)
        return score_max.get(n, 0.0)

    layer_index = {name: i for i, name in enumerate(g0.layers)}
    nodes = []
    for neuron in sorted(v0 | vmax, key=lambda n: (layer_index[n.layer], n.channel)):
        if neuron in v0 and neuron in vmax:
            group = "shared"
        elif neuron in v0:
            group = "suppressed"
        else:
            group = "emphasized"
        nodes.append(ComparisonNode(neuron, group, benign_score(neuron), attacked_score(neuron)))

    e0 = {(e.source, e.target): e.weight for e in g0.edges}
    emax = {(e.source, e.target): e.weight for e in gmax.edges}
    edges = []
    for key in sorted(e0.keys() | emax.keys(),
                      key=lambda st: (layer_index[st[1].layer], st[1].channel, st[0].channel)):
        in0, inmax = key in e0, key in emax
        provenance = "both" if (in0 and inmax) else ("benign-only" if in0 else "attacked-only")
        edges.append(ComparisonEdge(key[0], key[1], provenance,
                                    e0.get(key), emax.get(key)))
    eval_strength = gmax.condition.strength if gmax.condition.kind == "attacked" else 0.0
    return ComparisonGraph(
        benign_class=g0.condition.benign_class,
        target_class=gmax.condition.target_class if gmax.condition.kind == "attacked"
        else g0.condition.benign_class,
        method="", model_digest=g0.model_digest,
        strengths=(), eval_strength=float(eval_strength or 0.0),
        k=g0.k, m=g0.m, layers=g0.layers,
        nodes=tuple(nodes), edges=tuple(edges))


def build_trajectories(profiles: dict[float, ActivationProfile],
                       neurons: set[NeuronId]) -> dict[NeuronId, ActivationTrajectory]:
    """Per-neuron aggregate activation as a function of attack strength."""
    if 0.0 not in profiles:
        raise MissingDependencyError("trajectories need the benign (strength 0) profile")
    out = {}
    for neuron in neurons:
        points = tuple(sorted((eps, p.value(neuron.layer, neuron.channel))
                              for eps, p in profiles.items()))
        out[neuron] = ActivationTrajectory(neuron, points)
    return out


def fractionate(family: dict[float, AttributionGraph],
                trajectories: dict[NeuronId, ActivationTrajectory]) -> dict[NeuronId, VulnerabilityRecord]:
    """Rank neurons within each (layer, group) by how weak an attack flips them.

    The flip strength is the smallest positive strength at which a neuron's
    graph membership matches its final (max-strength) state; ties order by
    larger activation deviation, then ascending channel.
    """
    if 0.0 not in family:
        raise MissingDependencyError("graph family must include strength 0")
    eps_positive = sorted(e for e in family if e > 0)
    eps_max = max(family)
    v0 = family[0.0].node_set()
    vmax = family[eps_max].node_set()
    membership = {eps: family[eps].node_set() for eps in eps_positive}

    records: dict[NeuronId, VulnerabilityRecord] = {}
    per_group: dict[tuple[str, str], list] = {}
    for neuron in v0 | vmax:
        traj = trajectories.get(neuron)
        if traj is None:
            raise MissingDependencyError(f"no trajectory for {neuron.key()}")
        deviation = traj.deviation()
        if neuron in v0 and neuron in vmax:
            group, flip = "shared", None
        elif neuron in vmax:
            group = "emphasized"
            hits = [eps for eps in eps_positive if neuron in membership[eps]]
            if not hits:
                raise RuntimeError(
                    f"{neuron.key()} classified emphasized but absent from every attacked graph")
            flip = hits[0]
        else:
            group = "suppressed"
            misses = [eps for eps in eps_positive if neuron not in membership[eps]]
            if not misses:
                raise RuntimeError(
                    f"{neuron.key()} classified suppressed but present in every attacked graph")
            flip = misses[0]
        records[neuron] = VulnerabilityRecord(neuron, group, flip, deviation, -1)
        per_group.setdefault((neuron.layer, group), []).append(neuron)

    for (_layer, group), members in per_group.items():
        if group == "shared":
            members.sort(key=lambda n: (-records[n].deviation, n.channel))
        else:
            members.sort(key=lambda n: (records[n].flip_strength, -records[n].deviation, n.channel))
        for rank, neuron in enumerate(members):
            records[neuron] = replace(records[neuron], rank_in_group=rank)
    return records


def _color_scalar(group: str, rank: int, group_size: int) -> float:
    if group == "shared":
        return 0.5
    if group_size == 1:
        return 0.0 if group == "suppressed" else 1.0
    frac = rank / (group_size - 1)   # 0 = most vulnerable
    if group == "suppressed":
        return 0.5 * (1.0 - frac)    # most vulnerable 0.5 (purple side) -> least 0.0 (blue)
    return 0.5 + 0.5 * frac          # most vulnerable 0.5 (purple side) -> least 1.0 (orange)


def layout(graph: ComparisonGraph) -> ComparisonGraph:
    """Assign columns, in-column order, and color scalars from the ranks.

    Rank 0 (most vulnerable) sits adjacent to the middle column: rightmost
    within the left column, leftmost within the right column.
    """
    sizes: dict[tuple[str, str], int] = {}
    for node in graph.nodes:
        if node.record is None:
            raise ConfigError("layout requires vulnerability records on every node")
        key = (node.neuron.layer, node.group)
        sizes[key] = sizes.get(key, 0) + 1

    laid = []
    for node in graph.nodes:
        n = sizes[(node.neuron.layer, node.group)]
        rank = node.record.rank_in_group
        if node.group == "suppressed":
            order = n - 1 - rank
        else:
            order = rank
        laid.append(replace(node, layout=NodeLayout(
            COLUMNS[node.group], order, _color_scalar(node.group, rank, n))))
    return replace(graph, nodes=tuple(laid))
