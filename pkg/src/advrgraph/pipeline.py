"""End-to-end pipeline shared by the CLI and the HTTP service.

Stages (sweep, profiles, influence tables, attribution graphs, comparison
graph, edit reports) are cached in the content-addressed store. Every stage
writes its canonical serialization and then reads it back, so downstream
stages always consume round-tripped values: cold and warm runs produce
byte-identical documents.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .attack import AttackConfig, SweepResult, attack_sweep, sweep_from_doc, sweep_to_doc
from .attribution import (ActivationProfile, AttributionGraph, Condition, DEFAULT_K,
                          DEFAULT_M, DEFAULT_REDUCER, InfluenceTable, aggregate_influence,
                          aggregate_profile, build_graph, candidate_channels,
                          graph_from_doc, graph_to_doc, influence_from_table,
                          influence_to_table, profile_from_table, profile_to_table)
from .comparison import (ComparisonGraph, build_trajectories, fractionate, layout,
                         merge_and_classify)
from .errors import ConfigError, MissingDependencyError, NotFoundError
from .fixture import FixtureDataset, data_root, fixture_model
from .model import EditSet, ModelHandle, NeuronId, masked, predict, validate_neurons
from .store import Store, digest_of

Progress = Callable[[float], None]
EVAL_SPLIT = "test"


@dataclass(frozen=True)
class RunConfig:
    benign_class: int
    target_class: int
    method: str = "FGM_L2"
    strengths: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5)
    k: int = DEFAULT_K
    m: int = DEFAULT_M
    reducer: str = DEFAULT_REDUCER
    model_path: str = ""
    dataset_path: str = ""
    output_dir: str = ""
    seed: int = 0

    def validate(self, num_classes: int | None = None) -> "RunConfig":
        if self.k < 1 or self.m < 1:
            raise ConfigError("k and m must be >= 1")
        if self.reducer != DEFAULT_REDUCER:
            raise ConfigError(f"unknown reducer {self.reducer!r}")
        AttackConfig(self.method, self.benign_class, self.target_class, self.strengths)
        if num_classes is not None:
            for cls in (self.benign_class, self.target_class):
                if not (0 <= cls < num_classes):
                    raise ConfigError(f"class {cls} out of range [0, {num_classes})")
        return self

    def attack_config(self) -> AttackConfig:
        return AttackConfig(self.method, self.benign_class, self.target_class, self.strengths)

    def to_file(self, path: Path) -> None:
        lines = [
            "# advrgraph run config",
            f"benign_class = {self.benign_class}",
            f"target_class = {self.target_class}",
            f"method = {self.method}",
            "strengths = " + ",".join(str(s) for s in self.strengths),
            f"k = {self.k}",
            f"m = {self.m}",
            f"reducer = {self.reducer}",
            f"model_path = {self.model_path}",
            f"dataset_path = {self.dataset_path}",
            f"output_dir = {self.output_dir}",
            f"seed = {self.seed}",
        ]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        values: dict[str, str] = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line {line!r} (expected key = value)")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        def get(key, cast, default):
            if key in values and values[key] != "" and values[key] is not None:
                return cast(values[key])
            return default

        strengths = values.get("strengths", None)
        if isinstance(strengths, str):
            strengths = tuple(float(v) for v in strengths.split(",") if v.strip())
        elif strengths is not None:
            strengths = tuple(float(v) for v in strengths)
        else:
            strengths = cls.strengths
        try:
            return cls(
                benign_class=get("benign_class", int, None),
                target_class=get("target_class", int, None),
                method=get("method", str, cls.method),
                strengths=strengths,
                k=get("k", int, cls.k),
                m=get("m", int, cls.m),
                reducer=get("reducer", str, cls.reducer),
                model_path=get("model_path", str, ""),
                dataset_path=get("dataset_path", str, ""),
                output_dir=get("output_dir", str, ""),
                seed=get("seed", int, 0),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid run config: {exc}") from exc


@dataclass
class PipelineContext:
    model: ModelHandle
    dataset: FixtureDataset
    store: Store
    root: Path

    @classmethod
    def open(cls, root: Path | None = None,
             model_dir: Path | None = None) -> "PipelineContext":
        root = Path(root) if root is not None else data_root()
        model, dataset = fixture_model(base=root, directory=model_dir)
        return cls(model, dataset, Store(root), root)

    def benign_inputs(self, benign_class: int) -> tuple[np.ndarray, np.ndarray]:
        ids = self.dataset.subset(label=benign_class, split=EVAL_SPLIT)
        if len(ids) == 0:
            raise ConfigError(f"no {EVAL_SPLIT} inputs labeled class {benign_class}")
        return self.dataset.images[ids], ids

    def graph_layers(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.model.feature_layers())


# ---------------------------------------------------------------------------
# Cache keys


def comparison_key(model_digest: str, cfg: RunConfig) -> str:
    return digest_of({
        "modelDigest": model_digest,
        "benignClass": cfg.benign_class,
        "targetClass": cfg.target_class,
        "method": cfg.method,
        "strengths": list(cfg.strengths),
        "k": cfg.k,
        "m": cfg.m,
        "reducer": cfg.reducer,
    })


def _stage_key(stage: str, **fields) -> str:
    return digest_of({"stage": stage, **fields})


# ---------------------------------------------------------------------------
# Stages


def run_sweep(ctx: PipelineContext, cfg: RunConfig, *, compute: bool = True) -> tuple[str, SweepResult, bool]:
    """Attack sweep stage; returns (key, round-tripped result, cache_hit)."""
    cfg.validate(ctx.model.num_classes)
    attack_cfg = cfg.attack_config()
    inputs, ids = ctx.benign_inputs(cfg.benign_class)
    key = _stage_key("sweep", modelDigest=ctx.model.weight_digest,
                     config=attack_cfg.describe(),
                     inputIds=[int(i) for i in ids])
    if ctx.store.has(key):
        return key, sweep_from_doc(ctx.store.get_json(key)), True
    if not compute:
        raise MissingDependencyError(f"sweep artifact {key} not present; run `sweep` first")
    sweep = attack_sweep(ctx.model, inputs, ids, attack_cfg, ctx.store)
    ctx.store.put_json_at(key, sweep_to_doc(sweep))
    return key, sweep_from_doc(ctx.store.get_json(key)), False


def _conditions(cfg: RunConfig, sweep: SweepResult) -> dict[float, Condition]:
    conds: dict[float, Condition] = {
        0.0: Condition("benign", cfg.benign_class, sweep.input_set_ref)}
    for eps in cfg.strengths:
        if eps > 0:
            conds[eps] = Condition("attacked", cfg.benign_class,
                                   sweep.per_strength[eps].attacked_ref,
                                   target_class=cfg.target_class, strength=eps)
    return conds


def _condition_inputs(ctx: PipelineContext, cond: Condition) -> np.ndarray:
    return ctx.store.get_arrays(cond.input_set_ref)["images"].astype(np.float64)


def run_profiles(ctx: PipelineContext, cfg: RunConfig, sweep: SweepResult,
                 model: ModelHandle | None = None, *, compute: bool = True,
                 progress: Progress | None = None) -> dict[float, ActivationProfile]:
    """Activation profiles for the benign condition and every positive strength."""
    model = model or ctx.model
    layers = ctx.graph_layers()
    profiles: dict[float, ActivationProfile] = {}
    conds = _conditions(cfg, sweep)
    for i, (eps, cond) in enumerate(sorted(conds.items())):
        key = _stage_key("profile", modelDigest=model.weight_digest,
                         mask=sorted(n.key() for n in model.active_mask),
                         reducer=cfg.reducer, layers=list(layers),
                         condition=cond.digest_fields())
        if not ctx.store.has(key, "txt"):
            if not compute:
                raise MissingDependencyError(f"profile artifact {key} not present; run `profile` first")
            profile = aggregate_profile(model, _condition_inputs(ctx, cond), layers, cond, cfg.reducer)
            ctx.store.put_text_at(key, profile_to_table(profile))
        profiles[eps] = profile_from_table(ctx.store.get_text(key), cond)
        if progress:
            progress((i + 1) / len(conds))
    return profiles


def run_influences(ctx: PipelineContext, cfg: RunConfig, sweep: SweepResult,
                   profiles: dict[float, ActivationProfile],
                   model: ModelHandle | None = None, *, compute: bool = True,
                   progress: Progress | None = None) -> dict[float, dict[str, InfluenceTable]]:
    """Influence tables per condition for every layer with a profiled predecessor."""
    model = model or ctx.model
    layers = ctx.graph_layers()
    profiled = set(layers)
    cands = {layer: candidate_channels(list(profiles.values()), layer, cfg.k) for layer in layers}
    conds = _conditions(cfg, sweep)
    out: dict[float, dict[str, InfluenceTable]] = {}
    for i, (eps, cond) in enumerate(sorted(conds.items())):
        tables: dict[str, InfluenceTable] = {}
        for layer in layers:
            spec = model.layer(layer)
            prev = spec.predecessors[0] if spec.predecessors else None
            if prev is None or prev not in profiled:
                continue
            key = _stage_key("influence", modelDigest=model.weight_digest,
                             mask=sorted(n.key() for n in model.active_mask),
                             layer=layer, prevChannels=list(cands[prev]),
                             channels=list(cands[layer]), condition=cond.digest_fields())
            if not ctx.store.has(key, "txt"):
                if not compute:
                    raise MissingDependencyError(
                        f"influence artifact {key} not present; run `profile` first")
                table = aggregate_influence(model, _condition_inputs(ctx, cond), layer,
                                            cands[prev], cands[layer], cond)
                ctx.store.put_text_at(key, influence_to_table(table))
            tables[layer] = influence_from_table(ctx.store.get_text(key), cond)
        out[eps] = tables
        if progress:
            progress((i + 1) / len(conds))
    return out


def run_family(ctx: PipelineContext, cfg: RunConfig, sweep: SweepResult,
               profiles: dict[float, ActivationProfile],
               influences: dict[float, dict[str, InfluenceTable]],
               model: ModelHandle | None = None, *, compute: bool = True) -> dict[float, AttributionGraph]:
    """Attribution graph per strength (0 = benign), all built with the same k/m."""
    model = model or ctx.model
    family: dict[float, AttributionGraph] = {}
    for eps, profile in sorted(profiles.items()):
        key = _stage_key("graph", modelDigest=model.weight_digest,
                         mask=sorted(n.key() for n in model.active_mask),
                         k=cfg.k, m=cfg.m, reducer=cfg.reducer,
                         condition=profile.condition.digest_fields())
        if not ctx.store.has(key):
            if not compute:
                raise MissingDependencyError(f"graph artifact {key} not present; run `graph` first")
            graph = build_graph(model, profile, influences[eps], cfg.k, cfg.m)
            ctx.store.put_json_at(key, graph_to_doc(graph))
        family[eps] = graph_from_doc(ctx.store.get_json(key), profile.condition)
    return family


def benign_accuracy(model: ModelHandle, inputs: np.ndarray, benign_class: int) -> float:
    preds = predict(model, inputs).argmax(axis=-1)
    return float((preds == benign_class).mean())


def assemble_comparison(cfg: RunConfig, sweep: SweepResult,
                        profiles: dict[float, ActivationProfile],
                        family: dict[float, AttributionGraph]) -> ComparisonGraph:
    """Merge the family into a laid-out comparison graph."""
    eval_strength = max(cfg.strengths)
    g0 = family[0.0]
    gmax = family[eval_strength] if eval_strength > 0 else g0
    merged = merge_and_classify(g0, gmax, profiles[0.0],
                                profiles[eval_strength] if eval_strength > 0 else profiles[0.0])
    trajectories = build_trajectories(profiles, {n.neuron for n in merged.nodes})
    records = fractionate(family, trajectories)
    nodes = tuple(replace(node, trajectory=trajectories[node.neuron], record=records[node.neuron])
                  for node in merged.nodes)
    merged = replace(merged, nodes=nodes, method=cfg.method, strengths=cfg.strengths,
                     eval_strength=eval_strength, benign_class=cfg.benign_class,
                     target_class=cfg.target_class)
    return layout(merged)


def comparison_to_doc(graph: ComparisonGraph, cfg: RunConfig, sweep: SweepResult,
                      key: str, benign_acc: float, sweep_key: str,
                      class_names: tuple[str, ...]) -> dict:
    nodes = []
    for node in graph.nodes:
        nodes.append({
            "layer": node.neuron.layer,
            "channel": node.neuron.channel,
            "group": node.group,
            "benignScore": node.benign_score,
            "attackedScore": node.attacked_score,
            "flipStrength": node.record.flip_strength,
            "deviation": node.record.deviation,
            "rankInGroup": node.record.rank_in_group,
            "trajectory": [{"strength": e, "activation": a} for e, a in node.trajectory.points],
            "layout": {
                "column": node.layout.column,
                "orderInColumn": node.layout.order_in_column,
                "colorScalar": node.layout.color_scalar,
            },
        })
    edges = []
    for e in graph.edges:
        edges.append({
            "sourceLayer": e.source.layer, "sourceChannel": e.source.channel,
            "targetLayer": e.target.layer, "targetChannel": e.target.channel,
            "provenance": e.provenance,
            "weightBenign": e.weight_benign,
            "weightAttacked": e.weight_attacked,
            "weight": e.display_weight(),
        })
    return {
        "schema": "advrgraph/comparison-graph/v1",
        "cacheKey": key,
        "modelDigest": graph.model_digest,
        "benignClass": graph.benign_class,
        "targetClass": graph.target_class,
        "method": graph.method,
        "reducer": cfg.reducer,
        "k": graph.k,
        "m": graph.m,
        "strengths": list(graph.strengths),
        "evalStrength": graph.eval_strength,
        "pixelRange": list(cfg.attack_config().pixel_range),
        "layers": list(graph.layers),
        "classNames": list(class_names),
        "benignAccuracy": benign_acc,
        "inputSetRef": sweep.input_set_ref,
        "sweepKey": sweep_key,
        "attackCurve": [{"strength": eps, "successRate": rate} for eps, rate in sweep.curve()],
        "nodes": nodes,
        "edges": edges,
    }


def compute_comparison(ctx: PipelineContext, cfg: RunConfig, *, compute: bool = True,
                       progress: Progress | None = None) -> tuple[str, bool]:
    """Full pipeline: sweep -> profiles -> influences -> family -> document.

    Returns (cache key, was_cached). The stored document bytes are the
    canonical serialization served by the API and written by the CLI.
    """
    cfg.validate(ctx.model.num_classes)
    key = comparison_key(ctx.model.weight_digest, cfg)
    if ctx.store.has(key):
        return key, True

    def tick(frac: float, lo: float, hi: float) -> None:
        if progress:
            progress(lo + frac * (hi - lo))

    sweep_key, sweep, _ = run_sweep(ctx, cfg, compute=compute)
    tick(1.0, 0.0, 0.3)
    profiles = run_profiles(ctx, cfg, sweep, compute=compute,
                            progress=lambda f: tick(f, 0.3, 0.6))
    influences = run_influences(ctx, cfg, sweep, profiles, compute=compute,
                                progress=lambda f: tick(f, 0.6, 0.8))
    family = run_family(ctx, cfg, sweep, profiles, influences, compute=compute)
    tick(1.0, 0.8, 0.9)
    graph = assemble_comparison(cfg, sweep, profiles, family)
    inputs, _ = ctx.benign_inputs(cfg.benign_class)
    acc = benign_accuracy(ctx.model, inputs, cfg.benign_class)
    doc = comparison_to_doc(graph, cfg, sweep, key, acc, sweep_key,
                            ctx.dataset.class_names)
    ctx.store.put_json_at(key, doc)
    tick(1.0, 0.9, 1.0)
    return key, False


# ---------------------------------------------------------------------------
# Edit evaluation


def edit_key(comparison: str, neurons: list[NeuronId]) -> str:
    return _stage_key("edit", comparisonKey=comparison,
                      neurons=sorted(n.key() for n in neurons))


def evaluate_edits(ctx: PipelineContext, key: str, neurons: list[NeuronId],
                   *, progress: Progress | None = None) -> tuple[str, dict]:
    """Re-evaluate the cached sweep under a masked model and diff the groups."""
    if not ctx.store.has(key):
        raise NotFoundError(key)
    doc = ctx.store.get_json(key)
    valid = validate_neurons(ctx.model, neurons)
    report_key = edit_key(key, list(valid))
    if ctx.store.has(report_key):
        return report_key, ctx.store.get_json(report_key)

    cfg = RunConfig(
        benign_class=int(doc["benignClass"]), target_class=int(doc["targetClass"]),
        method=doc["method"], strengths=tuple(doc["strengths"]),
        k=int(doc["k"]), m=int(doc["m"]), reducer=doc["reducer"])
    edited = ctx.model if not valid else masked(ctx.model, EditSet(frozenset(valid)))

    sweep_key, sweep, _ = run_sweep(ctx, cfg, compute=False)
    inputs, _ids = ctx.benign_inputs(cfg.benign_class)
    acc_before = float(doc["benignAccuracy"])
    acc_after = benign_accuracy(edited, inputs, cfg.benign_class)

    per_strength = []
    curve_before = {c["strength"]: c["successRate"] for c in doc["attackCurve"]}
    for eps in cfg.strengths:
        attacked = ctx.store.get_arrays(sweep.per_strength[eps].attacked_ref)["images"]
        preds = predict(edited, attacked.astype(np.float64)).argmax(axis=-1)
        per_strength.append({
            "strength": eps,
            "successRateBefore": float(curve_before[eps]),
            "successRateAfter": float((preds == cfg.target_class).mean()),
        })
        if progress:
            progress(0.1 + 0.5 * (len(per_strength) / len(cfg.strengths)))

    groups_before = {(n["layer"], n["channel"]): n["group"] for n in doc["nodes"]}
    profiles = run_profiles(ctx, cfg, sweep, model=edited)
    influences = run_influences(ctx, cfg, sweep, profiles, model=edited)
    family = run_family(ctx, cfg, sweep, profiles, influences, model=edited)
    eval_strength = max(cfg.strengths)
    gmax = family[eval_strength] if eval_strength > 0 else family[0.0]
    merged = merge_and_classify(family[0.0], gmax, profiles[0.0],
                                profiles.get(eval_strength, profiles[0.0]))
    groups_after = {(n.neuron.layer, n.neuron.channel): n.group for n in merged.nodes}

    diff = []
    layer_index = {name: i for i, name in enumerate(ctx.graph_layers())}
    for node_key in sorted(groups_before.keys() | groups_after.keys(),
                           key=lambda lc: (layer_index[lc[0]], lc[1])):
        before = groups_before.get(node_key)
        after = groups_after.get(node_key)
        if before != after:
            diff.append({"layer": node_key[0], "channel": node_key[1],
                         "groupBefore": before, "groupAfter": after})

    report = {
        "schema": "advrgraph/edit-report/v1",
        "cacheKey": key,
        "editKey": report_key,
        "neurons": [{"layer": n.layer, "channel": n.channel}
                    for n in sorted(valid, key=lambda n: (layer_index.get(n.layer, 99), n.channel))],
        "benignAccuracyBefore": acc_before,
        "benignAccuracyAfter": acc_after,
        "perStrength": per_strength,
        "graphDiff": diff,
    }
    ctx.store.put_json_at(report_key, report)
    if progress:
        progress(1.0)
    return report_key, ctx.store.get_json(report_key)
