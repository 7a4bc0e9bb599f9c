"""Batch driver: every pipeline capability, headless, with content-addressed caching.

Subcommands mirror the pipeline stages; downstream stages require upstream
artifacts to exist already (exit code 3 names the missing artifact), so a
full run is `fixture`, `sweep`, `profile`, `graph`, `compare`, `export`.
Exit codes: 0 ok, 2 invalid config, 3 missing dependency artifact.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, MissingDependencyError, ModelLoadError, NotFoundError
from .model import NeuronId
from .pipeline import (PipelineContext, RunConfig, compute_comparison, comparison_key,
                       evaluate_edits, run_family, run_influences, run_profiles, run_sweep)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="run config file (key = value lines)")
    p.add_argument("--data-dir", type=Path, default=None,
                   help="asset root (default: $ADVRGRAPH_DATA_DIR or ./data)")
    p.add_argument("--benign-class", type=int)
    p.add_argument("--target-class", type=int)
    p.add_argument("--method", choices=["FGM_L2", "FGM_LINF"])
    p.add_argument("--strengths", type=str, help="comma-separated ascending strengths")
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--reducer", type=str)
    p.add_argument("--seed", type=int)


def load_run_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_file(args.config)
    else:
        cfg = None
    overrides = {
        "benign_class": args.benign_class,
        "target_class": args.target_class,
        "method": args.method,
        "strengths": args.strengths,
        "k": args.k,
        "m": args.m,
        "reducer": args.reducer,
        "seed": args.seed,
    }
    overrides = {key: value for key, value in overrides.items() if value is not None}
    if cfg is None:
        return RunConfig.from_mapping(overrides)
    merged = {
        "benign_class": cfg.benign_class, "target_class": cfg.target_class,
        "method": cfg.method, "strengths": cfg.strengths, "k": cfg.k, "m": cfg.m,
        "reducer": cfg.reducer, "model_path": cfg.model_path,
        "dataset_path": cfg.dataset_path, "output_dir": cfg.output_dir, "seed": cfg.seed,
    }
    merged.update(overrides)
    return RunConfig.from_mapping(merged)


def _context(args: argparse.Namespace, cfg: RunConfig | None = None) -> PipelineContext:
    root = args.data_dir
    if root is None and cfg is not None and cfg.output_dir:
        root = Path(cfg.output_dir)
    model_dir = Path(cfg.model_path).parent if cfg and cfg.model_path else None
    return PipelineContext.open(root, model_dir=model_dir)


def cmd_fixture(args) -> int:
    cfg = RunConfig.from_file(args.config) if args.config else None
    ctx = _context(args, cfg)
    from .fixture import accuracy
    acc = accuracy(ctx.model, ctx.dataset, "test")
    print(f"fixture model {ctx.model.weight_digest[:16]} "
          f"({len(ctx.dataset.ids)} images, test accuracy {acc:.3f})")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_run_config(args)
    ctx = _context(args, cfg)
    key, sweep, cached = run_sweep(ctx, cfg)
    state = "cache hit" if cached else "computed"
    print(f"sweep {key[:16]} {state}")
    for eps, rate in sweep.curve():
        print(f"  strength {eps:g}: success rate {rate:.3f}")
    return 0


def cmd_profile(args) -> int:
    cfg = load_run_config(args)
    ctx = _context(args, cfg)
    _, sweep, _ = run_sweep(ctx, cfg, compute=False)
    profiles = run_profiles(ctx, cfg, sweep)
    run_influences(ctx, cfg, sweep, profiles)
    print(f"profiles for {len(profiles)} conditions over layers {', '.join(ctx.graph_layers())}")
    return 0


def cmd_graph(args) -> int:
    cfg = load_run_config(args)
    ctx = _context(args, cfg)
    _, sweep, _ = run_sweep(ctx, cfg, compute=False)
    profiles = run_profiles(ctx, cfg, sweep, compute=False)
    influences = run_influences(ctx, cfg, sweep, profiles, compute=False)
    family = run_family(ctx, cfg, sweep, profiles, influences)
    for eps, graph in sorted(family.items()):
        n = sum(len(nodes) for nodes in graph.nodes.values())
        print(f"graph at strength {eps:g}: {n} nodes, {len(graph.edges)} edges")
    return 0


def cmd_compare(args) -> int:
    cfg = load_run_config(args)
    ctx = _context(args, cfg)
    key, cached = compute_comparison(ctx, cfg, compute=False)
    doc = ctx.store.get_json(key)
    state = "cache hit" if cached else "computed"
    print(f"comparison {key} {state}")
    for layer in doc["layers"]:
        counts = {"suppressed": 0, "shared": 0, "emphasized": 0}
        for node in doc["nodes"]:
            if node["layer"] == layer:
                counts[node["group"]] += 1
        print(f"  {layer}: {counts['suppressed']} suppressed, "
              f"{counts['shared']} shared, {counts['emphasized']} emphasized")
    print("  attack curve: " + ", ".join(
        f"{c['strength']:g}→{c['successRate']:.3f}" for c in doc["attackCurve"]))
    return 0


def _neuron_list(text: str) -> list[NeuronId]:
    neurons = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        layer, _, channel = token.partition("/")
        if not channel:
            raise ConfigError(f"bad neuron {token!r}, expected layer/channel")
        neurons.append(NeuronId(layer, int(channel)))
    return neurons


def _resolve_key(ctx: PipelineContext, args) -> str:
    if getattr(args, "key", None):
        return args.key
    cfg = load_run_config(args)
    return comparison_key(ctx.model.weight_digest, cfg)


def cmd_patches(args) -> int:
    cfg = load_run_config(args) if not args.key else None
    ctx = _context(args, cfg)
    from .service import ensure_neuron_assets
    key = _resolve_key(ctx, args)
    if not ctx.store.has(key):
        raise MissingDependencyError(f"comparison artifact {key} not present; run `compare` first")
    doc = ctx.store.get_json(key)
    neurons = (_neuron_list(args.neurons) if args.neurons
               else [NeuronId(n["layer"], n["channel"]) for n in doc["nodes"]])
    for neuron in neurons:
        meta = ensure_neuron_assets(ctx, neuron, tuple(doc["pixelRange"]))
        print(f"{neuron.key()}: {len(meta['patches'])} patches")
    return 0


def cmd_featurevis(args) -> int:
    cfg = load_run_config(args) if not args.key else None
    ctx = _context(args, cfg)
    from .service import ensure_neuron_assets
    key = _resolve_key(ctx, args)
    if not ctx.store.has(key):
        raise MissingDependencyError(f"comparison artifact {key} not present; run `compare` first")
    doc = ctx.store.get_json(key)
    neurons = (_neuron_list(args.neurons) if args.neurons
               else [NeuronId(n["layer"], n["channel"]) for n in doc["nodes"]])
    for neuron in neurons:
        meta = ensure_neuron_assets(ctx, neuron, tuple(doc["pixelRange"]))
        print(f"{neuron.key()}: feature-vis objective {meta['featureVis']['objective']:.4f}")
    return 0


def cmd_edit_eval(args) -> int:
    cfg = load_run_config(args) if not args.key else None
    ctx = _context(args, cfg)
    key = _resolve_key(ctx, args)
    neurons = _neuron_list(args.neurons)
    report_key, report = evaluate_edits(ctx, key, neurons)
    print(f"edit report {report_key[:16]} ({len(report['neurons'])} neurons masked)")
    print(f"  benign accuracy {report['benignAccuracyBefore']:.3f} → "
          f"{report['benignAccuracyAfter']:.3f}")
    for entry in report["perStrength"]:
        print(f"  strength {entry['strength']:g}: success rate "
              f"{entry['successRateBefore']:.3f} → {entry['successRateAfter']:.3f}")
    print(f"  {len(report['graphDiff'])} nodes changed group")
    return 0


def cmd_export(args) -> int:
    cfg = load_run_config(args) if not args.key else None
    ctx = _context(args, cfg)
    key = _resolve_key(ctx, args)
    if not ctx.store.has(key):
        raise MissingDependencyError(f"comparison artifact {key} not present; run `compare` first")
    data = ctx.store.get_bytes(key)
    out = Path(args.out) if args.out else Path(f"{key}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    print(f"exported {key} to {out} ({len(data)} bytes)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advrgraph",
                                     description="adversarial attribution-graph workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, extra in [
        ("fixture", cmd_fixture, None),
        ("sweep", cmd_sweep, None),
        ("profile", cmd_profile, None),
        ("graph", cmd_graph, None),
        ("compare", cmd_compare, None),
        ("patches", cmd_patches, "assets"),
        ("featurevis", cmd_featurevis, "assets"),
        ("edit-eval", cmd_edit_eval, "edit"),
        ("export", cmd_export, "export"),
        ("serve", cmd_serve, "serve"),
    ]:
        p = sub.add_parser(name)
        _add_config_args(p)
        if extra in ("assets", "edit", "export"):
            p.add_argument("--key", type=str, help="comparison cache key (default: from config)")
        if extra == "assets":
            p.add_argument("--neurons", type=str, help="layer/channel list (default: all graph nodes)")
        if extra == "edit":
            p.add_argument("--neurons", type=str, required=True, help="layer/channel list to mask")
        if extra == "export":
            p.add_argument("--out", type=Path, help="output path (default: <key>.json)")
        if extra == "serve":
            p.add_argument("--port", type=int, default=8000)
            p.add_argument("--host", type=str, default="127.0.0.1")
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    import os
    if args.data_dir is not None:
        os.environ["ADVRGRAPH_DATA_DIR"] = str(args.data_dir)
        args.data_dir = Path(args.data_dir)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except (MissingDependencyError, NotFoundError, ModelLoadError) as exc:
        print(f"missing dependency: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
