#!/usr/bin/env python3
"""Walk the full workbench scenario on the fixture model.

Runs the pipeline for stripes-h -> stripes-v, prints the comparison graph
summary, then masks the emphasized neurons in the deepest conv layer and
reports the change in targeted attack success rate.
"""
from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from advrgraph.model import NeuronId  # noqa: E402
from advrgraph.pipeline import (PipelineContext, RunConfig, compute_comparison,  # noqa: E402
                                evaluate_edits)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", type=Path, default=None,
                        help="asset root (default: a throwaway temp dir seeded from ./data)")
    parser.add_argument("--k", type=int, default=4)
    parser.add_argument("--m", type=int, default=3)
    args = parser.parse_args()

    if args.data_dir is None:
        root = Path(tempfile.mkdtemp(prefix="advrgraph-demo-"))
        committed = REPO / "data" / "fixture"
        if committed.exists():
            import shutil
            shutil.copytree(committed, root / "fixture")
    else:
        root = args.data_dir

    ctx = PipelineContext.open(root)
    cfg = RunConfig(benign_class=0, target_class=1, k=args.k, m=args.m)
    names = ctx.dataset.class_names
    print(f"model {ctx.model.weight_digest[:16]}; attacking "
          f"{names[cfg.benign_class]!r} -> {names[cfg.target_class]!r} ({cfg.method})")

    key, cached = compute_comparison(ctx, cfg)
    doc = ctx.store.get_json(key)
    print(f"comparison graph {key[:16]} ({'cached' if cached else 'computed'})")
    print("  attack curve: " + ", ".join(
        f"{c['strength']:g}:{c['successRate']:.2f}" for c in doc["attackCurve"]))
    for layer in doc["layers"]:
        rows = [n for n in doc["nodes"] if n["layer"] == layer]
        def fmt(group):
            chans = [str(n["channel"]) for n in rows if n["group"] == group]
            return ",".join(chans) if chans else "-"
        print(f"  {layer}: suppressed [{fmt('suppressed')}] "
              f"shared [{fmt('shared')}] emphasized [{fmt('emphasized')}]")

    deepest = doc["layers"][-1]
    targets = [NeuronId(n["layer"], n["channel"]) for n in doc["nodes"]
               if n["layer"] == deepest and n["group"] == "emphasized"]
    if not targets:
        print("no emphasized neurons in the deepest layer; nothing to mask")
        return 0
    print(f"masking emphasized neurons in {deepest}: "
          + ", ".join(n.key() for n in targets))
    _, report = evaluate_edits(ctx, key, targets)
    print(f"  benign accuracy {report['benignAccuracyBefore']:.3f} -> "
          f"{report['benignAccuracyAfter']:.3f}")
    for entry in report["perStrength"]:
        print(f"  strength {entry['strength']:g}: success rate "
              f"{entry['successRateBefore']:.3f} -> {entry['successRateAfter']:.3f}")
    print(f"  {len(report['graphDiff'])} neurons changed group after the edit")
    return 0


if __name__ == "__main__":
    sys.exit(main())
