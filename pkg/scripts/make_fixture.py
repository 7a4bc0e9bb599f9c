#!/usr/bin/env python3
"""Regenerate the committed fixture assets and the golden attack curve.

Writes data/fixture (weights, dataset, manifest) and
data/golden/attack_curve.json. Rerunning on an unchanged tree is a no-op
apart from timestamps; the manifest records the weight digest so any drift
is caught by the test suite.
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from advrgraph.attack import attack_sweep  # noqa: E402
from advrgraph.fixture import accuracy, fixture_model  # noqa: E402
from advrgraph.pipeline import RunConfig  # noqa: E402
from advrgraph.store import Store, canonical_json  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", type=Path, default=REPO / "data")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    model, dataset = fixture_model(seed=args.seed, base=args.data_dir, rebuild=True)
    acc = accuracy(model, dataset, "test")
    print(f"fixture {model.weight_digest[:16]} test accuracy {acc:.3f}")
    if acc < 0.90:
        print("accuracy below the 0.90 floor; adjust training", file=sys.stderr)
        return 1

    cfg = RunConfig(benign_class=0, target_class=1)
    ids = dataset.subset(label=cfg.benign_class, split="test")
    with tempfile.TemporaryDirectory() as tmp:
        sweep = attack_sweep(model, dataset.images[ids], ids, cfg.attack_config(), Store(tmp))
    curve = sweep.curve()
    for eps, rate in curve:
        print(f"  strength {eps:g}: success rate {rate:.3f}")
    golden = {
        "modelDigest": model.weight_digest,
        "benignClass": cfg.benign_class,
        "targetClass": cfg.target_class,
        "method": cfg.method,
        "curve": [{"strength": eps, "successRate": rate} for eps, rate in curve],
    }
    golden_path = args.data_dir / "golden" / "attack_curve.json"
    golden_path.parent.mkdir(parents=True, exist_ok=True)
    golden_path.write_text(canonical_json(golden) + "\n")
    print(f"wrote {golden_path}")

    rate0 = curve[0][1]
    rate_max = curve[-1][1]
    if rate0 > 0.05 or rate_max < 0.50:
        print(f"attack efficacy out of bounds: rate(0)={rate0}, rate(max)={rate_max}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
