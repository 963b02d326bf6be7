#!/usr/bin/env python3
"""Full toy experiment: train, evaluate every metric, render image grids.

Example:
    python3 scripts/run_toy_experiment.py --out out/full --seed 11 --steps 400
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from histdis.cli import main as cli_main
from histdis.config import RunConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/full")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--image-size", type=int, default=32)
    ap.add_argument("--config", default=None,
                    help="optional JSON config; flags above still override")
    args = ap.parse_args()

    cfg = RunConfig.load(args.config) if args.config else RunConfig(
        n_x=4, n_y=16, batch_size=16, lr_generator=0.15)
    cfg.seed = args.seed
    cfg.steps = args.steps
    cfg.image_size = args.image_size
    cfg.validate()
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(cfg.to_dict(), fh)
        cfg_path = fh.name

    out = args.out
    ckpt = str(Path(out) / "model.ckpt")
    steps = [
        ["gradcheck", "--seed", str(args.seed)],
        ["train", "--config", cfg_path, "--out", out],
        ["eval", "--checkpoint", ckpt, "--which", "chi2", "--out", out],
        ["eval", "--checkpoint", ckpt, "--which", "retrieval", "--out", out],
        ["eval", "--checkpoint", ckpt, "--which", "iou", "--out", out],
        ["eval", "--checkpoint", ckpt, "--which", "resistivity", "--out", out],
        ["render-grid", "--checkpoint", ckpt, "--out", out],
        ["render-grid", "--checkpoint", ckpt, "--out", out, "--hybrid"],
    ]
    for argv in steps:
        print(f"\n=== histdis {' '.join(argv)}")
        rc = cli_main(argv)
        if rc != 0:
            print(f"step failed with exit code {rc}", file=sys.stderr)
            return rc
    print(f"\nall artifacts in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
