"""Command-line experiment driver.

Subcommands: gradcheck, train, eval, render-grid.  Exit codes:
0 success, 1 check failure, 2 config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_mod
from . import evaluation, imageio
from .config import RunConfig
from .errors import CheckpointFormatError, ConfigError
from .gradcheck import run_all
from .losses import ScheduleConfig, training_schedule
from .scene import LatentCode, ToyDatasetSpec, make_two_domain_dataset, render

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

CHECKPOINT_INTERVAL = 500


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    cfg.validate()
    return cfg


def _ensure_outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise IOError(f"output directory {out} is not writable: {exc}")
    return out


def cmd_gradcheck(args) -> int:
    checks = run_all(seed=args.seed if args.seed is not None else 0,
                     corrupt=args.corrupt_hook)
    all_ok = True
    for c in checks:
        status = "pass" if c.report.passed else "FAIL"
        print(f"{status}  {c.name:<22} max_rel_err={c.report.max_rel_err:.3e}")
        all_ok &= c.report.passed
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def _write_loss_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "scheme", "loss", "tau", "seed"])
        for r in rows:
            w.writerow([r.step, r.scheme, f"{r.loss:.12g}", f"{r.tau:.12g}", r.seed])


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _ensure_outdir(cfg)
    state = ckpt_mod.fresh_state(cfg)
    rng = ckpt_mod.training_rng(state)
    partition = make_two_domain_dataset(
        ToyDatasetSpec(n_x=cfg.n_x, n_y=cfg.n_y, n_b=cfg.n_b))
    rows = []
    remaining = cfg.steps
    while True:
        chunk = min(remaining, CHECKPOINT_INTERVAL) if remaining else 0
        if chunk:
            sched = ScheduleConfig(
                steps=chunk, batch_size=cfg.batch_size, tau=cfg.tau,
                hybrid_every=cfg.hybrid_every, lr_filter=cfg.lr_filter,
                lr_generator=cfg.lr_generator, optimizer=cfg.optimizer,
                image_size=cfg.image_size)
            training_schedule(sched, state.bank, state.scene, partition, rng,
                              seed=cfg.seed, log=rows, start_step=state.step)
            state.step += chunk
            remaining -= chunk
        state.rng_state = rng.bit_generator.state
        ckpt_mod.save(state, out / "model.ckpt")
        if remaining == 0:
            break
    _write_loss_csv(out / "loss.csv", rows)
    print(f"trained {cfg.steps} steps -> {out / 'model.ckpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    state = ckpt_mod.load(args.checkpoint)
    cfg = state.config
    if args.out is not None:
        cfg.out_dir = args.out
    out = _ensure_outdir(cfg)
    partition = make_two_domain_dataset(
        ToyDatasetSpec(n_x=cfg.n_x, n_y=cfg.n_y, n_b=cfg.n_b))
    seed = cfg.seed if args.seed is None else args.seed
    rows = []
    if args.which == "chi2":
        res = evaluation.cross_domain_chi2(state.scene, partition,
                                           cfg.image_size, seed=seed)
        rows.append(["chi2_color", "toy", cfg.setting,
                     f"{res.mean_color_chi2:.12g}", "", seed])
        if res.mean_texton_chi2 is not None:
            rows.append(["chi2_texton", "toy", cfg.setting,
                         f"{res.mean_texton_chi2:.12g}", "", seed])
        else:
            print(f"note: image_size {cfg.image_size} < MR8 support; "
                  f"texton histograms skipped")
    elif args.which == "iou":
        scores = evaluation.shape_iou(state.scene, partition, cfg.image_size,
                                      seed=seed)
        means = [s.mean for s in scores.values()]
        for x, s in scores.items():
            rows.append([f"iou_shape_{x}", "toy", cfg.setting,
                         f"{s.mean:.12g}", f"{s.std:.12g}", seed])
        rows.append(["iou_mean", "toy", cfg.setting,
                     f"{float(np.mean(means)):.12g}",
                     f"{float(np.std(means)):.12g}", seed])
    elif args.which == "resistivity":
        rep = evaluation.resistivity(state.scene, partition, cfg.image_size,
                                     seed=seed)
        for x, heat in rep.heatmaps.items():
            scaled = imageio.to_uint8(heat / 0.5)
            imageio.write_gray_png(out / f"resistivity_heatmap_x{x}.png", scaled)
        with open(out / "resistivity_hist.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count"])
            for left, right, count in zip(rep.bin_edges[:-1], rep.bin_edges[1:],
                                          rep.histogram):
                w.writerow([f"{left:.12g}", f"{right:.12g}", int(count)])
        rows.append(["resistivity_mean_std", "toy", cfg.setting,
                     f"{float(np.concatenate([h.reshape(-1) for h in rep.heatmaps.values()]).mean()):.12g}",
                     "", seed])
    elif args.which == "retrieval":
        rng = np.random.default_rng(seed)
        acc = evaluation.retrieval_accuracy(
            state.bank, state.scene, partition, cfg.image_size,
            n_batches=4, batch_size=min(cfg.batch_size, cfg.n_y),
            rng=rng, tau=cfg.tau)
        rows.append(["retrieval_top1", "toy", cfg.setting, f"{acc:.12g}", "", seed])
    with open(out / f"metrics_{args.which}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "dataset", "setting", "value", "std", "seed"])
        w.writerows(rows)
    for r in rows:
        print(f"{r[0]} = {r[3]}")
    return EXIT_OK


def cmd_render_grid(args) -> int:
    state = ckpt_mod.load(args.checkpoint)
    cfg = state.config
    if args.out is not None:
        cfg.out_dir = args.out
    out = _ensure_outdir(cfg)
    partition = make_two_domain_dataset(
        ToyDatasetSpec(n_x=cfg.n_x, n_y=cfg.n_y, n_b=cfg.n_b))
    z0, b0 = (0.0, 0.0), 0
    tiles = []
    for y in range(partition.n_y):
        for x in range(partition.n_x):
            if not args.hybrid and partition.is_hybrid(x, y):
                code = LatentCode(x=partition.parent_x(y), y=y, b=b0, z=z0)
            else:
                code = LatentCode(x=x, y=y, b=b0, z=z0)
            img = render(code, state.scene, cfg.image_size, cfg.image_size).image.data
            tiles.append(imageio.to_uint8(imageio.chw_to_hwc(img)))
    sheet = imageio.tile_grid(tiles, rows=partition.n_y, cols=partition.n_x)
    stem = "grid_hybrid" if args.hybrid else "grid"
    imageio.write_ppm(out / f"{stem}.ppm", sheet)
    imageio.write_png(out / f"{stem}.png", sheet)
    print(f"wrote {out / (stem + '.ppm')} and {out / (stem + '.png')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="histdis",
                                description="toy shape/appearance disentanglement harness")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--config", type=str, default=None, help="JSON config path")
        sp.add_argument("--seed", type=int, default=None, help="root seed override")
        sp.add_argument("--out", type=str, default=None, help="output directory")
        if checkpoint:
            sp.add_argument("--checkpoint", type=str, required=True)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every op")
    common(sp)
    sp.add_argument("--corrupt-hook", action="store_true",
                    help="deliberately corrupt one gradient (negative control)")
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("train", help="run the contrastive training schedule")
    common(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluation metrics over a checkpoint")
    common(sp, checkpoint=True)
    sp.add_argument("--which", choices=["chi2", "iou", "resistivity", "retrieval"],
                    required=True)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("render-grid", help="appearance x shape grid sheet")
    common(sp, checkpoint=True)
    sp.add_argument("--hybrid", action="store_true",
                    help="render cross-domain tiles instead of in-distribution ones")
    sp.set_defaults(fn=cmd_render_grid)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointFormatError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
