"""Command-line entry point: phantom generation, training, inference,
localization, evaluation, and the voxel-gap sweep.

Subcommands map to the pipeline stages: gen / train / predict / localize /
eval / sweep-d.  All randomness flows from the --seed flag of each command.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .localize import load_model, save_model
from .metrics import aggregate, format_table, save_report
from .network import build_network, load_network, paper_config, tiny_config
from .phantom import PhantomConfig, generate_dataset, write_dataset
from .pipeline import (
    evaluate_volume,
    fold_split,
    evaluate_fold,
    load_manifest,
    localize_mask,
    predict_volume,
    train_on_entries,
)
from .training import TrainConfig
from .volume import load_mask, load_volume, save_mask, save_volume


def _profile_config(profile: str, d: int):
    if profile == "tiny":
        return tiny_config(gap_d=d)
    if profile == "paper_faithful":
        return paper_config(gap_d=d)
    raise ValueError(f"unknown profile {profile!r}")


def cmd_gen(args) -> int:
    if os.path.isdir(args.out) and os.listdir(args.out) and not args.force:
        raise ValueError(f"output directory {args.out!r} is not empty (use --force)")
    cfg = PhantomConfig(dims=(args.dims,) * 3)
    members = generate_dataset(args.n, base_seed=args.seed, config=cfg)
    manifest_path = write_dataset(args.out, members, k_folds=args.folds)
    print(f"wrote {args.n} phantoms and {manifest_path}")
    return 0


def cmd_train(args) -> int:
    entries, folds = load_manifest(args.manifest)
    train_set, _ = fold_split(entries, folds, args.fold)
    config = _profile_config(args.profile, args.d)
    net = build_network(config, seed=args.seed)
    tcfg = TrainConfig(
        lr=args.lr,
        epochs=args.epochs,
        batch=args.batch,
        seed=args.seed,
        d=args.d,
        patch_size=args.patch_size,
        mode=args.mode,
        max_steps=args.steps,
    )
    net, trace = train_on_entries(net, train_set, tcfg)
    net.save(args.out)
    with open(args.out + ".loss.json", "w") as f:
        json.dump(trace, f)
    last = trace[-1] if trace else None
    print(f"trained {len(trace)} steps, final loss {last}; weights -> {args.out}.json")
    return 0


def cmd_predict(args) -> int:
    net = load_network(args.weights)
    vol = load_volume(args.volume)
    prob, mask = predict_volume(
        net,
        vol,
        mode=args.mode,
        d=args.d,
        n=args.n,
        m=args.m,
        axis=args.axis,
        seed=args.seed,
        threshold=args.threshold,
    )
    save_volume(prob, args.out + "_prob")
    save_mask(mask, args.out + "_mask", spacing_mm=vol.spacing_mm)
    print(f"wrote {args.out}_prob.raw and {args.out}_mask.raw")
    return 0


def cmd_localize(args) -> int:
    mask = load_mask(args.mask)
    model = localize_mask(mask, inlier_thresh_vox=args.thresh, iters=args.iters, seed=args.seed)
    save_model(model, args.out, inlier_thresh_vox=args.thresh, seed=args.seed)
    print(f"fitted model with {model.score} inliers -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    entries, folds = load_manifest(args.manifest)
    if args.fold is not None:
        _, entries = fold_split(entries, folds, args.fold)
    rows = []
    for e in entries:
        pred_path = os.path.join(args.pred_dir, e.name + "_pred_mask")
        pred_mask = load_mask(pred_path)
        model = None
        if args.model_dir is not None:
            model_path = os.path.join(args.model_dir, e.name + "_model.json")
            if os.path.exists(model_path):
                model = load_model(model_path)
        rows.append(
            (
                e.name,
                evaluate_volume(
                    pred_mask, e.mask, e.spacing_mm, model=model, truth_skeleton=e.skeleton
                ),
            )
        )
    agg = aggregate([r for _, r in rows])
    print(format_table(rows, agg))
    if args.out:
        save_report(rows, agg, args.out)
    return 0


def cmd_sweep_d(args) -> int:
    entries, folds = load_manifest(args.manifest)
    train_set, test_set = fold_split(entries, folds, args.fold)
    if args.eval_limit is not None:
        test_set = test_set[: args.eval_limit]
    d_values = [int(v) for v in args.d_values.split(",")]
    modes = args.modes.split(",")
    results = []
    for mode in modes:
        for d in d_values:
            config = _profile_config(args.profile, d)
            net = build_network(config, seed=args.seed)
            tcfg = TrainConfig(
                lr=args.lr,
                epochs=args.epochs,
                batch=args.batch,
                seed=args.seed,
                d=d,
                patch_size=args.patch_size,
                mode=mode,
                max_steps=args.steps,
            )
            net, _ = train_on_entries(net, train_set, tcfg)
            reports = evaluate_fold(net, test_set, mode=mode, d=d, n=args.n, m=args.m, seed=args.seed)
            mean_dice = float(np.mean([r.dice for r in reports]))
            results.append({"mode": mode, "d": d, "mean_dice": mean_dice})
            print(f"mode={mode} d={d} mean Dice {mean_dice:.3f}")
    with open(args.out, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["mode", "d", "mean_dice"])
        writer.writeheader()
        writer.writerows(results)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic phantom dataset")
    p.add_argument("--n", type=int, default=25, help="number of phantoms (default 25)")
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("--dims", type=int, default=64, help="cubic volume size (default 64)")
    p.add_argument("--folds", type=int, default=3, help="cross-validation folds (default 3)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="allow non-empty output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train on one fold's training split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, default=0, help="held-out fold (default 0)")
    p.add_argument("--profile", default="tiny", choices=["tiny", "paper_faithful"])
    p.add_argument("--d", type=int, default=3, help="voxel gap (default 3)")
    p.add_argument("--mode", default="df", choices=["df", "single_axis"])
    p.add_argument("--lr", type=float, default=1e-3, help="learning rate (default 1e-3 for tiny)")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--steps", type=int, default=None, help="cap on optimizer steps")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--patch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output weight manifest base path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="segment a volume with trained weights")
    p.add_argument("--weights", required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--mode", default="df", choices=["df", "single_axis"])
    p.add_argument("--axis", default=None, choices=["X", "Y", "Z"])
    p.add_argument("--d", type=int, default=None, help="voxel gap (default: from weights)")
    p.add_argument("--n", type=int, default=32, help="core patch size (default 32)")
    p.add_argument("--m", type=int, default=48, help="enlarged patch size (default 48)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None, help="seed for random single-axis choice")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("localize", help="fit a catheter model to a segmentation mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--thresh", type=float, default=3.0, help="inlier threshold, voxels (default 3)")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output model JSON")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", help="metric report over predicted masks/models")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir", required=True, help="directory of <name>_pred_mask files")
    p.add_argument("--model-dir", default=None, help="directory of <name>_model.json files")
    p.add_argument("--fold", type=int, default=None, help="restrict to one held-out fold")
    p.add_argument("--out", default=None, help="output report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-d", help="Dice-vs-voxel-gap sweep per mode")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--profile", default="tiny", choices=["tiny", "paper_faithful"])
    p.add_argument("--d-values", default="0,1,2,3,4,5")
    p.add_argument("--modes", default="df,single_axis")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--patch-size", type=int, default=16)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--m", type=int, default=48)
    p.add_argument("--eval-limit", type=int, default=None, help="cap held-out volumes evaluated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_sweep_d)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
