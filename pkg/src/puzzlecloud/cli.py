"""Command-line entry point: ``puzzlecloud {train,eval,sweep,puzzle-viz,gen-data}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import datagen
from .config import DataSource, GeneratorSpec, load_config
from .errors import ConfigError, PuzzleCloudError
from .experiment import Checkpoint, load_source, remap_classes, run_experiment, run_sweep
from .model import predict_labels
from .pointcloud import read_ply_points, write_ply_colored
from .puzzle import PuzzleConfig, apply_puzzle, puzzle_accuracy
from .training import evaluate

log = logging.getLogger("puzzlecloud")


def _load(args):
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def cmd_train(args):
    cfg = _load(args)
    res = run_experiment(cfg)
    print(json.dumps(res["report"], indent=1, sort_keys=True))
    return 0


def _dataset_arg(value):
    """A dataset directory / manifest path, or an inline or file JSON generator spec."""
    path = Path(value)
    if path.is_dir() or path.name == datagen.MANIFEST:
        return load_source(DataSource(path=str(path)))
    text = path.read_text() if path.is_file() else value
    try:
        spec = json.loads(text)
    except json.JSONDecodeError:
        raise ConfigError(f"{value!r} is neither a dataset directory nor a JSON generator spec") from None
    if "generator" in spec:
        spec = spec["generator"]
    return load_source(DataSource(generator=GeneratorSpec(**spec)))


def cmd_eval(args):
    ckpt = Checkpoint.load(args.checkpoint)
    dataset = _dataset_arg(args.data)
    task = ckpt.model.config.task
    if ckpt.config.data.class_map:
        dataset = remap_classes(dataset, ckpt.class_names, ckpt.config.data.class_map)
    elif list(dataset.class_names) != list(ckpt.class_names):
        raise ConfigError(f"label space mismatch: checkpoint classes {ckpt.class_names} "
                          f"vs dataset classes {list(dataset.class_names)}")
    if task == "segmentation" and dataset.num_parts != ckpt.num_parts:
        raise ConfigError(f"part label space mismatch: {dataset.num_parts} vs {ckpt.num_parts}")
    report = evaluate(ckpt.model, dataset, task)
    text = json.dumps(report, indent=1, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(text)
    return 0


def cmd_sweep(args):
    cfg = _load(args)
    text = run_sweep(cfg, workers=args.workers)
    print(text, end="")
    return 0


def cmd_puzzle_viz(args):
    ckpt = Checkpoint.load(args.checkpoint)
    if not ckpt.model.with_puzzle:
        raise ConfigError("checkpoint has no puzzle head")
    l = ckpt.puzzle_l if args.l is None else args.l
    if l != ckpt.puzzle_l:
        raise ConfigError(f"checkpoint was trained with l={ckpt.puzzle_l}, requested l={l}")
    cloud = read_ply_points(args.sample)
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    sample = apply_puzzle(cloud, PuzzleConfig(l), rng)
    logits = ckpt.model.puzzle_forward(sample.shuffled_points[None], training=False)
    pred = predict_labels(logits)[0]
    acc = puzzle_accuracy(pred, sample.voxel_labels)
    out = Path(args.out or "puzzle_viz")
    out.mkdir(parents=True, exist_ok=True)
    shuffled = cloud.with_points(sample.shuffled_points)
    write_ply_colored(out / "ground_truth.ply", shuffled, sample.voxel_labels)
    write_ply_colored(out / "prediction.ply", shuffled, pred)
    write_ply_colored(out / "disagreement.ply", shuffled, (pred != sample.voxel_labels).astype(np.int64))
    summary = {"puzzle_accuracy": acc, "l": l, "points": int(len(pred)), "chance": 1.0 / l ** 3}
    (out / "puzzle_viz.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    print(f"puzzle accuracy {acc:.4f} (chance {1.0 / l ** 3:.4f})")
    return 0


def cmd_gen_data(args):
    spec = GeneratorSpec()
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        spec = GeneratorSpec(**doc.get("generator", doc))
    overrides = {k: v for k, v in (("recipes", args.recipes), ("samples_per_class", args.samples_per_class),
                                   ("k_points", args.k_points), ("profile", args.profile),
                                   ("seed", args.seed)) if v is not None}
    spec = replace(spec, **overrides)
    dataset = load_source(DataSource(generator=spec))
    out = Path(args.out or "data")
    manifest = datagen.save_dataset(dataset, out)
    print(f"wrote {len(dataset)} samples to {manifest}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="puzzlecloud", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment JSON config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        return p

    common(sub.add_parser("train", help="train one experiment")).set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval", help="evaluate a checkpoint"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory or JSON generator spec")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("sweep", help="alpha x l ablation grid"))
    p.add_argument("--workers", type=int, help="parallel runs (default: $PUZZLECLOUD_THREADS or 1)")
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("puzzle-viz", help="colour a puzzled sample by true and predicted voxels"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", required=True, help="ASCII PLY point file")
    p.add_argument("--l", type=int, help="must match the checkpoint's l")
    p.set_defaults(func=cmd_puzzle_viz)

    p = common(sub.add_parser("gen-data", help="write a generated dataset as PLY + manifest"))
    p.add_argument("--recipes", type=int, help="number of built-in recipes (classes)")
    p.add_argument("--samples-per-class", type=int)
    p.add_argument("--k-points", type=int)
    p.add_argument("--profile", choices=sorted(datagen.PROFILES))
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PuzzleCloudError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
