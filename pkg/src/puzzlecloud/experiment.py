"""Glue between a config document and the library: data, model, run, checkpoint."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import datagen
from .config import SCHEMA_VERSION, DataSource, ExperimentConfig
from .errors import ConfigError, DatasetError, PuzzleCloudError
from .model import EncoderConfig, PuzzleNet
from .numerics import OptimizerState
from .pointcloud import Dataset, PointCloud
from .puzzle import PuzzleConfig
from .settings import ScenarioSpec, resolve
from .training import EpochStats, TrainConfig, Trainer, evaluate, evaluate_puzzle

log = logging.getLogger(__name__)


# -- data ------------------------------------------------------------------------

def load_source(source: DataSource) -> Dataset:
    if source.path is not None:
        path = Path(source.path)
        if not path.exists():
            raise DatasetError(f"dataset path {path} does not exist")
        return datagen.load_dataset(path)
    g = source.generator
    return datagen.generate_dataset(g.recipes, g.samples_per_class, g.k_points, g.profile, g.seed)


def remap_classes(dataset, class_names, class_map=None):
    """Express ``dataset`` in the label space ``class_names``.

    ``class_map`` maps the dataset's class names to names in ``class_names``;
    without it names must match one to one. Samples whose class has no
    counterpart are dropped.
    """
    if list(dataset.class_names) == list(class_names) and not class_map:
        return dataset
    index = {n: i for i, n in enumerate(class_names)}
    mapping = {}
    for i, name in enumerate(dataset.class_names):
        dest = class_map.get(name) if class_map else name
        if dest is not None and dest in index:
            mapping[i] = index[dest]
    if not mapping:
        raise DatasetError("no class of the dataset maps into the model's label space")
    samples = [PointCloud(s.points, mapping[s.class_label], s.part_labels, s.source_id)
               for s in dataset.samples if s.class_label in mapping]
    cat_parts = {mapping[c]: p for c, p in dataset.category_parts.items() if c in mapping}
    return Dataset(samples, list(class_names), dataset.num_parts, cat_parts, dataset.name)


def build_scenario(cfg: ExperimentConfig):
    source = load_source(cfg.data.source)
    kind = cfg.scenario.kind
    needs_test = kind in ("SD", "FS", "SS", "TL")
    if needs_test:
        train, test = datagen.split(source, cfg.scenario.test_fraction, cfg.seed)
    else:
        train, test = source, None
    extra = load_source(cfg.data.extra_unlabeled) if cfg.data.extra_unlabeled else None
    target = None
    if cfg.data.target is not None:
        target = remap_classes(load_source(cfg.data.target), train.class_names, cfg.data.class_map)
    spec = ScenarioSpec(kind, train, test, extra, target, cfg.scenario.labeled_fraction, cfg.seed,
                        cfg.scenario.tl_union)
    return resolve(spec)


# -- model -----------------------------------------------------------------------

def encoder_config(cfg: ExperimentConfig, dataset: Dataset, l=None):
    l = cfg.train.puzzle_l if l is None else l
    return EncoderConfig(
        num_classes=max(2, len(dataset.class_names)),
        num_parts=dataset.num_parts if cfg.task == "segmentation" else None,
        num_voxels=PuzzleConfig(l).num_voxels,
        task=cfg.task,
        **asdict(cfg.model),
    )


def train_config(cfg: ExperimentConfig, alpha=None, l=None, seed=None):
    t = asdict(cfg.train)
    if alpha is not None:
        t["alpha"] = alpha
    if l is not None:
        t["puzzle_l"] = l
    return TrainConfig(seed=cfg.seed if seed is None else seed, task=cfg.task, **t)


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(path, cfg, model, trainer, dataset):
    state = model.state_dict()
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "epoch": trainer.epoch,
        "encoder": model.config.to_dict(),
        "with_puzzle": model.with_puzzle,
        "model_seed": model.seed,
        "puzzle_l": trainer.config.puzzle_l,
        "class_names": list(dataset.class_names),
        "num_parts": dataset.num_parts,
        "category_parts": {str(k): v for k, v in dataset.category_parts.items()},
        "parameters": [{"name": n, "group": model.params[n].group, "shape": list(v.shape),
                        "data": v.ravel().tolist()} for n, v in state["params"].items()],
        "buffers": {k: {n: v.tolist() for n, v in b.items()} for k, b in state["buffers"].items()},
        "optimizer": trainer.optimizer.to_dict(),
        "rng": trainer.rng_state(),
    }
    Path(path).write_text(json.dumps(doc))


class Checkpoint:
    """A loaded checkpoint: model plus the metadata needed to evaluate it."""

    def __init__(self, doc):
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"checkpoint schema_version {doc.get('schema_version')!r} unsupported")
        self.doc = doc
        self.config = ExperimentConfig.from_dict(doc["config"])
        self.model = PuzzleNet(EncoderConfig(**doc["encoder"]), seed=doc["model_seed"],
                               with_puzzle=doc["with_puzzle"])
        params = {p["name"]: np.asarray(p["data"], dtype=np.float64).reshape(p["shape"]) for p in doc["parameters"]}
        self.model.load_state_dict({"params": params, "buffers": doc.get("buffers", {})})
        self.epoch = doc["epoch"]
        self.puzzle_l = doc["puzzle_l"]
        self.class_names = doc["class_names"]
        self.num_parts = doc["num_parts"]
        self.category_parts = {int(k): v for k, v in doc["category_parts"].items()}

    @classmethod
    def load(cls, path):
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read checkpoint {path}: {exc}") from None
        return cls(doc)

    def optimizer_state(self):
        return OptimizerState.from_dict(self.doc["optimizer"], self.model.params)


# -- runs ------------------------------------------------------------------------

def stats_csv(history):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EpochStats.CSV_COLUMNS)
    for s in history:
        w.writerow(s.csv_row())
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, out_dir=None, alpha=None, l=None, seed=None, write=True):
    """Resolve the scenario, train, evaluate. Returns a summary dict."""
    seed = cfg.seed if seed is None else seed
    run_cfg = replace(cfg, seed=seed)
    scenario = build_scenario(run_cfg)
    tcfg = train_config(run_cfg, alpha, l, seed)
    model = PuzzleNet(encoder_config(run_cfg, scenario.main_stream, tcfg.puzzle_l), seed=seed)
    trainer = Trainer(model, tcfg, scenario.main_stream, scenario.puzzle_stream)
    out = Path(out_dir or cfg.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "metrics.csv"
        csv_path.write_text(",".join(EpochStats.CSV_COLUMNS) + "\n")

    def on_epoch(stats):
        log.info("epoch %d lr=%.6g main=%.4f puzzle=%.4f total=%.4f metric=%.4f puzzle_acc=%.4f",
                 stats.epoch, stats.lr, stats.main_loss, stats.puzzle_loss, stats.total_loss,
                 stats.main_metric, stats.puzzle_accuracy)
        if write:
            with open(csv_path, "a", newline="") as fh:
                fh.write(",".join(stats.csv_row()) + "\n")

    history = trainer.fit(callback=on_epoch)
    report = evaluate(model, scenario.eval_set, cfg.task)
    report["scenario"] = scenario.kind
    report["alpha"] = tcfg.alpha
    report["puzzle_l"] = tcfg.puzzle_l
    report["seed"] = seed
    report["eval_puzzle_accuracy"] = evaluate_puzzle(model, scenario.eval_set.samples, tcfg.puzzle_l, seed=seed)
    if write:
        save_checkpoint(out / "checkpoint.json", run_cfg, model, trainer, scenario.main_stream)
        (out / "eval.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    return {"history": history, "report": report, "model": model, "trainer": trainer, "scenario": scenario}


def main_metric(report):
    return report["accuracy"] if report["task"] == "classification" else report["instance_miou"]


# -- sweep -----------------------------------------------------------------------

def sweep_cells(cfg: ExperimentConfig):
    alphas = [float(a) for a in cfg.sweep.alphas]
    if cfg.sweep.include_baseline and 0.0 not in alphas:
        alphas = [0.0] + alphas
    if cfg.sweep.repeats < 1:
        raise ConfigError("sweep.repeats must be >= 1")
    return [(a, int(l)) for a in alphas for l in cfg.sweep.ls]


def _run_cell(args):
    cfg_dict, alpha, l, seed, out_dir = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        res = run_experiment(cfg, out_dir=out_dir, alpha=alpha, l=l, seed=seed, write=True)
        return {"ok": True, "metric": main_metric(res["report"]),
                "puzzle_acc": res["history"][-1].puzzle_accuracy}
    except PuzzleCloudError as exc:
        return {"ok": False, "error": str(exc)}


SWEEP_COLUMNS = ("alpha", "l", "runs", "failures", "metric_mean", "metric_std", "puzzle_acc_mean", "puzzle_acc_std")


def _mean_std(values):
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0


def run_sweep(cfg: ExperimentConfig, out_dir=None, workers=None):
    """Run every (alpha, l) cell ``repeats`` times; returns the summary CSV text."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(cfg)
    jobs = []
    for alpha, l in cells:
        for r in range(cfg.sweep.repeats):
            run_dir = out / "runs" / f"alpha{alpha:g}_l{l}_r{r}"
            jobs.append((cfg.to_dict(), alpha, l, cfg.seed + r, str(run_dir)))
    if workers is None:
        workers = int(os.environ.get("PUZZLECLOUD_THREADS", "1") or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    per_cell = cfg.sweep.repeats
    for i, (alpha, l) in enumerate(cells):
        rs = results[i * per_cell:(i + 1) * per_cell]
        ok = [r for r in rs if r["ok"]]
        for r in rs:
            if not r["ok"]:
                log.error("cell alpha=%g l=%d failed: %s", alpha, l, r["error"])
        m_mean, m_std = _mean_std([r["metric"] for r in ok])
        p_mean, p_std = _mean_std([r["puzzle_acc"] for r in ok])
        w.writerow([repr(alpha), l, len(rs), len(rs) - len(ok)] + [repr(v) for v in (m_mean, m_std, p_mean, p_std)])
    text = buf.getvalue()
    (out / "sweep_summary.csv").write_text(text)
    return text
