"""Joint main-task + puzzle training.

Two independent random streams drive a run: the *main* stream (batch order,
main-sample augmentation, dropout) and the *puzzle* stream (puzzle-batch
cycling, puzzle-sample augmentation, voxel permutations). Keeping them apart
means a run with ``alpha == 0`` follows exactly the same parameter trajectory
as a model that has no puzzle head at all.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .metrics import ConfusionTally, category_miou, per_part_accuracy, shape_miou
from .model import TASKS, predict_labels
from .numerics import add, adam, optimizer_step, reshape, scale, sgd_momentum, softmax_cross_entropy
from .pointcloud import Dataset, jitter, random_rotate_y
from .puzzle import PuzzleConfig, apply_puzzle, puzzle_accuracy, puzzle_batch

# name -> (optimizer factory, base lr, decay factor)
OPTIMIZERS = {
    "adam": (adam, 0.001, 4.0),
    "sgd": (sgd_momentum, 0.01, 2.0),
    "adam_seg": (adam, 0.001, 2.0),
}


@dataclass
class TrainConfig:
    alpha: float = 0.6
    puzzle_l: int = 3
    batch_size: int = 64
    epochs: int = 60
    optimizer: str = "adam"
    decay_every: int = 20
    seed: int = 0
    task: str = "classification"
    augment_jitter: bool = True
    augment_rotate: bool = True
    jitter_sigma: float = 0.01
    jitter_clip: float = 0.05

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.batch_size < 1 or self.epochs < 1 or self.decay_every < 1:
            raise ConfigError("batch_size, epochs and decay_every must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {sorted(OPTIMIZERS)}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        PuzzleConfig(self.puzzle_l)

    @property
    def puzzle(self):
        return PuzzleConfig(self.puzzle_l)

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    main_loss: float
    puzzle_loss: float
    total_loss: float
    main_metric: float
    puzzle_accuracy: float

    CSV_COLUMNS = ("epoch", "lr", "main_loss", "puzzle_loss", "total_loss", "train_metric", "puzzle_acc")

    def csv_row(self):
        return [str(self.epoch)] + [repr(float(v)) for v in (
            self.lr, self.main_loss, self.puzzle_loss, self.total_loss, self.main_metric, self.puzzle_accuracy)]


def lr_at_epoch(config, epoch):
    """Step schedule: ``base / factor ** (epoch // decay_every)``."""
    if epoch < 0:
        raise ConfigError("epoch must be >= 0")
    _, base, factor = OPTIMIZERS[config.optimizer]
    return base / factor ** (epoch // config.decay_every)


def make_optimizer(config):
    factory, base, _ = OPTIMIZERS[config.optimizer]
    return factory(base)


def joint_loss(main_logits, main_targets, puzzle_logits, puzzle_targets, alpha):
    """``(total, L_main, L_puzzle)`` with ``total = L_main + alpha * L_puzzle``.

    Per-point logits of shape (B, K, n) are averaged over all B*K points. With
    ``alpha == 0`` the total is ``L_main`` itself, so the backward pass never
    enters the puzzle branch. ``puzzle_logits`` may be ``None``.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    l_main = _cross_entropy(main_logits, main_targets)
    if puzzle_logits is None:
        if alpha > 0:
            raise ConfigError("alpha > 0 needs puzzle logits")
        return l_main, l_main, None
    l_puzzle = _cross_entropy(puzzle_logits, puzzle_targets)
    total = add(l_main, scale(l_puzzle, alpha)) if alpha > 0 else l_main
    return total, l_main, l_puzzle


def _cross_entropy(logits, targets):
    targets = np.asarray(targets)
    if logits.data.ndim == 3:
        b, k, n = logits.shape
        return softmax_cross_entropy(reshape(logits, (b * k, n)), targets.reshape(-1))
    return softmax_cross_entropy(logits, targets)


def stack_points(clouds):
    ks = {c.points.shape[0] for c in clouds}
    if len(ks) != 1:
        raise DimensionError(f"clouds in a batch must share K, got sizes {sorted(ks)}")
    return np.stack([c.points for c in clouds])


class CyclingStream:
    """Endless shuffled iterator over a list, reshuffled on every pass."""

    def __init__(self, items, rng):
        self.items = list(items)
        if not self.items:
            raise ConfigError("puzzle stream is empty")
        self.rng = rng
        self.order = rng.permutation(len(self.items))
        self.pos = 0

    def take(self, n):
        out = []
        while len(out) < n:
            if self.pos == len(self.order):
                self.order = self.rng.permutation(len(self.items))
                self.pos = 0
            out.append(self.items[self.order[self.pos]])
            self.pos += 1
        return out


class Trainer:
    """Owns the optimizer, the random streams and the epoch counter of one run."""

    def __init__(self, model, config, main_stream, puzzle_stream=None, dataset_info=None):
        if model.config.task != config.task:
            raise ConfigError(f"model task {model.config.task!r} != train task {config.task!r}")
        samples = main_stream.samples if isinstance(main_stream, Dataset) else list(main_stream)
        if not samples:
            raise ConfigError("main stream is empty")
        if model.with_puzzle and model.config.num_voxels != config.puzzle.num_voxels:
            raise ConfigError("model puzzle head size does not match puzzle_l")
        self.model = model
        self.config = config
        self.main = samples
        self.dataset_info = dataset_info if dataset_info is not None else (
            main_stream if isinstance(main_stream, Dataset) else None)
        main_seq, puzzle_seq = np.random.SeedSequence(config.seed).spawn(2)
        self.main_rng = np.random.default_rng(main_seq)
        self.puzzle_rng = np.random.default_rng(puzzle_seq)
        self.use_puzzle = model.with_puzzle and bool(puzzle_stream)
        if config.alpha > 0 and not self.use_puzzle:
            raise ConfigError("alpha > 0 needs a puzzle head and a non-empty puzzle stream")
        self.puzzle_stream = CyclingStream(puzzle_stream, self.puzzle_rng) if self.use_puzzle else None
        self.optimizer = make_optimizer(config)
        self.epoch = 0

    def _augment(self, clouds, rng):
        cfg = self.config
        out = []
        for c in clouds:
            if cfg.augment_rotate:
                c = random_rotate_y(c, rng)
            if cfg.augment_jitter:
                c = jitter(c, cfg.jitter_sigma, cfg.jitter_clip, rng)
            out.append(c)
        return out

    def _main_targets(self, clouds):
        if self.config.task == "classification":
            labels = [c.class_label for c in clouds]
            if any(v is None for v in labels):
                raise ConfigError("classification sample without a class label")
            return np.array(labels, dtype=np.int64)
        parts = [c.part_labels for c in clouds]
        if any(p is None for p in parts):
            raise ConfigError("segmentation sample without part labels")
        return np.stack(parts)

    def train_step(self, batch, lr):
        """One optimizer step on ``batch``; returns per-batch scalars."""
        cfg, model = self.config, self.model
        targets = self._main_targets(batch)
        points = stack_points(self._augment(batch, self.main_rng))
        main_logits = model.main_forward(points, training=True, rng=self.main_rng)

        puzzle_logits = puzzle_targets = None
        if self.use_puzzle:
            pclouds = self._augment(self.puzzle_stream.take(len(batch)), self.puzzle_rng)
            ppoints, puzzle_targets = puzzle_batch(pclouds, cfg.puzzle, self.puzzle_rng)
            # alpha == 0: report the puzzle loss without touching running statistics
            puzzle_logits = model.puzzle_forward(ppoints, training=cfg.alpha > 0)

        total, l_main, l_puzzle = joint_loss(main_logits, targets, puzzle_logits, puzzle_targets, cfg.alpha)
        model.params.zero_grad()
        total.backward()
        model.params.fill_missing_grads()
        optimizer_step(model.params, self.optimizer, lr)

        pred = predict_labels(main_logits)
        out = {
            "n": len(batch),
            "main_loss": float(l_main.data),
            "total_loss": float(total.data),
            "puzzle_loss": float(l_puzzle.data) if l_puzzle is not None else float("nan"),
            "main_correct": 0.0,
            "main_count": 0,
            "puzzle_correct": 0,
            "puzzle_count": 0,
        }
        if cfg.task == "classification":
            out["main_correct"] = float(np.count_nonzero(pred == targets))
            out["main_count"] = len(batch)
        else:
            classes = [c.class_label for c in batch]
            out["main_correct"] = float(sum(self._shape_miou(p, t, c) for p, t, c in zip(pred, targets, classes)))
            out["main_count"] = len(batch)
        if puzzle_logits is not None:
            ppred = predict_labels(puzzle_logits)
            out["puzzle_correct"] = int(np.count_nonzero(ppred == puzzle_targets))
            out["puzzle_count"] = int(puzzle_targets.size)
        return out

    def _shape_miou(self, pred, truth, class_label):
        parts = None
        if self.dataset_info is not None and class_label is not None:
            parts = self.dataset_info.category_parts.get(class_label)
        if not parts:
            parts = sorted(set(np.unique(truth).tolist()))
        return shape_miou(pred, truth, parts)

    def train_epoch(self):
        cfg = self.config
        lr = lr_at_epoch(cfg, self.epoch)
        order = self.main_rng.permutation(len(self.main))
        sums = {"n": 0, "main_loss": 0.0, "puzzle_loss": 0.0, "total_loss": 0.0,
                "main_correct": 0.0, "main_count": 0, "puzzle_correct": 0, "puzzle_count": 0}
        for start in range(0, len(order), cfg.batch_size):
            batch = [self.main[i] for i in order[start:start + cfg.batch_size]]
            r = self.train_step(batch, lr)
            n = r["n"]
            sums["n"] += n
            for key in ("main_loss", "puzzle_loss", "total_loss"):
                sums[key] += r[key] * n
            for key in ("main_correct", "main_count", "puzzle_correct", "puzzle_count"):
                sums[key] += r[key]
        stats = EpochStats(
            epoch=self.epoch,
            lr=lr,
            main_loss=sums["main_loss"] / sums["n"],
            puzzle_loss=sums["puzzle_loss"] / sums["n"],
            total_loss=sums["total_loss"] / sums["n"],
            main_metric=sums["main_correct"] / sums["main_count"],
            puzzle_accuracy=(sums["puzzle_correct"] / sums["puzzle_count"]) if sums["puzzle_count"] else float("nan"),
        )
        self.epoch += 1
        return stats

    def fit(self, epochs=None, callback=None):
        history = []
        for _ in range(self.config.epochs if epochs is None else epochs):
            stats = self.train_epoch()
            history.append(stats)
            if callback is not None:
                callback(stats)
        return history

    # -- checkpoint support --------------------------------------------------

    def rng_state(self):
        return {
            "main": self.main_rng.bit_generator.state,
            "puzzle": self.puzzle_rng.bit_generator.state,
            "puzzle_order": None if self.puzzle_stream is None else self.puzzle_stream.order.tolist(),
            "puzzle_pos": None if self.puzzle_stream is None else self.puzzle_stream.pos,
        }

    def set_rng_state(self, state):
        self.main_rng.bit_generator.state = state["main"]
        self.puzzle_rng.bit_generator.state = state["puzzle"]
        if self.puzzle_stream is not None and state.get("puzzle_order") is not None:
            self.puzzle_stream.order = np.asarray(state["puzzle_order"], dtype=np.int64)
            self.puzzle_stream.pos = int(state["puzzle_pos"])


def train_epoch(trainer):
    """Functional alias for :meth:`Trainer.train_epoch`."""
    return trainer.train_epoch()


# -- evaluation ----------------------------------------------------------------

def _batches(items, size):
    for start in range(0, len(items), size):
        yield items[start:start + size]


def predict(model, clouds, batch_size=32):
    """Eval-mode main-task predictions for a list of clouds."""
    preds = []
    for batch in _batches(list(clouds), batch_size):
        logits = model.main_forward(stack_points(batch), training=False)
        preds.append(predict_labels(logits))
    return np.concatenate(preds, axis=0)


def evaluate(model, dataset, task=None, batch_size=32, part_names=None):
    """Eval-mode metrics: accuracy for classification, mIoU and per-part accuracy for segmentation."""
    task = task or model.config.task
    samples = list(dataset.samples)
    if not samples:
        raise ConfigError("cannot evaluate on an empty dataset")
    if task == "classification":
        if any(getattr(s, "class_label", None) is None for s in samples):
            raise ConfigError("evaluation set lacks class labels")
        truth = np.array([s.class_label for s in samples])
        pred = predict(model, samples, batch_size)
        tally = ConfusionTally.from_labels(pred, truth, max(model.config.num_classes, len(dataset.class_names)))
        per_class = tally.per_class_accuracy()
        return {
            "task": task,
            "n": len(samples),
            "accuracy": tally.accuracy(),
            "per_class_accuracy": {dataset.class_names[i]: (None if np.isnan(v) else float(v))
                                   for i, v in enumerate(per_class[:len(dataset.class_names)])},
        }
    if task != "segmentation":
        raise ConfigError(f"unknown task {task!r}")
    if any(getattr(s, "part_labels", None) is None for s in samples):
        raise ConfigError("evaluation set lacks part labels")
    pred = predict(model, samples, batch_size)
    mious, cats = [], []
    for p, s in zip(pred, samples):
        parts = dataset.category_parts.get(s.class_label) if s.class_label is not None else None
        if not parts:
            parts = sorted(set(np.unique(s.part_labels).tolist()) | set(np.unique(p).tolist()))
        mious.append(shape_miou(p, s.part_labels, parts))
        cats.append(dataset.class_names[s.class_label] if s.class_label is not None else "all")
    report = category_miou(mious, cats)
    truth = np.concatenate([s.part_labels for s in samples])
    flat = pred.reshape(-1)
    per_part, avg, overall = per_part_accuracy(flat, truth, part_names)
    return {
        "task": task,
        "n": len(samples),
        **report.to_dict(),
        "overall_accuracy": overall,
        "average_part_accuracy": avg,
        "per_part_accuracy": {str(k): v for k, v in per_part.items()},
    }


def evaluate_puzzle(model, clouds, l, seed=0, batch_size=32):
    """Per-point puzzle accuracy on freshly puzzled copies of ``clouds`` (eval mode)."""
    rng = np.random.default_rng(seed)
    cfg = PuzzleConfig(l)
    correct = total = 0
    for batch in _batches(list(clouds), batch_size):
        samples = [apply_puzzle(c, cfg, rng) for c in batch]
        pts = np.stack([s.shuffled_points for s in samples])
        labels = np.stack([s.voxel_labels for s in samples])
        pred = predict_labels(model.puzzle_forward(pts, training=False))
        correct += int(np.count_nonzero(pred == labels))
        total += labels.size
    return correct / total


__all__ = [
    "OPTIMIZERS", "TrainConfig", "EpochStats", "Trainer", "CyclingStream", "joint_loss", "lr_at_epoch",
    "make_optimizer", "train_epoch", "evaluate", "evaluate_puzzle", "predict", "stack_points",
    "puzzle_accuracy",
]
