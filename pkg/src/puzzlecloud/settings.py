"""Data-availability scenarios: which samples feed the main loss, which feed
the puzzle loss, and what the model is evaluated on.

=====  ==================  ====================================  ========
kind   main stream         puzzle stream                         eval
=====  ==================  ====================================  ========
SD     S_train             S_train                               S_test
FS     fraction of S_train same fraction                         S_test
SS     fraction            fraction + remainder (unlabelled)     S_test
TL     S_train             S' (optionally S_train + S')          S_test
DG     S_train             S_train                               T
DA     S_train             S_train + T (unlabelled)              T
=====  ==================  ====================================  ========

Puzzle streams always hold :class:`UnlabeledCloud` items.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DatasetError
from .pointcloud import Dataset

KINDS = ("SD", "FS", "SS", "TL", "DG", "DA")


@dataclass
class ScenarioSpec:
    kind: str
    train: Dataset
    test: Dataset | None = None
    extra_unlabeled: Dataset | None = None
    target: Dataset | None = None
    labeled_fraction: float = 1.0
    seed: int = 0
    tl_union: bool = False

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise ConfigError(f"labeled_fraction must be in (0, 1], got {self.labeled_fraction}")
        if self.kind in ("FS", "SS") and self.labeled_fraction >= 1.0:
            raise ConfigError(f"{self.kind} needs labeled_fraction < 1")
        if self.kind == "TL" and self.extra_unlabeled is None:
            raise ConfigError("TL needs an extra unlabelled dataset")
        if self.kind in ("DG", "DA") and self.target is None:
            raise ConfigError(f"{self.kind} needs a target dataset")
        if self.kind in ("SD", "FS", "SS", "TL") and self.test is None:
            raise ConfigError(f"{self.kind} needs a source test split")
        if self.test is not None:
            overlap = set(self.train.source_ids()) & set(self.test.source_ids())
            if overlap:
                raise DatasetError(f"train and test splits share {len(overlap)} sample(s)")


@dataclass
class ResolvedScenario:
    kind: str
    main_stream: Dataset
    puzzle_stream: list
    eval_set: Dataset


def stratified_subsample(dataset, fraction, seed):
    """Keep ``round(fraction * n_c)`` (at least 1) samples of every class.

    Returns ``(kept, remainder)`` as datasets; original order is preserved.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    by_class = {}
    for idx, s in enumerate(dataset.samples):
        by_class.setdefault(s.class_label, []).append(idx)
    for c in range(len(dataset.class_names)):
        if dataset.class_names and c not in by_class and None not in by_class:
            raise DatasetError(f"class {c} ({dataset.class_names[c]!r}) has no samples")
    rng = np.random.default_rng(seed)
    kept = []
    for c in sorted(by_class, key=lambda v: (v is None, v)):
        idx = by_class[c]
        n_keep = min(len(idx), max(1, int(round(fraction * len(idx)))))
        kept += [idx[j] for j in rng.permutation(len(idx))[:n_keep]]
    kept_set = set(kept)
    return (dataset.subset([dataset.samples[i] for i in sorted(kept_set)]),
            dataset.subset([s for i, s in enumerate(dataset.samples) if i not in kept_set]))


def _strip(*datasets):
    return [s.strip_labels() for d in datasets for s in d.samples]


def resolve(spec):
    """Build the three streams for ``spec`` (pure function of the spec and its seed)."""
    spec.validate()
    kind = spec.kind
    if kind in ("FS", "SS"):
        kept, remainder = stratified_subsample(spec.train, spec.labeled_fraction, spec.seed)
        main = kept
        puzzle = _strip(kept) if kind == "FS" else _strip(kept, remainder)
        eval_set = spec.test
    elif kind == "SD":
        main, puzzle, eval_set = spec.train, _strip(spec.train), spec.test
    elif kind == "TL":
        main = spec.train
        puzzle = _strip(spec.train, spec.extra_unlabeled) if spec.tl_union else _strip(spec.extra_unlabeled)
        eval_set = spec.test
    elif kind == "DG":
        main, puzzle, eval_set = spec.train, _strip(spec.train), spec.target
    else:
        main, puzzle, eval_set = spec.train, _strip(spec.train, spec.target), spec.target
    overlap = set(main.source_ids()) & set(eval_set.source_ids())
    if overlap:
        raise DatasetError(f"evaluation set shares {len(overlap)} sample(s) with the main stream")
    return ResolvedScenario(kind, main, puzzle, eval_set)
