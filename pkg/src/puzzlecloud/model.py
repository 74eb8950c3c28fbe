"""PointNet-style shared encoder with classification, segmentation and puzzle heads.

Parameter groups:

* ``feature``     shared per-point MLP (and, for segmentation, the first
                  per-point head layer shared by both per-point branches)
* ``main_head``   classification or segmentation head
* ``puzzle_head`` puzzle solver; absent when ``with_puzzle=False``
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .numerics import (
    ModelParams,
    Tensor,
    batch_standardize,
    concat_global,
    dropout,
    linear,
    max_over_points,
    relu,
)

TASKS = ("classification", "segmentation")


@dataclass
class EncoderConfig:
    num_classes: int = 2
    num_parts: int | None = None
    num_voxels: int = 27
    task: str = "classification"
    per_point_mlp_widths: list = field(default_factory=lambda: [64, 64, 64, 128, 1024])
    head_widths_classification: list = field(default_factory=lambda: [512, 256])
    head_widths_per_point: list = field(default_factory=lambda: [512, 256, 128])
    dropout_rate: float = 0.3
    local_feature_layer: int = 1
    batch_norm: bool = False
    use_tnet: bool = False

    def __post_init__(self):
        widths = (list(self.per_point_mlp_widths) + list(self.head_widths_classification)
                  + list(self.head_widths_per_point))
        if any(int(w) < 1 for w in widths) or not self.per_point_mlp_widths:
            raise ConfigError("all layer widths must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.task == "classification" and self.num_classes < 2:
            raise ConfigError("classification needs at least 2 classes")
        if self.task == "segmentation" and (self.num_parts is None or self.num_parts < 2):
            raise ConfigError("segmentation needs num_parts >= 2")
        if self.task == "segmentation" and not self.head_widths_per_point:
            raise ConfigError("segmentation shares the first per-point head layer; it cannot be empty")
        if not 0 <= self.local_feature_layer < len(self.per_point_mlp_widths):
            raise ConfigError("local_feature_layer must index a per-point MLP layer")
        if self.num_voxels < 8:
            raise ConfigError("num_voxels must be l**3 with l >= 2")
        if self.use_tnet:
            raise ConfigError("input/feature transform networks are not implemented")

    @property
    def local_width(self):
        return self.per_point_mlp_widths[self.local_feature_layer]

    @property
    def global_width(self):
        return self.per_point_mlp_widths[-1]

    def to_dict(self):
        return asdict(self)


class PuzzleNet:
    def __init__(self, config, seed=0, with_puzzle=True):
        self.config = config
        self.seed = int(seed)
        self.with_puzzle = with_puzzle
        self.params = ModelParams()
        self.buffers = {}
        self._build()

    # -- construction -----------------------------------------------------

    def _layer(self, prefix, din, dout, group, hidden=True):
        self.params.add_linear(prefix, din, dout, group, self.seed)
        if hidden and self.config.batch_norm:
            self.params.add(f"{prefix}.bn_scale", np.ones(dout), group)
            self.params.add(f"{prefix}.bn_shift", np.zeros(dout), group)
            self.buffers[prefix] = {"mean": np.zeros(dout), "var": np.ones(dout)}
        return prefix

    def _build(self):
        cfg = self.config
        din = 3
        self.encoder_layers = []
        for i, w in enumerate(cfg.per_point_mlp_widths):
            self.encoder_layers.append(self._layer(f"encoder.mlp{i}", din, w, "feature"))
            din = w
        per_point_in = cfg.local_width + cfg.global_width

        if cfg.task == "classification":
            self.main_layers = self._mlp("cls", cfg.global_width, cfg.head_widths_classification, "main_head")
            last = cfg.head_widths_classification[-1] if cfg.head_widths_classification else cfg.global_width
            self.main_out = self._layer("cls.out", last, cfg.num_classes, "main_head", hidden=False)
            self.shared_layers = []
            puzzle_in, puzzle_widths = per_point_in, cfg.head_widths_per_point
        else:
            first = cfg.head_widths_per_point[0]
            self.shared_layers = [self._layer("shared_head.fc0", per_point_in, first, "feature")]
            rest = cfg.head_widths_per_point[1:]
            self.main_layers = self._mlp("seg", first, rest, "main_head", start=1)
            self.main_out = self._layer("seg.out", rest[-1] if rest else first, cfg.num_parts, "main_head",
                                        hidden=False)
            puzzle_in, puzzle_widths = first, rest

        self.puzzle_layers, self.puzzle_out = [], None
        if self.with_puzzle:
            start = 0 if cfg.task == "classification" else 1
            self.puzzle_layers = self._mlp("puzzle", puzzle_in, puzzle_widths, "puzzle_head", start=start)
            last = puzzle_widths[-1] if puzzle_widths else puzzle_in
            self.puzzle_out = self._layer("puzzle.out", last, cfg.num_voxels, "puzzle_head", hidden=False)

    def _mlp(self, prefix, din, widths, group, start=0):
        names = []
        for i, w in enumerate(widths, start=start):
            names.append(self._layer(f"{prefix}.fc{i}", din, w, group))
            din = w
        return names

    # -- forward ----------------------------------------------------------

    def _apply(self, prefix, x, training):
        p = self.params
        y = linear(x, p[f"{prefix}.weight"].tensor, p[f"{prefix}.bias"].tensor)
        if prefix in self.buffers:
            y = batch_standardize(y, p[f"{prefix}.bn_scale"].tensor, p[f"{prefix}.bn_shift"].tensor,
                                  self.buffers[prefix], training)
        return y

    def _hidden(self, prefix, x, training):
        return relu(self._apply(prefix, x, training))

    def encode(self, points, training=False):
        """(B, K, 3) -> per-point local features (B, K, D_local), global feature (B, D_global)."""
        x = points if isinstance(points, Tensor) else Tensor(points)
        if x.data.ndim != 3 or x.data.shape[-1] != 3:
            raise ConfigError(f"encode expects (B, K, 3) input, got {x.shape}")
        local = None
        for i, name in enumerate(self.encoder_layers):
            x = self._hidden(name, x, training)
            if i == self.config.local_feature_layer:
                local = x
        glob, _ = max_over_points(x)
        return local, glob

    def classify(self, glob, training=False, rng=None):
        if self.config.task != "classification":
            raise ConfigError("classify() on a segmentation model")
        x = glob
        for i, name in enumerate(self.main_layers):
            x = self._hidden(name, x, training)
            if i == len(self.main_layers) - 1 and self.config.dropout_rate > 0:
                x = dropout(x, self.config.dropout_rate, training, rng)
        return self._apply(self.main_out, x, training)

    def _shared(self, local, glob, training):
        x = concat_global(local, glob)
        for name in self.shared_layers:
            x = self._hidden(name, x, training)
        return x

    def segment(self, local, glob, training=False, shared=None):
        """Per-point part logits (B, K, Q)."""
        if self.config.task != "segmentation":
            raise ConfigError("segment() on a classification model")
        x = self._shared(local, glob, training) if shared is None else shared
        for name in self.main_layers:
            x = self._hidden(name, x, training)
        return self._apply(self.main_out, x, training)

    def solve_puzzle(self, local, glob, training=False):
        """Per-point original-voxel logits (B, K, l**3)."""
        if not self.with_puzzle:
            raise ConfigError("model was built without a puzzle head")
        x = self._shared(local, glob, training)
        for name in self.puzzle_layers:
            x = self._hidden(name, x, training)
        return self._apply(self.puzzle_out, x, training)

    def main_forward(self, points, training=False, rng=None):
        """Main-task logits: (B, C) for classification, (B, K, Q) for segmentation."""
        local, glob = self.encode(points, training)
        if self.config.task == "classification":
            return self.classify(glob, training, rng)
        return self.segment(local, glob, training)

    def puzzle_forward(self, points, training=False):
        local, glob = self.encode(points, training)
        return self.solve_puzzle(local, glob, training)

    # -- state ------------------------------------------------------------

    def state_dict(self):
        return {
            "params": self.params.state_dict(),
            "buffers": {k: {n: v.copy() for n, v in b.items()} for k, b in self.buffers.items()},
        }

    def load_state_dict(self, state):
        self.params.load_state_dict(state["params"])
        for k, b in state.get("buffers", {}).items():
            if k not in self.buffers:
                raise ConfigError(f"unexpected buffer {k!r}")
            self.buffers[k] = {n: np.asarray(v, dtype=np.float64).copy() for n, v in b.items()}


def predict_labels(logits):
    """Argmax over the last axis; ties resolve to the lowest index."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return np.argmax(data, axis=-1)
