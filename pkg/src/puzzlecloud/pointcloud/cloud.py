"""Point cloud, mesh and dataset containers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DatasetError, DimensionError, EmptyCloudError, LabelError, LabelLeakageError, NumericError


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    class_label: int | None = None
    part_labels: np.ndarray | None = None
    source_id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DimensionError(f"points must be K x 3, got {pts.shape}")
        if pts.shape[0] < 1:
            raise EmptyCloudError("a point cloud needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise NumericError("PointCloud", "point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.part_labels is not None:
            parts = np.asarray(self.part_labels, dtype=np.int64)
            if parts.shape != (pts.shape[0],):
                raise LabelError(f"part_labels must have {pts.shape[0]} entries, got {parts.shape}")
            object.__setattr__(self, "part_labels", parts)
        if self.class_label is not None:
            object.__setattr__(self, "class_label", int(self.class_label))

    @property
    def k(self):
        return self.points.shape[0]

    def with_points(self, points):
        """Same labels and id, new coordinates."""
        return replace(self, points=points)

    def strip_labels(self):
        return UnlabeledCloud(self.points, self.source_id)


class UnlabeledCloud:
    """Coordinates-only view used for self-supervised streams.

    Reading a main-task label raises :class:`LabelLeakageError`.
    """

    __slots__ = ("points", "source_id")

    def __init__(self, points, source_id=""):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise DimensionError(f"points must be K x 3 with K >= 1, got {pts.shape}")
        self.points = pts
        self.source_id = source_id

    @property
    def k(self):
        return self.points.shape[0]

    @property
    def class_label(self):
        raise LabelLeakageError(f"labels of {self.source_id!r} were stripped")

    @property
    def part_labels(self):
        raise LabelLeakageError(f"labels of {self.source_id!r} were stripped")

    def with_points(self, points):
        return UnlabeledCloud(points, self.source_id)

    def strip_labels(self):
        return self


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise DimensionError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.face_labels is not None:
            lab = np.asarray(self.face_labels, dtype=np.int64)
            if lab.shape != (len(f),):
                raise DimensionError("face_labels must have one entry per face")
            object.__setattr__(self, "face_labels", lab)

    def face_areas(self):
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def degenerate_faces(self):
        """Boolean mask of zero-area faces."""
        return self.face_areas() <= 0.0


@dataclass
class Dataset:
    samples: list
    class_names: list
    num_parts: int | None = None
    # category index -> part ids that belong to shapes of that category
    category_parts: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        for s in self.samples:
            if isinstance(s, UnlabeledCloud):
                continue
            if s.class_label is not None and not 0 <= s.class_label < len(self.class_names):
                raise DatasetError(f"{s.source_id}: class label {s.class_label} out of range")
            if s.part_labels is not None:
                if self.num_parts is None:
                    raise DatasetError(f"{s.source_id}: part labels present but num_parts unset")
                if s.part_labels.min() < 0 or s.part_labels.max() >= self.num_parts:
                    raise DatasetError(f"{s.source_id}: part label out of range")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def subset(self, samples, name=None):
        return Dataset(list(samples), list(self.class_names), self.num_parts,
                       dict(self.category_parts), name if name is not None else self.name)

    def source_ids(self):
        return [s.source_id for s in self.samples]
