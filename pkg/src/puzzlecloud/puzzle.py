"""The 3D puzzle pretext task.

A cloud is scaled into the unit cube, each axis is cut into ``l`` equal
intervals, every point is labelled with the voxel it falls in, and the voxels
are shuffled by moving each one rigidly onto the centre of another voxel. The
label kept for a point is the voxel it came FROM, which is what the puzzle
head learns to predict.

Intervals are half-open ``[i/l, (i+1)/l)`` except the last one, which also
contains 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, DomainError
from .pointcloud.transforms import unit_cube_coordinates

DOMAIN_TOL = 1e-9


@dataclass(frozen=True)
class PuzzleConfig:
    l: int = 3

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 2:
            raise ConfigError(f"puzzle needs l >= 2, got {self.l}")

    @property
    def num_voxels(self):
        return self.l ** 3


@dataclass
class PuzzledSample:
    shuffled_points: np.ndarray
    voxel_labels: np.ndarray
    permutation: np.ndarray
    scaled_points: np.ndarray
    l: int

    @property
    def destination_labels(self):
        return self.permutation[self.voxel_labels]


def _clamp_unit(coords):
    coords = np.asarray(coords, dtype=np.float64)
    if np.any(coords < -DOMAIN_TOL) or np.any(coords > 1.0 + DOMAIN_TOL):
        bad = coords[(coords < -DOMAIN_TOL) | (coords > 1.0 + DOMAIN_TOL)]
        raise DomainError(f"coordinate {bad.flat[0]!r} outside the unit cube")
    return np.clip(coords, 0.0, 1.0)


def axis_intervals(coords, l):
    """Interval index along each axis, ``min(floor(c * l), l - 1)``."""
    c = _clamp_unit(coords)
    return np.minimum(np.floor(c * l).astype(np.int64), l - 1)


def voxel_ids_from_intervals(ijk, l):
    ijk = np.asarray(ijk)
    return ijk[..., 0] + l * ijk[..., 1] + l * l * ijk[..., 2]


def intervals_from_voxel_ids(ids, l):
    ids = np.asarray(ids, dtype=np.int64)
    return np.stack([ids % l, (ids // l) % l, ids // (l * l)], axis=-1)


def voxel_index(point, l):
    """Voxel id of a single point in [0, 1]^3 (x fastest, then y, then z)."""
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (3,):
        raise DimensionError(f"voxel_index expects one 3D point, got shape {point.shape}")
    return int(voxel_ids_from_intervals(axis_intervals(point, l), l))


def voxel_indices(points, l):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DimensionError(f"expected (K, 3) points, got {points.shape}")
    return voxel_ids_from_intervals(axis_intervals(points, l), l)


def assign_voxel_labels(cloud, config):
    """Per-point voxel ids of a cloud that is already unit-cube scaled."""
    points = getattr(cloud, "points", cloud)
    return voxel_indices(points, config.l)


def random_voxel_permutation(config, rng):
    """Uniform permutation of all ``l**3`` voxel ids, empty voxels included."""
    return rng.permutation(config.num_voxels).astype(np.int64)


def voxel_centers(ids, l):
    return (intervals_from_voxel_ids(ids, l) + 0.5) / l


def _settle(coords, target, l, max_steps=64):
    """Nudge coordinates by single ulps until they land in interval ``target``.

    Only points sitting exactly on an interval boundary after the move need
    this; everything else is untouched.
    """
    out = coords.copy()
    for _ in range(max_steps):
        got = np.minimum(np.floor(np.clip(out, 0.0, 1.0) * l).astype(np.int64), l - 1)
        low = got < target
        high = got > target
        if not (low.any() or high.any()):
            return np.clip(out, 0.0, 1.0)
        out[low] = np.nextafter(out[low], np.inf)
        out[high] = np.nextafter(out[high], -np.inf)
    raise DomainError("could not place shuffled points inside their destination voxel")


def shuffle_voxels(scaled_points, labels, permutation, l):
    """Move every point of voxel ``v`` by ``center(permutation[v]) - center(v)``."""
    dest = permutation[labels]
    moved = scaled_points + (voxel_centers(dest, l) - voxel_centers(labels, l))
    return _settle(moved, intervals_from_voxel_ids(dest, l), l)


def apply_puzzle(cloud, config, rng, permutation=None):
    """Build the puzzled variant of ``cloud``.

    A fresh permutation is drawn from ``rng`` unless one is supplied.
    """
    points = getattr(cloud, "points", cloud)
    scaled = unit_cube_coordinates(np.asarray(points, dtype=np.float64))
    labels = voxel_indices(scaled, config.l)
    if permutation is None:
        permutation = random_voxel_permutation(config, rng)
    else:
        permutation = np.asarray(permutation, dtype=np.int64)
        if sorted(permutation.tolist()) != list(range(config.num_voxels)):
            raise ConfigError("permutation is not a bijection on the voxel ids")
    shuffled = shuffle_voxels(scaled, labels, permutation, config.l)
    return PuzzledSample(shuffled, labels, permutation, scaled, config.l)


def unshuffle(sample):
    """Undo the voxel moves; recovers ``scaled_points`` up to rounding."""
    dest = sample.permutation[sample.voxel_labels]
    return sample.shuffled_points + (voxel_centers(sample.voxel_labels, sample.l) - voxel_centers(dest, sample.l))


def puzzle_batch(clouds, config, rng):
    """Stack puzzled versions of equally sized clouds: ((B, K, 3), (B, K))."""
    samples = [apply_puzzle(c, config, rng) for c in clouds]
    return (np.stack([s.shuffled_points for s in samples]),
            np.stack([s.voxel_labels for s in samples]))


def puzzle_accuracy(predicted, voxel_labels):
    predicted = np.asarray(predicted).reshape(-1)
    voxel_labels = np.asarray(voxel_labels).reshape(-1)
    if predicted.shape != voxel_labels.shape:
        raise DimensionError(f"length mismatch: {predicted.size} vs {voxel_labels.size}")
    if predicted.size == 0:
        raise DimensionError("puzzle_accuracy over zero points")
    return float(np.count_nonzero(predicted == voxel_labels)) / predicted.size
