"""Normalisation and augmentation. All functions return new clouds."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DegenerateCloudError


def normalize_unit_sphere(cloud):
    """Center on the centroid and scale so the farthest point has norm 1."""
    centered = cloud.points - cloud.points.mean(axis=0)
    radius = np.sqrt((centered ** 2).sum(axis=1)).max()
    if radius == 0.0:
        raise DegenerateCloudError(f"{cloud.source_id}: all points coincide")
    return cloud.with_points(centered / radius)


def unit_cube_coordinates(points):
    """Translate the min corner to the origin and divide by the longest extent."""
    lo = points.min(axis=0)
    extent = (points.max(axis=0) - lo).max()
    if extent == 0.0:
        raise DegenerateCloudError("zero extent on every axis")
    out = (points - lo) / extent
    # (p - lo) / extent can round a hair above 1 on the longest axis
    return np.clip(out, 0.0, 1.0)


def scale_unit_cube(cloud):
    return cloud.with_points(unit_cube_coordinates(cloud.points))


def jitter(cloud, sigma=0.01, clip=0.05, rng=None):
    """Add clipped per-coordinate Gaussian noise with standard deviation ``sigma``."""
    if sigma < 0 or clip <= 0:
        raise ConfigError(f"jitter needs sigma >= 0 and clip > 0, got {sigma}, {clip}")
    if sigma == 0:
        return cloud.with_points(cloud.points.copy())
    rng = np.random.default_rng() if rng is None else rng
    noise = np.clip(sigma * rng.standard_normal(cloud.points.shape), -clip, clip)
    return cloud.with_points(cloud.points + noise)


def rotation_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, -s],
                     [0.0, 1.0, 0.0],
                     [s, 0.0, c]])


def rotate_y(cloud, angle):
    """Rotate about the y axis: x' = x cos + z sin, z' = -x sin + z cos."""
    return cloud.with_points(cloud.points @ rotation_y(angle))


def random_rotate_y(cloud, rng):
    return rotate_y(cloud, rng.uniform(0.0, 2.0 * np.pi))
