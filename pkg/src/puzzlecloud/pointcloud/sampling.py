from __future__ import annotations

import numpy as np

from ..errors import DegenerateMeshError
from .cloud import PointCloud

DEFAULT_POINTS = 2048


def sample_faces(mesh, k, rng):
    """Area-weighted face choice plus uniform barycentric sampling.

    Returns ``(points, face_index, barycentric)``.
    """
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0.0:
        raise DegenerateMeshError("mesh has zero total surface area")
    face_idx = rng.choice(len(areas), size=k, p=areas / total)
    r1 = rng.random(k)
    r2 = rng.random(k)
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    tri = mesh.vertices[mesh.faces[face_idx]]
    points = np.einsum("ki,kij->kj", bary, tri)
    return points, face_idx, bary


def sample_mesh_surface(mesh, k=DEFAULT_POINTS, rng=None, source_id=""):
    """Draw ``k`` points uniformly over the mesh surface.

    When the mesh carries ``face_labels`` they become the cloud's part labels.
    """
    rng = np.random.default_rng() if rng is None else rng
    points, face_idx, _ = sample_faces(mesh, k, rng)
    parts = None if mesh.face_labels is None else mesh.face_labels[face_idx]
    return PointCloud(points, part_labels=parts, source_id=source_id)
