"""Point clouds, meshes, surface sampling, augmentation and file formats."""

from .cloud import Dataset, Mesh, PointCloud, UnlabeledCloud
from .sampling import DEFAULT_POINTS, sample_faces, sample_mesh_surface
from .transforms import (
    jitter,
    normalize_unit_sphere,
    random_rotate_y,
    rotate_y,
    rotation_y,
    scale_unit_cube,
    unit_cube_coordinates,
)
from .io import (
    PALETTE,
    palette_colors,
    read_off,
    read_ply_colors,
    read_ply_points,
    write_off,
    write_ply,
    write_ply_colored,
)

__all__ = [
    "Dataset", "Mesh", "PointCloud", "UnlabeledCloud",
    "DEFAULT_POINTS", "sample_faces", "sample_mesh_surface",
    "jitter", "normalize_unit_sphere", "random_rotate_y", "rotate_y", "rotation_y",
    "scale_unit_cube", "unit_cube_coordinates",
    "PALETTE", "palette_colors", "read_off", "read_ply_colors", "read_ply_points",
    "write_off", "write_ply", "write_ply_colored",
]
