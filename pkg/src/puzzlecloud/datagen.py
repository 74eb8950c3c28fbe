"""Procedural labelled shapes with optional scan-like corruption.

Each class is a recipe of box / cylinder / sphere primitives, each primitive
tagged with a part. Samples are surface-sampled, optionally corrupted
(occlusion, background clutter, noise, anisotropic scale) and normalized to
the unit sphere. Part ids are global across recipes; the id after the last
recipe part is reserved for background points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DatasetError
from .pointcloud import Dataset, Mesh, PointCloud, normalize_unit_sphere, read_ply_points, sample_faces, write_ply


@dataclass(frozen=True)
class Primitive:
    kind: str  # "box" | "cylinder" | "sphere"
    center: tuple
    size: tuple  # box: half extents; cylinder: (radius, height); sphere: (radius,)
    part: int


@dataclass(frozen=True)
class ShapeRecipe:
    class_name: str
    part_names: tuple
    primitives: tuple
    size_variation: float = 0.12

    def __post_init__(self):
        used = sorted({p.part for p in self.primitives})
        if not self.primitives or used != list(range(len(self.part_names))):
            raise ConfigError(f"recipe {self.class_name!r}: part ids must be contiguous from 0 and all used")
        if not 0.0 <= self.size_variation < 1.0:
            raise ConfigError("size_variation must be in [0, 1)")
        for p in self.primitives:
            if p.kind not in ("box", "cylinder", "sphere"):
                raise ConfigError(f"unknown primitive kind {p.kind!r}")


@dataclass(frozen=True)
class DomainProfile:
    name: str = "clean"
    noise_std: float = 0.0
    occlusion: float = 0.0
    background: float = 0.0
    anisotropic_scale: float = 0.0

    def __post_init__(self):
        for attr in ("occlusion", "background", "anisotropic_scale"):
            v = getattr(self, attr)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{attr} must be in [0, 1), got {v}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")


PROFILES = {
    "clean": DomainProfile("clean"),
    "noisy": DomainProfile("noisy", noise_std=0.02, occlusion=0.25, anisotropic_scale=0.2),
    "scan_bg": DomainProfile("scan_bg", noise_std=0.02, occlusion=0.25, background=0.2, anisotropic_scale=0.2),
}


def _legs(x, z, y_mid, height, radius, part):
    return tuple(Primitive("cylinder", (sx * x, y_mid, sz * z), (radius, height), part)
                 for sx in (-1, 1) for sz in (-1, 1))


DEFAULT_RECIPES = (
    ShapeRecipe("chair", ("seat", "back", "leg"), (
        Primitive("box", (0.0, 0.5, 0.0), (0.5, 0.05, 0.5), 0),
        Primitive("box", (0.0, 1.0, -0.45), (0.5, 0.45, 0.05), 1),
    ) + _legs(0.42, 0.42, 0.225, 0.45, 0.05, 2)),
    ShapeRecipe("table", ("top", "leg"), (
        Primitive("box", (0.0, 0.75, 0.0), (0.8, 0.04, 0.5), 0),
    ) + _legs(0.7, 0.4, 0.355, 0.71, 0.06, 1)),
    ShapeRecipe("lamp", ("base", "pole", "shade"), (
        Primitive("cylinder", (0.0, 0.04, 0.0), (0.4, 0.08), 0),
        Primitive("cylinder", (0.0, 0.68, 0.0), (0.04, 1.2), 1),
        Primitive("sphere", (0.0, 1.35, 0.0), (0.35,), 2),
    )),
    ShapeRecipe("bottle", ("body", "neck", "cap"), (
        Primitive("cylinder", (0.0, 0.5, 0.0), (0.3, 1.0), 0),
        Primitive("cylinder", (0.0, 1.15, 0.0), (0.1, 0.3), 1),
        Primitive("sphere", (0.0, 1.32, 0.0), (0.12,), 2),
    )),
    ShapeRecipe("stool", ("seat", "leg"), (
        Primitive("cylinder", (0.0, 0.62, 0.0), (0.35, 0.08), 0),
        Primitive("cylinder", (0.0, 0.3, 0.0), (0.06, 0.6), 1),
    )),
    ShapeRecipe("shelf", ("side", "board"), (
        Primitive("box", (-0.5, 0.8, 0.0), (0.04, 0.8, 0.3), 0),
        Primitive("box", (0.5, 0.8, 0.0), (0.04, 0.8, 0.3), 0),
        Primitive("box", (0.0, 0.3, 0.0), (0.46, 0.03, 0.3), 1),
        Primitive("box", (0.0, 0.8, 0.0), (0.46, 0.03, 0.3), 1),
        Primitive("box", (0.0, 1.3, 0.0), (0.46, 0.03, 0.3), 1),
    )),
)


def default_recipes(n=4):
    if not 2 <= n <= len(DEFAULT_RECIPES):
        raise ConfigError(f"between 2 and {len(DEFAULT_RECIPES)} built-in recipes are available")
    return list(DEFAULT_RECIPES[:n])


# -- primitive meshes ------------------------------------------------------

def box_mesh(center, half):
    c, h = np.asarray(center, float), np.asarray(half, float)
    corners = np.array([[x, y, z] for z in (-1, 1) for y in (-1, 1) for x in (-1, 1)], float)
    verts = c + corners * h
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = [f for a, b, cc, d in quads for f in ((a, b, cc), (a, cc, d))]
    return verts, np.array(faces)


def cylinder_mesh(center, radius, height, segments=16):
    cx, cy, cz = center
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), np.zeros(segments), radius * np.sin(ang)], axis=1)
    bottom = ring + (cx, cy - height / 2, cz)
    top = ring + (cx, cy + height / 2, cz)
    verts = np.vstack([bottom, top, [(cx, cy - height / 2, cz), (cx, cy + height / 2, cz)]])
    faces = []
    cb, ct = 2 * segments, 2 * segments + 1
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, segments + j), (i, segments + j, segments + i), (cb, j, i), (ct, segments + i, segments + j)]
    return verts, np.array(faces)


def sphere_mesh(center, radius, stacks=8, slices=12):
    verts = [(0.0, radius, 0.0)]
    for s in range(1, stacks):
        phi = np.pi * s / stacks
        for t in range(slices):
            th = 2.0 * np.pi * t / slices
            verts.append((radius * np.sin(phi) * np.cos(th), radius * np.cos(phi), radius * np.sin(phi) * np.sin(th)))
    verts.append((0.0, -radius, 0.0))
    verts = np.array(verts) + np.asarray(center, float)
    faces = []
    south = len(verts) - 1

    def ring(s, t):
        return 1 + (s - 1) * slices + t % slices

    for t in range(slices):
        faces.append((0, ring(1, t + 1), ring(1, t)))
        faces.append((south, ring(stacks - 1, t), ring(stacks - 1, t + 1)))
    for s in range(1, stacks - 1):
        for t in range(slices):
            a, b, c, d = ring(s, t), ring(s, t + 1), ring(s + 1, t + 1), ring(s + 1, t)
            faces += [(a, b, c), (a, c, d)]
    return verts, np.array(faces)


def recipe_mesh(recipe, rng=None, part_offset=0):
    """Mesh of a recipe with per-sample size variation; face labels are global part ids."""
    all_v, all_f, all_l = [], [], []
    n = 0
    var = recipe.size_variation
    for prim in recipe.primitives:
        jitter = 1.0 if rng is None or var == 0 else rng.uniform(1.0 - var, 1.0 + var)
        if prim.kind == "box":
            v, f = box_mesh(prim.center, np.asarray(prim.size) * jitter)
        elif prim.kind == "cylinder":
            v, f = cylinder_mesh(prim.center, prim.size[0] * jitter, prim.size[1] * jitter)
        else:
            v, f = sphere_mesh(prim.center, prim.size[0] * jitter)
        all_v.append(v)
        all_f.append(f + n)
        all_l.append(np.full(len(f), prim.part + part_offset))
        n += len(v)
    return Mesh(np.vstack(all_v), np.vstack(all_f), np.concatenate(all_l))


# -- sample generation -----------------------------------------------------

def _background(rng, n, lo, hi):
    """Floor patch under the object plus clutter in an enlarged bounding box."""
    span = hi - lo
    lo_e, hi_e = lo - 0.3 * span, hi + 0.3 * span
    pts = rng.uniform(lo_e, hi_e, size=(n, 3))
    on_floor = rng.random(n) < 0.6
    pts[on_floor, 1] = lo[1] - 0.02 * span[1]
    return pts


def generate_sample(recipe, class_label, k_points, profile, rng, part_offset=0, background_id=None, source_id=""):
    mesh = recipe_mesh(recipe, rng, part_offset)
    n_bg = int(rng.binomial(k_points, profile.background)) if profile.background > 0 else 0
    n_fg = k_points - n_bg
    if n_fg < 1:
        n_bg, n_fg = k_points - 1, 1
    if profile.occlusion > 0:
        m = int(math.ceil(n_fg / (1.0 - profile.occlusion)))
        pts, face_idx, _ = sample_faces(mesh, m, rng)
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        keep = np.argsort(pts @ direction, kind="stable")[:n_fg]
        pts, face_idx = pts[keep], face_idx[keep]
    else:
        pts, face_idx, _ = sample_faces(mesh, n_fg, rng)
    parts = mesh.face_labels[face_idx]
    if n_bg:
        bg = _background(rng, n_bg, pts.min(axis=0), pts.max(axis=0))
        pts = np.vstack([pts, bg])
        parts = np.concatenate([parts, np.full(n_bg, background_id)])
    if profile.anisotropic_scale > 0:
        a = profile.anisotropic_scale
        pts = pts * rng.uniform(1.0 - a, 1.0 + a, size=3)
    if profile.noise_std > 0:
        pts = pts + profile.noise_std * rng.standard_normal(pts.shape)
    order = rng.permutation(len(pts))
    cloud = PointCloud(pts[order], class_label=class_label, part_labels=parts[order], source_id=source_id)
    return normalize_unit_sphere(cloud)


def resolve_recipes(recipes):
    if recipes is None or recipes == "default":
        return default_recipes()
    if isinstance(recipes, int):
        return default_recipes(recipes)
    by_name = {r.class_name: r for r in DEFAULT_RECIPES}
    out = []
    for r in recipes:
        if isinstance(r, ShapeRecipe):
            out.append(r)
        elif r in by_name:
            out.append(by_name[r])
        else:
            raise ConfigError(f"unknown recipe {r!r}")
    return out


def generate_dataset(recipes="default", samples_per_class=25, k_points=1024, domain_profile="clean", seed=0):
    """Balanced dataset of ``len(recipes) * samples_per_class`` clouds."""
    recipes = resolve_recipes(recipes)
    profile = PROFILES[domain_profile] if isinstance(domain_profile, str) else domain_profile
    if len(recipes) < 2:
        raise ConfigError("generate_dataset needs at least two recipes")
    if k_points < 64:
        raise ConfigError("k_points must be >= 64")
    if samples_per_class < 1:
        raise ConfigError("samples_per_class must be >= 1")
    offsets, total = [], 0
    for r in recipes:
        offsets.append(total)
        total += len(r.part_names)
    background_id = total
    samples = []
    for c, (recipe, off) in enumerate(zip(recipes, offsets)):
        for i in range(samples_per_class):
            rng = np.random.default_rng([int(seed), c, i])
            sid = f"{profile.name}/{seed}/{recipe.class_name}_{i:04d}"
            samples.append(generate_sample(recipe, c, k_points, profile, rng, off, background_id, sid))
    category_parts = {}
    for c, (recipe, off) in enumerate(zip(recipes, offsets)):
        ids = list(range(off, off + len(recipe.part_names)))
        if profile.background > 0:
            ids.append(background_id)
        category_parts[c] = ids
    return Dataset(samples, [r.class_name for r in recipes], num_parts=total + 1,
                   category_parts=category_parts, name=profile.name)


def part_names(recipes="default"):
    """Global part id -> "class/part" name, including the background slot."""
    names = []
    for r in resolve_recipes(recipes):
        names += [f"{r.class_name}/{p}" for p in r.part_names]
    return names + ["background"]


def split(dataset, test_fraction, seed):
    """Stratified disjoint (train, test) split."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    by_class = {}
    for idx, s in enumerate(dataset.samples):
        by_class.setdefault(s.class_label, []).append(idx)
    train_idx, test_idx = [], []
    for c in sorted(by_class, key=lambda v: (v is None, v)):
        idx = by_class[c]
        if len(idx) < 2:
            raise DatasetError(f"class {c} has {len(idx)} sample(s); need 2 to split")
        n_test = min(max(1, int(round(test_fraction * len(idx)))), len(idx) - 1)
        perm = rng.permutation(len(idx))
        test_idx += [idx[j] for j in perm[:n_test]]
        train_idx += [idx[j] for j in perm[n_test:]]
    train_idx.sort()
    test_idx.sort()
    return (dataset.subset([dataset.samples[i] for i in train_idx], dataset.name + ":train"),
            dataset.subset([dataset.samples[i] for i in test_idx], dataset.name + ":test"))


# -- persistence -----------------------------------------------------------

MANIFEST = "manifest.json"


def save_dataset(dataset, directory):
    """Write one PLY per sample (with part labels) plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(dataset.samples):
        fname = f"{i:05d}.ply"
        write_ply(directory / fname, s)
        entries.append({"file": fname, "class_label": s.class_label, "source_id": s.source_id})
    manifest = {
        "name": dataset.name,
        "class_names": list(dataset.class_names),
        "num_parts": dataset.num_parts,
        "category_parts": {str(k): v for k, v in dataset.category_parts.items()},
        "samples": entries,
    }
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1))
    return directory / MANIFEST


def load_dataset(directory):
    directory = Path(directory)
    path = directory / MANIFEST if directory.is_dir() else directory
    manifest = json.loads(path.read_text())
    samples = []
    for e in manifest["samples"]:
        c = read_ply_points(path.parent / e["file"], source_id=e["source_id"])
        samples.append(PointCloud(c.points, e["class_label"], c.part_labels, e["source_id"]))
    return Dataset(samples, manifest["class_names"], manifest.get("num_parts"),
                   {int(k): v for k, v in manifest.get("category_parts", {}).items()}, manifest.get("name", ""))
