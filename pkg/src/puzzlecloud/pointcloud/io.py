"""ASCII OFF meshes and ASCII PLY point files."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ParseError
from .cloud import Mesh, PointCloud

# 27 visually distinct colours, one per voxel of a 3x3x3 puzzle
PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
    (255, 255, 255), (0, 0, 0), (100, 149, 237), (255, 105, 180), (34, 139, 34),
    (139, 69, 19), (72, 61, 139),
], dtype=np.uint8)


def _content_lines(path):
    """(line_number, tokens) for non-blank, non-comment lines."""
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield n, line.split()


def _floats(path, n, tokens, count):
    if len(tokens) < count:
        raise ParseError(path, n, f"expected {count} numbers, got {len(tokens)}")
    try:
        return [float(t) for t in tokens[:count]]
    except ValueError as exc:
        raise ParseError(path, n, str(exc)) from None


def _ints(path, n, tokens):
    try:
        return [int(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(path, n, str(exc)) from None


def read_off(path):
    """Read an ASCII OFF mesh. Polygons with more than 3 vertices are fan-triangulated."""
    lines = _content_lines(path)
    last = 0
    try:
        n, tok = next(lines)
        last = n
        if not tok[0].startswith("OFF"):
            raise ParseError(path, n, f"expected OFF header, got {tok[0]!r}")
        # some writers put the counts on the header line ("OFF 8 6 0")
        counts = tok[1:] if len(tok) > 1 else None
        if counts is None:
            n, counts = next(lines)
            last = n
        nv, nf = _ints(path, n, counts[:2]) if len(counts) >= 2 else (None, None)
        if nv is None or nv < 0 or nf < 0:
            raise ParseError(path, n, "bad vertex/face counts")
        verts = []
        for _ in range(nv):
            n, tok = next(lines)
            last = n
            verts.append(_floats(path, n, tok, 3))
        faces = []
        for _ in range(nf):
            n, tok = next(lines)
            last = n
            vals = _ints(path, n, tok)
            m = vals[0] if vals else 0
            if m < 3 or len(vals) < m + 1:
                raise ParseError(path, n, "malformed face record")
            idx = vals[1:m + 1]
            if min(idx) < 0 or max(idx) >= nv:
                raise ParseError(path, n, "face references a missing vertex")
            for j in range(1, m - 1):
                faces.append((idx[0], idx[j], idx[j + 1]))
    except StopIteration:
        raise ParseError(path, last + 1, "unexpected end of file") from None
    return Mesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_off(path, mesh):
    with open(path, "w") as fh:
        fh.write(f"OFF\n{len(mesh.vertices)} {len(mesh.faces)} 0\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in v) + "\n")
        for f in mesh.faces:
            fh.write("3 " + " ".join(str(int(i)) for i in f) + "\n")


def _parse_ply_header(path, fh):
    first = fh.readline()
    if first.strip() != "ply":
        raise ParseError(path, 1, "missing 'ply' magic")
    n = 1
    fmt = None
    elements = []
    while True:
        line = fh.readline()
        n += 1
        if not line:
            raise ParseError(path, n, "header ended without end_header")
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else None
        elif tok[0] == "element":
            if len(tok) != 3:
                raise ParseError(path, n, "malformed element line")
            elements.append([tok[1], _ints(path, n, [tok[2]])[0], []])
        elif tok[0] == "property":
            if not elements:
                raise ParseError(path, n, "property before any element")
            elements[-1][2].append(tok[-1])
        elif tok[0] == "end_header":
            break
        else:
            raise ParseError(path, n, f"unknown header keyword {tok[0]!r}")
    if fmt != "ascii":
        raise ParseError(path, n, f"only ASCII PLY is supported (format {fmt!r})")
    return n, elements


def read_ply_points(path, source_id=None):
    """Read the vertex element of an ASCII PLY file.

    An integer ``label`` property, when present, becomes ``part_labels``.
    Other elements (faces) are ignored.
    """
    path = Path(path)
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        n, elements = _parse_ply_header(path, fh)
        vertex = next((e for e in elements if e[0] == "vertex"), None)
        if vertex is None:
            raise ParseError(path, n, "no vertex element")
        # elements before the vertex block must be skipped line by line
        skip = 0
        for name, count, _ in elements:
            if name == "vertex":
                break
            skip += count
        for _ in range(skip):
            fh.readline()
            n += 1
        _, count, props = vertex
        try:
            ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
        except ValueError:
            raise ParseError(path, n, "vertex element lacks x/y/z") from None
        il = props.index("label") if "label" in props else None
        pts = np.empty((count, 3))
        labels = np.empty(count, dtype=np.int64) if il is not None else None
        for i in range(count):
            line = fh.readline()
            n += 1
            tok = line.split()
            if len(tok) < len(props):
                raise ParseError(path, n, "truncated vertex record" if line else "unexpected end of file")
            try:
                pts[i] = float(tok[ix]), float(tok[iy]), float(tok[iz])
                if il is not None:
                    labels[i] = int(tok[il])
            except ValueError as exc:
                raise ParseError(path, n, str(exc)) from None
    return PointCloud(pts, part_labels=labels, source_id=source_id if source_id is not None else path.stem)


def _fmt(x, digits):
    return repr(float(x)) if digits is None else f"{x:.{digits}g}"


def write_ply(path, cloud, labels=None, colors=None, digits=None):
    """Write an ASCII PLY. ``digits=None`` uses shortest round-trip formatting."""
    pts = cloud.points
    if labels is None and isinstance(cloud, PointCloud):
        labels = cloud.part_labels
    with open(path, "w", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(pts)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\n")
        if labels is not None:
            fh.write("property int label\n")
        if colors is not None:
            fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write("end_header\n")
        for i, p in enumerate(pts):
            row = [_fmt(c, digits) for c in p]
            if labels is not None:
                row.append(str(int(labels[i])))
            if colors is not None:
                row.extend(str(int(c)) for c in colors[i])
            fh.write(" ".join(row) + "\n")


def palette_colors(ids):
    ids = np.asarray(ids, dtype=np.int64)
    return PALETTE[ids % len(PALETTE)]


def write_ply_colored(path, cloud, color_ids, digits=9):
    """Write points coloured by ``PALETTE[id]``; the ids are kept as ``label``."""
    color_ids = np.asarray(color_ids, dtype=np.int64)
    write_ply(path, cloud, labels=color_ids, colors=palette_colors(color_ids), digits=digits)


def read_ply_colors(path):
    """Return the (K, 3) uchar colours of an ASCII PLY written by :func:`write_ply_colored`."""
    path = Path(path)
    with open(path, "r", encoding="ascii") as fh:
        _, elements = _parse_ply_header(path, fh)
        props = elements[0][2]
        idx = [props.index(c) for c in ("red", "green", "blue")]
        rows = [fh.readline().split() for _ in range(elements[0][1])]
    return np.array([[int(r[i]) for i in idx] for r in rows], dtype=np.uint8)
