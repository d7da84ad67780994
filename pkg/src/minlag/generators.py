"""Planar test triangulations (disk, annulus, pair of pants) in the x-plane of C^2.

All generators are deterministic and return well-centered meshes, embedded
via (x, y) -> (x1, y1, x2, y2) = (x, 0, y, 0) with counter-clockwise
triangles, so the patch is special Lagrangian with phase 0.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .errors import ValidationError
from .mesh import SimplicialPatch, is_well_centered

SHAPES = ("disk", "annulus", "pants")


def embed_plane(points2d: np.ndarray) -> np.ndarray:
    out = np.zeros((len(points2d), 4))
    out[:, 0] = points2d[:, 0]
    out[:, 2] = points2d[:, 1]
    return out


def _orient_ccw(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    tris = np.array(tris, dtype=np.int64)
    a, b, c = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    signed = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flip = signed < 0
    tris[flip, 1], tris[flip, 2] = tris[flip, 2].copy(), tris[flip, 1].copy()
    return tris


def _finish(points2d: np.ndarray, tris: np.ndarray, shape: str, resolution: int) -> SimplicialPatch:
    patch = SimplicialPatch(embed_plane(points2d), _orient_ccw(points2d, tris))
    if not is_well_centered(patch):
        raise ValidationError(
            f"{shape} at resolution {resolution} is not well-centered",
            module="cli", operation="generate_mesh",
        )
    return patch


def _ring_disk(resolution: int, rings: int) -> np.ndarray:
    pts = [np.zeros(2)]
    for k in range(1, rings + 1):
        count = resolution if k == rings else max(3, round(resolution * k / rings))
        ang = 2 * np.pi * (np.arange(count) + 0.5 * (k % 2)) / count
        pts.extend(np.c_[k / rings * np.cos(ang), k / rings * np.sin(ang)])
    pts = np.array(pts)
    # boundary ring first, then interior, so smoothing can pin a prefix
    return np.r_[pts[-resolution:], pts[:-resolution]]


def _smooth(points: np.ndarray, pinned: int, iterations: int) -> np.ndarray:
    """Centroidal smoothing of the unpinned points with Delaunay retriangulation."""
    pts = points.copy()
    for _ in range(iterations):
        tris = Delaunay(pts).simplices
        p = pts[tris]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        cent = p.mean(axis=1)
        acc = np.zeros_like(pts)
        wsum = np.zeros(len(pts))
        for j in range(3):
            np.add.at(acc, tris[:, j], area[:, None] * cent)
            np.add.at(wsum, tris[:, j], area)
        new = acc / wsum[:, None]
        new[:pinned] = pts[:pinned]
        pts = new
    return pts


def disk(resolution: int = 16) -> SimplicialPatch:
    """Unit disk with ``resolution`` vertices on the rim."""
    _check_resolution(resolution)
    base = max(1, round(resolution / 6))
    for rings in (base, base + 1, max(1, base - 1)):
        pts = _smooth(_ring_disk(resolution, rings), resolution, 100)
        try:
            return _finish(pts, Delaunay(pts).simplices, "disk", resolution)
        except ValidationError:
            continue
    raise ValidationError(
        f"disk at resolution {resolution} is not well-centered",
        module="cli", operation="generate_mesh",
    )


def annulus(resolution: int = 16, r_in: float = 1.0, r_out: float = 2.0,
            rings: int | None = None) -> SimplicialPatch:
    """Staggered ring annulus; ``resolution`` vertices per ring."""
    _check_resolution(resolution)
    rings = rings or resolution // 16 + 1
    rings = max(rings, 2)
    pts, index = [], {}
    for j in range(rings):
        r = r_in + (r_out - r_in) * j / (rings - 1)
        for i in range(resolution):
            ang = np.pi * (2 * i + j) / resolution
            index[j, i] = len(pts)
            pts.append((r * np.cos(ang), r * np.sin(ang)))
    tris = []
    for j in range(rings - 1):
        for i in range(resolution):
            a, a1 = index[j, i], index[j, (i + 1) % resolution]
            b, b1 = index[j + 1, i], index[j + 1, (i + 1) % resolution]
            tris.append((a, a1, b))
            tris.append((b, a1, b1))
    return _finish(np.array(pts), np.array(tris), "annulus", resolution)


def _hexdist(i, j):
    return (abs(i) + abs(j) + abs(i + j)) // 2


def pants(resolution: int = 16) -> SimplicialPatch:
    """Hexagon with two hexagonal holes cut from an equilateral lattice (b1 = 2)."""
    _check_resolution(resolution)
    big = max(4, resolution // 4)
    hole = max(1, big // 4)
    centers = [(-(big // 2), 0), (big // 2, 0)]

    def inside(i, j):
        return _hexdist(i, j) <= big

    def in_hole(verts):
        return any(all(_hexdist(i - ci, j - cj) <= hole for i, j in verts) for ci, cj in centers)

    index, pts, tris = {}, [], []

    def vid(i, j):
        if (i, j) not in index:
            index[i, j] = len(pts)
            pts.append((i + 0.5 * j, np.sqrt(3) / 2 * j))
        return index[i, j]

    for i in range(-big, big + 1):
        for j in range(-big, big + 1):
            for tri in (((i, j), (i + 1, j), (i, j + 1)), ((i + 1, j), (i + 1, j + 1), (i, j + 1))):
                if all(inside(*v) for v in tri) and not in_hole(tri):
                    tris.append(tuple(vid(*v) for v in tri))
    pts = np.array(pts) / big
    return _finish(pts, np.array(tris), "pants", resolution)


def _check_resolution(resolution: int):
    if resolution < 4:
        raise ValidationError(
            f"resolution {resolution} < 4", module="cli", operation="generate_mesh"
        )


def generate_mesh(shape: str, resolution: int = 16) -> SimplicialPatch:
    try:
        builder = {"disk": disk, "annulus": annulus, "pants": pants}[shape]
    except KeyError:
        raise ValidationError(
            f"unknown shape {shape!r}; choose from {SHAPES}", module="cli", operation="generate_mesh"
        ) from None
    return builder(resolution)
