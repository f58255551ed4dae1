"""Voronoi tessellation of cone centers clipped to an image window.

Cells are obtained by intersecting the window rectangle with the bisector
half-planes between a seed and its Delaunay neighbors, which is exact even
for cocircular seed configurations (extra neighbors only add redundant
constraints). Each polygon edge is tagged with the neighboring seed index
it bisects, or with BOUNDARY for window edges, so ridge information falls
out of the clipping itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import (
    DegenerateCell,
    DegeneratePolygon,
    DuplicateSeeds,
    EmptyInput,
    IndexOutOfRange,
    SeedOutOfBounds,
)

# ridge marker for window edges
BOUNDARY = -1

# two seeds closer than this are considered identical
DUPLICATE_TOLERANCE = 1e-9


class Point(NamedTuple):
    x: float
    y: float


class BoundingBox(NamedTuple):
    width: float
    height: float


@dataclass
class VoronoiCell:
    """One convex cell: counter-clockwise vertices plus tagged edges.

    ridges[k] is ((i, j), neighbor) where i, j index into vertices and
    neighbor is the seed index across that edge, or BOUNDARY.
    """

    seed_index: int
    vertices: List[Point]
    ridges: List[Tuple[Tuple[int, int], int]]


@dataclass
class VoronoiTessellation:
    seeds: List[Point]
    cells: List[VoronoiCell]
    bounds: BoundingBox


@dataclass(frozen=True)
class CircleAnnotation:
    center: Point
    radius: float
    seed_index: int


def polygon_area(vertices: Sequence[Point]) -> float:
    """Shoelace area; positive for counter-clockwise vertex order."""
    if len(vertices) < 3:
        raise DegeneratePolygon(f"need >= 3 vertices, got {len(vertices)}")
    terms = []
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        terms.append(x1 * y2 - x2 * y1)
    area = 0.5 * math.fsum(terms)
    if area == 0.0:
        raise DegeneratePolygon("zero area")
    return area


def _clip_halfplane(verts, tags, sx, sy, ox, oy, tag):
    # Keep the side closer to (sx, sy) than to (ox, oy):
    # f(p) = (p - m) . (o - s) <= 0 with m the bisector midpoint.
    dx = ox - sx
    dy = oy - sy
    mx = 0.5 * (sx + ox)
    my = 0.5 * (sy + oy)
    f = [(vx - mx) * dx + (vy - my) * dy for vx, vy in verts]
    if all(v <= 0.0 for v in f):
        return verts, tags
    n = len(verts)
    out_v = []
    out_in = []  # tag of the edge each emitted vertex arrives on
    for i in range(n):
        j = (i + 1) % n
        fa = f[i]
        fb = f[j]
        ax, ay = verts[i]
        bx, by = verts[j]
        t = tags[i]
        if fa <= 0.0:
            if fb <= 0.0:
                out_v.append((bx, by))
                out_in.append(t)
            else:
                s = fa / (fa - fb)
                out_v.append((ax + s * (bx - ax), ay + s * (by - ay)))
                out_in.append(t)
        elif fb <= 0.0:
            s = fa / (fa - fb)
            out_v.append((ax + s * (bx - ax), ay + s * (by - ay)))
            out_in.append(tag)
            out_v.append((bx, by))
            out_in.append(t)
    m = len(out_v)
    # the tag of the edge leaving vertex i is the arrival tag of vertex i+1
    out_tags = [out_in[(i + 1) % m] for i in range(m)] if m else []
    return out_v, out_tags


def _dedupe(verts, tags):
    # drop exact consecutive duplicates (a vertex landing exactly on a clip
    # line is emitted twice); the degenerate edge between them goes with it
    n = len(verts)
    keep_v = []
    keep_t = []
    for i in range(n):
        j = (i + 1) % n
        if verts[i] == verts[j] and n - i > 1:
            continue
        keep_v.append(verts[i])
        keep_t.append(tags[i])
    if len(keep_v) >= 2 and keep_v[0] == keep_v[-1]:
        keep_v.pop()
        keep_t.pop()  # the zero-length closing edge
    return keep_v, keep_t


def _all_pairs(n: int) -> List[np.ndarray]:
    return [np.array([j for j in range(n) if j != i], dtype=np.intp) for i in range(n)]


def _neighbor_lists(pts: np.ndarray) -> List[np.ndarray]:
    n = len(pts)
    if n < 3:
        return _all_pairs(n)
    try:
        tri = Delaunay(pts)
    except QhullError:
        # collinear input has no triangulation; all-pairs clipping is
        # affordable at the sizes where that happens
        return _all_pairs(n)
    indptr, indices = tri.vertex_neighbor_vertices
    return [np.sort(indices[indptr[i]:indptr[i + 1]]) for i in range(n)]


def build_voronoi(seeds: Sequence[Point], bounds: BoundingBox) -> VoronoiTessellation:
    """Tessellate the window; one clipped convex cell per seed."""
    if len(seeds) == 0:
        raise EmptyInput("no seeds")
    w = float(bounds.width)
    h = float(bounds.height)
    if not (w > 0 and h > 0):
        raise ValueError(f"bounds must be positive, got {bounds}")
    pts = np.asarray([(p[0], p[1]) for p in seeds], dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise SeedOutOfBounds("non-finite seed coordinate")
    inside = (pts[:, 0] > 0) & (pts[:, 0] < w) & (pts[:, 1] > 0) & (pts[:, 1] < h)
    if not inside.all():
        bad = int(np.flatnonzero(~inside)[0])
        raise SeedOutOfBounds(
            f"seed {bad} at ({pts[bad, 0]}, {pts[bad, 1]}) is not strictly inside {bounds}"
        )
    if len(pts) >= 2:
        pairs = cKDTree(pts).query_pairs(DUPLICATE_TOLERANCE)
        if pairs:
            i, j = min(pairs)
            raise DuplicateSeeds(f"seeds {i} and {j} closer than {DUPLICATE_TOLERANCE}")

    neighbors = _neighbor_lists(pts)
    box_v = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
    box_t = [BOUNDARY] * 4
    cells = []
    for i in range(len(pts)):
        sx, sy = pts[i]
        verts, tags = box_v, box_t
        for j in neighbors[i]:
            verts, tags = _clip_halfplane(verts, tags, sx, sy, pts[j, 0], pts[j, 1], int(j))
            if not verts:
                break
        verts, tags = _dedupe(verts, tags)
        nv = len(verts)
        ridges = [((k, (k + 1) % nv), tags[k]) for k in range(nv)]
        cells.append(VoronoiCell(i, [Point(x, y) for x, y in verts], ridges))
    seed_points = [Point(float(x), float(y)) for x, y in pts]
    return VoronoiTessellation(seed_points, cells, BoundingBox(w, h))


def _check_index(tess: VoronoiTessellation, seed_index: int) -> VoronoiCell:
    if not 0 <= seed_index < len(tess.cells):
        raise IndexOutOfRange(f"seed index {seed_index} of {len(tess.cells)} cells")
    return tess.cells[seed_index]


def closest_vertex_circle(tess: VoronoiTessellation, seed_index: int) -> CircleAnnotation:
    """Circle radius = distance from the seed to its nearest cell vertex."""
    cell = _check_index(tess, seed_index)
    if not cell.vertices:
        raise DegenerateCell(f"cell {seed_index} has no vertices")
    sx, sy = tess.seeds[seed_index]
    radius = min(math.hypot(vx - sx, vy - sy) for vx, vy in cell.vertices)
    return CircleAnnotation(tess.seeds[seed_index], radius, seed_index)


def closest_ridge_midpoint_circle(tess: VoronoiTessellation, seed_index: int) -> CircleAnnotation:
    """Circle radius = distance from the seed to the nearest ridge midpoint.

    Only ridges shared with another cell count; window edges are not
    ridges. Midpoints are taken on the clipped segments.
    """
    cell = _check_index(tess, seed_index)
    sx, sy = tess.seeds[seed_index]
    best = None
    for (i, j), neighbor in cell.ridges:
        if neighbor == BOUNDARY:
            continue
        ax, ay = cell.vertices[i]
        bx, by = cell.vertices[j]
        d = math.hypot(0.5 * (ax + bx) - sx, 0.5 * (ay + by) - sy)
        if best is None or d < best:
            best = d
    if best is None:
        raise DegenerateCell(f"cell {seed_index} has no interior ridge")
    return CircleAnnotation(tess.seeds[seed_index], best, seed_index)
