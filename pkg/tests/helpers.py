"""Independent oracles for the test suite.

Every helper recomputes an expected value through a route that shares no
code with the library: brute-force scans, exhaustive search over
assignments, Monte-Carlo sampling, rational arithmetic, finite
differences, or closed-form lattice counts.
"""

import itertools
import math
from collections import Counter, deque
from fractions import Fraction

import numpy as np


# ---------------------------------------------------------- nearest seed

def brute_force_labels(points, width, height):
    """Float64 nearest-seed scan; ties go to the lowest seed index.

    Pixel [y, x] samples the point (x, y). Returns (labels, gap) where
    gap[y, x] is the squared-distance margin between the two nearest
    seeds (inf when only one seed exists); pixels with a tiny gap sit on
    a cell boundary and admit either label.
    """
    pts = np.asarray(points, dtype=np.float64)
    labels = np.zeros((height, width), dtype=np.int64)
    gap = np.full((height, width), np.inf)
    xs = np.arange(width, dtype=np.float64)
    cols = np.arange(width)
    for y in range(height):
        d2 = (xs[:, None] - pts[None, :, 0]) ** 2 + (float(y) - pts[None, :, 1]) ** 2
        order = np.argsort(d2, axis=1, kind="stable")
        best = order[:, 0]
        labels[y] = best + 1
        if pts.shape[0] > 1:
            gap[y] = d2[cols, order[:, 1]] - d2[cols, best]
    return labels, gap


_PIXEL_CACHE = {}


def gemm_labels_f32(points, width, height):
    """Single-precision nearest-seed labels from one matrix product.

    score(p, s) = |s|^2 - 2 p.s orders seeds by distance from pixel p,
    so the row argmin (lowest index on ties) is the nearest seed.
    """
    key = (width, height)
    pix = _PIXEL_CACHE.get(key)
    if pix is None:
        xg, yg = np.meshgrid(np.arange(width, dtype=np.float32),
                             np.arange(height, dtype=np.float32))
        pix = np.column_stack([xg.ravel(), yg.ravel(),
                               np.ones(width * height, dtype=np.float32)])
        _PIXEL_CACHE[key] = pix
    pts = np.asarray(points, dtype=np.float32)
    seed_mat = np.column_stack([-2.0 * pts, (pts ** 2).sum(axis=1)])
    scores = pix @ seed_mat.T
    return (np.argmin(scores, axis=1).astype(np.int64) + 1).reshape(height, width)


# ------------------------------------------------------- polygon helpers

def in_convex_polygon(px, py, vertices, strict=False):
    """Point-in-polygon for a counter-clockwise convex polygon."""
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if cross < 0 or (strict and cross == 0):
            return False
    return True


def monte_carlo_area(vertices, rng, n_samples=200_000):
    """Hit-or-miss polygon area estimate, returned as (area, one sigma)."""
    v = np.asarray(vertices, dtype=np.float64)
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    span = hi - lo
    box = float(span[0] * span[1])
    pts = lo + rng.random((n_samples, 2)) * span
    hits = np.fromiter(
        (in_convex_polygon(x, y, vertices) for x, y in pts),
        dtype=bool, count=n_samples)
    p = hits.mean()
    sigma = box * math.sqrt(max(p * (1.0 - p), 1e-12) / n_samples)
    return p * box, sigma


# ----------------------------------------------------------- assignment

def best_assignment_total(weights):
    """Maximum total weight of a one-to-one row/column assignment.

    Exhaustive bitmask DP; weights below the admissibility threshold must
    already be zeroed, so leaving such a pair unmatched costs nothing.
    """
    w = [list(map(float, row)) for row in weights]
    n_rows = len(w)
    n_cols = len(w[0]) if n_rows else 0
    best = {0: 0.0}
    for row in w:
        nxt = dict(best)
        for mask, total in best.items():
            for j in range(n_cols):
                if not mask & (1 << j):
                    m2 = mask | (1 << j)
                    t2 = total + row[j]
                    if t2 > nxt.get(m2, -1.0):
                        nxt[m2] = t2
        best = nxt
    return max(best.values()) if best else 0.0


def max_matching_count(adjacency):
    """Maximum-cardinality bipartite matching size (augmenting paths)."""
    n_rows = len(adjacency)
    n_cols = len(adjacency[0]) if n_rows else 0
    match_col = [-1] * n_cols

    def augment(r, seen):
        for c in range(n_cols):
            if adjacency[r][c] and not seen[c]:
                seen[c] = True
                if match_col[c] < 0 or augment(match_col[c], seen):
                    match_col[c] = r
                    return True
        return False

    count = 0
    for r in range(n_rows):
        if augment(r, [False] * n_cols):
            count += 1
    return count


# ------------------------------------------------------ ranks, Pearson

def average_ranks(values):
    """1-based ranks with ties replaced by the mean rank of the run."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j + 2) / 2.0  # positions i+1 .. j+1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def pearson_highprec(xs, ys):
    """Pearson r with an exact rational numerator and variance terms."""
    n = len(xs)
    fx = [Fraction(x) for x in xs]
    fy = [Fraction(y) for y in ys]
    mx = sum(fx, Fraction(0)) / n
    my = sum(fy, Fraction(0)) / n
    cov = sum(((a - mx) * (b - my) for a, b in zip(fx, fy)), Fraction(0))
    vx = sum(((a - mx) ** 2 for a in fx), Fraction(0))
    vy = sum(((b - my) ** 2 for b in fy), Fraction(0))
    return float(cov) / math.sqrt(float(vx) * float(vy))


# ----------------------------------------------- rational density/area

def density_fraction(n_cones, width, height, microns_per_pixel,
                     scaling_factor=1000.0):
    """Cone density as an exact rational: N / (h w (mu/s_f)^2)."""
    mu = Fraction(microns_per_pixel)
    sf = Fraction(scaling_factor)
    return Fraction(n_cones) / (Fraction(height) * Fraction(width) * (mu / sf) ** 2)


def mean_area_fraction(pixel_counts, microns_per_pixel):
    """Mean cone area as an exact rational: sum(p mu^2) / N."""
    mu2 = Fraction(microns_per_pixel) ** 2
    total = sum((Fraction(p) * mu2 for p in pixel_counts), Fraction(0))
    return total / len(pixel_counts)


# ----------------------------------------------------- finite difference

def central_diff_jacobian(func, theta, rel_step=1e-6):
    """Central-difference Jacobian of func(theta) -> vector."""
    theta = np.asarray(theta, dtype=np.float64)
    base = np.asarray(func(theta), dtype=np.float64)
    jac = np.zeros((base.size, theta.size))
    for k in range(theta.size):
        h = rel_step * max(1.0, abs(theta[k]))
        up = theta.copy()
        dn = theta.copy()
        up[k] += h
        dn[k] -= h
        jac[:, k] = (np.asarray(func(up)) - np.asarray(func(dn))) / (2.0 * h)
    return jac


# -------------------------------------------------------- lattice count

def hex_site_count(width, height, spacing, margin=1e-6):
    """Closed-form site count of the centered hexagonal layout.

    Rows at pitch spacing*sqrt(3)/2, columns at pitch spacing, both
    centered in the window; odd rows shift by spacing/2 and drop their
    last site when it lands within margin of the right edge.
    """
    dy = spacing * math.sqrt(3.0) / 2.0
    n_rows = max(1, int(height / dy))
    n_cols = max(1, int(width / spacing))
    n_odd = n_rows // 2
    n_even = n_rows - n_odd
    # with ox = (width - (n_cols-1)*spacing)/2, the shifted row's last
    # site sits at width - ox + spacing/2; it survives only strictly
    # inside the margin
    overflow = (width - n_cols * spacing) / 2.0 <= margin
    odd_cols = n_cols - 1 if overflow else n_cols
    return n_even * n_cols + n_odd * odd_cols


# ------------------------------------------------------ flood-fill blobs

def flood_fill_components(binary):
    """4-connected component labels in first-encounter row-major order."""
    grid = np.asarray(binary)
    h, w = grid.shape
    out = np.zeros((h, w), dtype=np.int64)
    nxt = 0
    for y in range(h):
        for x in range(w):
            if grid[y, x] and not out[y, x]:
                nxt += 1
                queue = deque([(y, x)])
                out[y, x] = nxt
                while queue:
                    cy, cx = queue.popleft()
                    for ny, nx_ in ((cy - 1, cx), (cy + 1, cx),
                                    (cy, cx - 1), (cy, cx + 1)):
                        if (0 <= ny < h and 0 <= nx_ < w
                                and grid[ny, nx_] and not out[ny, nx_]):
                            out[ny, nx_] = nxt
                            queue.append((ny, nx_))
    return out


def pixel_count_histogram(labels):
    """Label -> pixel count over nonzero values, one pass in Python."""
    counts = Counter(int(v) for v in np.asarray(labels).ravel() if v != 0)
    return dict(counts)
