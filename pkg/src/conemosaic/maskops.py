"""Instance label maps: construction, measurement, rasterization, file I/O.

Grids are numpy arrays of shape (height, width) indexed [y, x]; the pixel
at array position [y, x] is the point (x, y). Label 0 is background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import (
    DimensionMismatch,
    LabelOverflow,
    NonBinaryInput,
    OutOfBoundsCenter,
    ParseError,
    UnsupportedFormat,
)
from .geometry import CircleAnnotation, Point, VoronoiTessellation

MAX_LABEL = 65535  # 16-bit interchange limit

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass
class InstanceLabelMap:
    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2 or a.size == 0:
            raise ValueError(f"label grid must be 2-D and nonempty, got shape {a.shape}")
        if not np.issubdtype(a.dtype, np.integer):
            raise ValueError(f"label grid must be integer, got {a.dtype}")
        if a.min() < 0:
            raise ValueError("labels must be non-negative")
        self.labels = a

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass
class CenterSet:
    points: List[Point]
    labels: Optional[List[int]] = None

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.points):
            raise ValueError("labels and points differ in length")

    def __len__(self):
        return len(self.points)


def connected_components(binary: InstanceLabelMap) -> InstanceLabelMap:
    """Label 4-connected foreground components 1..K in row-major first-encounter order."""
    a = binary.labels
    if a.max(initial=0) > 1:
        raise NonBinaryInput(f"values up to {a.max()} present, expected {{0,1}}")
    raw, k = ndimage.label(a)  # default structure is 4-connectivity
    if k == 0:
        return InstanceLabelMap(np.zeros_like(a, dtype=np.int32))
    flat = raw.ravel()
    ids, first = np.unique(flat, return_index=True)
    nz = ids > 0
    order = np.argsort(first[nz], kind="stable")
    lut = np.zeros(int(ids.max()) + 1, dtype=np.int32)
    lut[ids[nz][order]] = np.arange(1, k + 1, dtype=np.int32)
    return InstanceLabelMap(lut[raw])


def centroids(label_map: InstanceLabelMap) -> CenterSet:
    """Per-label arithmetic mean of member pixel coordinates, labels ascending."""
    a = label_map.labels
    ys, xs = np.nonzero(a)
    if len(ys) == 0:
        return CenterSet([], [])
    vals = a[ys, xs]
    ids = np.unique(vals)
    counts = np.bincount(vals)[ids]
    sx = np.bincount(vals, weights=xs)[ids]
    sy = np.bincount(vals, weights=ys)[ids]
    pts = [Point(x, y) for x, y in zip(sx / counts, sy / counts)]
    return CenterSet(pts, [int(v) for v in ids])


def instance_pixel_counts(label_map: InstanceLabelMap) -> Dict[int, int]:
    ids, counts = np.unique(label_map.labels, return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts) if i != 0}


def rasterize_circles(circles: List[CircleAnnotation], width: int, height: int) -> InstanceLabelMap:
    """Label pixels within each circle; overlaps go to the nearest center, then the lowest index."""
    for k, c in enumerate(circles):
        if not (0 <= c.center.x < width and 0 <= c.center.y < height):
            raise OutOfBoundsCenter(f"circle {k} center {tuple(c.center)} outside {width}x{height}")
    labels = np.zeros((height, width), dtype=np.int32)
    best_d2 = np.full((height, width), np.inf)
    for k, c in enumerate(circles):
        cx, cy = c.center
        r = c.radius
        x0 = max(0, int(math.ceil(cx - r)))
        x1 = min(width - 1, int(math.floor(cx + r)))
        y0 = max(0, int(math.ceil(cy - r)))
        y1 = min(height - 1, int(math.floor(cy + r)))
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1, dtype=np.float64) - cx
        ys = np.arange(y0, y1 + 1, dtype=np.float64) - cy
        d2 = ys[:, None] ** 2 + xs[None, :] ** 2
        win = (d2 <= r * r) & (d2 < best_d2[y0:y1 + 1, x0:x1 + 1])
        labels[y0:y1 + 1, x0:x1 + 1][win] = k + 1
        best_d2[y0:y1 + 1, x0:x1 + 1][win] = d2[win]
    return InstanceLabelMap(labels)


def rasterize_voronoi(tess: VoronoiTessellation, width: int, height: int) -> InstanceLabelMap:
    """Label every pixel with seed_index+1 of its nearest seed (ties to the lowest index).

    Scanline fill of the convex cells, painted in descending seed order so
    that on shared-edge pixels the lowest seed index wins.
    """
    if tess.bounds.width != float(width) or tess.bounds.height != float(height):
        raise DimensionMismatch(f"tessellation bounds {tess.bounds} vs grid {width}x{height}")
    labels = np.zeros((height, width), dtype=np.int32)
    flat = labels.ravel()
    eps = 1e-9
    for k in range(len(tess.cells) - 1, -1, -1):
        verts = tess.cells[k].vertices
        if len(verts) < 3:
            continue
        v = np.asarray(verts, dtype=np.float64)
        vx = v[:, 0]
        vy = v[:, 1]
        y0 = max(0, int(math.ceil(vy.min() - eps)))
        y1 = min(height - 1, int(math.floor(vy.max() + eps)))
        if y1 < y0:
            continue
        rows = np.arange(y0, y1 + 1, dtype=np.float64)
        xmin = np.full(rows.shape, np.inf)
        xmax = np.full(rows.shape, -np.inf)
        nx = np.roll(vx, -1)
        ny = np.roll(vy, -1)
        for i in range(len(verts)):
            lo, hi = (vy[i], ny[i]) if vy[i] <= ny[i] else (ny[i], vy[i])
            m = (rows >= lo - eps) & (rows <= hi + eps)
            if not m.any():
                continue
            dy = ny[i] - vy[i]
            if abs(dy) < 1e-15:
                elo = np.full(int(m.sum()), min(vx[i], nx[i]))
                ehi = np.full(int(m.sum()), max(vx[i], nx[i]))
            else:
                t = np.clip((rows[m] - vy[i]) / dy, 0.0, 1.0)
                elo = ehi = vx[i] + t * (nx[i] - vx[i])
            xmin[m] = np.minimum(xmin[m], elo)
            xmax[m] = np.maximum(xmax[m], ehi)
        a = np.maximum(np.ceil(xmin - eps).astype(np.int64), 0)
        b = np.minimum(np.floor(xmax + eps).astype(np.int64), width - 1)
        good = b >= a
        if not good.any():
            continue
        a = a[good]
        b = b[good]
        lens = b - a + 1
        starts = rows[good].astype(np.int64) * width + a
        idx = np.repeat(starts + lens - lens.cumsum(), lens) + np.arange(lens.sum())
        flat[idx] = k + 1
    return InstanceLabelMap(labels)


# ---------------------------------------------------------------- file I/O

def save_label_map(label_map: InstanceLabelMap, path) -> None:
    """Write a 16-bit single-channel image; .png or .pgm by extension."""
    a = label_map.labels
    top = int(a.max())
    if top > MAX_LABEL:
        raise LabelOverflow(f"max label {top} exceeds {MAX_LABEL}")
    a16 = a.astype(np.uint16)
    name = str(path).lower()
    if name.endswith(".png"):
        Image.fromarray(a16).save(path, format="PNG")
    elif name.endswith(".pgm"):
        _write_pgm(a16, path)
    else:
        raise UnsupportedFormat(f"unsupported extension for {path!r} (use .png or .pgm)")


def load_label_map(path) -> InstanceLabelMap:
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(_PNG_MAGIC):
        try:
            with Image.open(path) as img:
                img.load()
                mode = img.mode
                a = np.asarray(img)
        except Exception as exc:
            raise UnsupportedFormat(f"unreadable PNG {path!r}: {exc}") from exc
        if mode not in ("I;16", "I", "L") or a.ndim != 2:
            raise UnsupportedFormat(f"{path!r}: need single-channel grayscale, got mode {mode}")
        return InstanceLabelMap(a.astype(np.int32))
    if head.startswith(b"P5"):
        return InstanceLabelMap(_read_pgm(path).astype(np.int32))
    raise UnsupportedFormat(f"{path!r}: not a PNG or binary PGM file")


def _write_pgm(a16: np.ndarray, path) -> None:
    h, w = a16.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{MAX_LABEL}\n".encode("ascii"))
        fh.write(a16.astype(">u2").tobytes())


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 2  # past "P5"
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnsupportedFormat(f"{path!r}: truncated PGM header")
        fields.append(data[start:pos])
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise UnsupportedFormat(f"{path!r}: bad PGM header") from exc
    if not (0 < maxval <= MAX_LABEL) or w <= 0 or h <= 0:
        raise UnsupportedFormat(f"{path!r}: bad PGM dimensions or maxval")
    pos += 1  # single whitespace after maxval
    dtype = ">u2" if maxval > 255 else "u1"
    need = w * h * (2 if maxval > 255 else 1)
    raw = data[pos:pos + need]
    if len(raw) != need:
        raise UnsupportedFormat(f"{path!r}: truncated PGM data")
    return np.frombuffer(raw, dtype=dtype).reshape(h, w).astype(np.uint16)


def save_centers_csv(centers: CenterSet, path) -> None:
    """Write `x_px,y_px[,label]` rows; full float precision, LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if centers.labels is not None:
            fh.write("x_px,y_px,label\n")
            for p, lab in zip(centers.points, centers.labels):
                fh.write(f"{float(p.x)!r},{float(p.y)!r},{int(lab)}\n")
        else:
            fh.write("x_px,y_px\n")
            for p in centers.points:
                fh.write(f"{float(p.x)!r},{float(p.y)!r}\n")


def load_centers_csv(path) -> CenterSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file, expected a header", line=1)
    header = lines[0].strip()
    if header == "x_px,y_px":
        with_label = False
    elif header == "x_px,y_px,label":
        with_label = True
    else:
        raise ParseError(f"unexpected header {header!r}", line=1)
    points: List[Point] = []
    labels: List[int] = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != (3 if with_label else 2):
            raise ParseError(f"expected {3 if with_label else 2} fields, got {len(parts)}", line=n)
        try:
            x = float(parts[0])
            y = float(parts[1])
            if with_label:
                labels.append(int(parts[2]))
        except ValueError as exc:
            raise ParseError(str(exc), line=n) from exc
        points.append(Point(x, y))
    return CenterSet(points, labels if with_label else None)
