"""Synthetic cone mosaics with known ground truth.

Layouts are derived from the hexagonal lattice whose spacing s gives the
target density d = 2 / (sqrt(3) * s^2) in physical units. jittered-hex
adds uniform per-site offsets of up to jitter_fraction * s per axis;
poisson-disc throws uniform darts with a minimum separation of 0.8 * s,
which saturates a few percent under the hexagonal density. All randomness
comes from a seeded PCG64 generator, so outputs are reproducible across
runs and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .density import DEFAULT_SCALING_FACTOR, DensitySample, cone_density
from .errors import UnresolvableDensity
from .fit import PowerFitParams, RandomEffects, eval_log_density
from .geometry import (
    BOUNDARY,
    BoundingBox,
    Point,
    VoronoiTessellation,
    build_voronoi,
    polygon_area,
)
from .maskops import CenterSet, InstanceLabelMap, rasterize_voronoi

LAYOUTS = ("hexagonal", "jittered-hex", "poisson-disc")

MIN_SPACING_PX = 3.0

POISSON_RADIUS_FACTOR = 0.8

# dart attempts per requested point before giving up on a fuller packing
DART_BUDGET_FACTOR = 300

_EDGE_MARGIN = 1e-6  # seeds must sit strictly inside the window


@dataclass(frozen=True)
class MosaicSpec:
    target_density: float  # cones per mm^2
    width: int
    height: int
    microns_per_pixel: float
    layout: str = "hexagonal"
    jitter_fraction: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.target_density <= 0:
            raise ValueError(f"target_density = {self.target_density}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"window {self.width}x{self.height}")
        if self.microns_per_pixel <= 0:
            raise ValueError(f"microns_per_pixel = {self.microns_per_pixel}")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if not 0.0 <= self.jitter_fraction <= 0.5:
            raise ValueError(f"jitter_fraction = {self.jitter_fraction} outside [0, 0.5]")


def lattice_spacing_px(target_density: float, microns_per_pixel: float) -> float:
    """Hexagonal spacing in pixels that realizes the target density."""
    per_um2 = target_density / 1e6
    s_um = math.sqrt(2.0 / (math.sqrt(3.0) * per_um2))
    return s_um / microns_per_pixel


def _hex_sites(width: float, height: float, s: float) -> np.ndarray:
    dy = s * math.sqrt(3.0) / 2.0
    n_rows = max(1, int(height / dy))
    n_cols = max(1, int(width / s))
    oy = (height - (n_rows - 1) * dy) / 2.0
    ox = (width - (n_cols - 1) * s) / 2.0
    pts = []
    for k in range(n_rows):
        y = oy + k * dy
        shift = 0.5 * s if k % 2 else 0.0
        for m in range(n_cols):
            x = ox + m * s + shift
            if _EDGE_MARGIN < x < width - _EDGE_MARGIN:
                pts.append((x, y))
    return np.asarray(pts, dtype=np.float64)


def _poisson_disc(rng: np.random.Generator, width: float, height: float,
                  radius: float, target_count: int) -> np.ndarray:
    cell = radius / math.sqrt(2.0)
    nx = int(width / cell) + 1
    ny = int(height / cell) + 1
    grid: Dict[Tuple[int, int], Tuple[float, float]] = {}
    pts: List[Tuple[float, float]] = []
    r2 = radius * radius
    budget = DART_BUDGET_FACTOR * max(1, target_count)
    for _ in range(budget):
        if len(pts) >= target_count:
            break
        x = rng.uniform(_EDGE_MARGIN, width - _EDGE_MARGIN)
        y = rng.uniform(_EDGE_MARGIN, height - _EDGE_MARGIN)
        ix = int(x / cell)
        iy = int(y / cell)
        ok = True
        for jx in range(max(0, ix - 2), min(nx, ix + 3)):
            for jy in range(max(0, iy - 2), min(ny, iy + 3)):
                p = grid.get((jx, jy))
                if p is not None and (p[0] - x) ** 2 + (p[1] - y) ** 2 < r2:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            grid[(ix, iy)] = (x, y)
            pts.append((x, y))
    return np.asarray(pts, dtype=np.float64)


def generate_mosaic(spec: MosaicSpec) -> Tuple[CenterSet, InstanceLabelMap, float]:
    """Lay out centers, rasterize their Voronoi cells, report the achieved density."""
    s = lattice_spacing_px(spec.target_density, spec.microns_per_pixel)
    if s < MIN_SPACING_PX:
        raise UnresolvableDensity(
            f"target density {spec.target_density:g}/mm^2 needs spacing {s:.3f} px, "
            f"below the minimum spacing of {MIN_SPACING_PX:g} px at "
            f"{spec.microns_per_pixel:g} um/px"
        )
    w = float(spec.width)
    h = float(spec.height)
    if spec.layout == "hexagonal":
        pts = _hex_sites(w, h, s)
    elif spec.layout == "jittered-hex":
        pts = _hex_sites(w, h, s)
        rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
        jitter = rng.uniform(-1.0, 1.0, size=pts.shape) * (spec.jitter_fraction * s)
        pts = np.clip(pts + jitter, _EDGE_MARGIN, [w - _EDGE_MARGIN, h - _EDGE_MARGIN])
    else:
        area_mm2 = w * h * (spec.microns_per_pixel / DEFAULT_SCALING_FACTOR) ** 2
        target_count = max(1, round(spec.target_density * area_mm2))
        rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
        pts = _poisson_disc(rng, w, h, POISSON_RADIUS_FACTOR * s, target_count)

    points = [Point(float(x), float(y)) for x, y in pts]
    centers = CenterSet(points, list(range(1, len(points) + 1)))
    tess = build_voronoi(points, BoundingBox(w, h))
    label_map = rasterize_voronoi(tess, spec.width, spec.height)
    achieved = cone_density(len(points), spec.width, spec.height, spec.microns_per_pixel)
    return centers, label_map, achieved


def interior_mean_cell_area_um2(tess: VoronoiTessellation,
                                microns_per_pixel: float) -> Optional[float]:
    """Mean area of cells not touching the window edge; None if every cell does."""
    mu2 = microns_per_pixel * microns_per_pixel
    areas = [polygon_area(c.vertices) * mu2
             for c in tess.cells
             if c.ridges and all(nb != BOUNDARY for _, nb in c.ridges)]
    if not areas:
        return None
    return math.fsum(areas) / len(areas)


def generate_profile(params: PowerFitParams,
                     effects: Dict[str, RandomEffects],
                     r_grid: Sequence[float],
                     width: int, height: int, microns_per_pixel: float,
                     noise_sigma: float = 0.0,
                     rng_seed: int = 0,
                     scaling_factor: float = DEFAULT_SCALING_FACTOR) -> List[DensitySample]:
    """Density samples drawn from the power-law model on a window of given size.

    One sample per (participant, grid point); noise_sigma adds Gaussian
    noise in log space. Cone counts and mean areas are filled in to keep
    the records loadable everywhere a DensitySample is.
    """
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    area_mm2 = width * height * (microns_per_pixel / scaling_factor) ** 2
    window_um2 = width * height * microns_per_pixel ** 2
    out: List[DensitySample] = []
    for pid in sorted(effects):
        eff = effects[pid]
        for r in r_grid:
            ln_d = eval_log_density(params, eff, float(r))
            if noise_sigma > 0.0:
                ln_d += noise_sigma * rng.standard_normal()
            d = math.exp(ln_d)
            n = max(1, round(d * area_mm2))
            out.append(DensitySample(
                participant_id=pid,
                eccentricity_deg=float(r),
                density=d,
                mean_area_um2=window_um2 / n,
                n_cones=n,
            ))
    return out
