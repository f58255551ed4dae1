"""Cone density and mean cone area versus retinal eccentricity.

Density is cones per mm^2 of retinal area: d = N / (h * w * (mpp / sf)^2),
where mpp is microns per pixel and sf (default 1000) rescales microns to
millimeters. Mean cone area stays in um^2: sum(pixels * mpp^2) / N.
Signed eccentricity is in degrees, negative on the nasal side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .errors import (
    DimensionMismatch,
    EmptyInput,
    NonPositiveDimension,
    OutOfRange,
)
from .maskops import InstanceLabelMap, instance_pixel_counts

MODALITIES = ("confocal", "calculated")

DEFAULT_SCALING_FACTOR = 1000.0

MAX_ECCENTRICITY_DEG = 15.0

# images come at integer eccentricities; the 4..5 degree gap between the
# named groups is split down the middle
GROUP_BOUNDARY_DEG = 4.5


class EccentricityGroup(Enum):
    CENTRAL_FOVEA = "CentralFovea"
    PARAFOVEA = "Parafovea"


@dataclass(frozen=True)
class ImageMeta:
    participant_id: str
    modality: str
    eccentricity_deg: float
    microns_per_pixel: float
    width: int
    height: int
    scaling_factor: float = DEFAULT_SCALING_FACTOR

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.microns_per_pixel <= 0:
            raise NonPositiveDimension(f"microns_per_pixel = {self.microns_per_pixel}")
        if self.scaling_factor <= 0:
            raise NonPositiveDimension(f"scaling_factor = {self.scaling_factor}")
        if self.width <= 0 or self.height <= 0:
            raise NonPositiveDimension(f"window {self.width}x{self.height}")
        if abs(self.eccentricity_deg) > MAX_ECCENTRICITY_DEG:
            raise OutOfRange(f"|eccentricity| {abs(self.eccentricity_deg)} > {MAX_ECCENTRICITY_DEG}")


@dataclass(frozen=True)
class DensitySample:
    participant_id: str
    eccentricity_deg: float
    density: float
    mean_area_um2: Optional[float]
    n_cones: int


def cone_density(n_cones: int, width: float, height: float,
                 microns_per_pixel: float,
                 scaling_factor: float = DEFAULT_SCALING_FACTOR) -> float:
    """Cones per mm^2 in a width x height pixel window."""
    if width <= 0 or height <= 0:
        raise NonPositiveDimension(f"window {width}x{height}")
    if microns_per_pixel <= 0:
        raise NonPositiveDimension(f"microns_per_pixel = {microns_per_pixel}")
    if scaling_factor <= 0:
        raise NonPositiveDimension(f"scaling_factor = {scaling_factor}")
    if n_cones < 0:
        raise ValueError(f"n_cones = {n_cones}")
    return n_cones / (height * width * (microns_per_pixel / scaling_factor) ** 2)


def mean_cone_area(pixel_counts: Sequence[int], microns_per_pixel: float) -> float:
    """Mean instance area in um^2 from per-instance pixel counts."""
    if len(pixel_counts) == 0:
        raise EmptyInput("no pixel counts")
    if microns_per_pixel <= 0:
        raise NonPositiveDimension(f"microns_per_pixel = {microns_per_pixel}")
    mu2 = microns_per_pixel * microns_per_pixel
    return math.fsum(p * mu2 for p in pixel_counts) / len(pixel_counts)


def eccentricity_group(eccentricity_deg: float) -> EccentricityGroup:
    r = abs(eccentricity_deg)
    if r > MAX_ECCENTRICITY_DEG:
        raise OutOfRange(f"|eccentricity| {r} > {MAX_ECCENTRICITY_DEG}")
    if r < GROUP_BOUNDARY_DEG:
        return EccentricityGroup.CENTRAL_FOVEA
    return EccentricityGroup.PARAFOVEA


def analyze_image(label_map: InstanceLabelMap, meta: ImageMeta) -> DensitySample:
    """Count instances and reduce one labeled image to a density sample."""
    if (label_map.width, label_map.height) != (meta.width, meta.height):
        raise DimensionMismatch(
            f"map {label_map.width}x{label_map.height} vs meta {meta.width}x{meta.height}"
        )
    counts = instance_pixel_counts(label_map)
    n = len(counts)
    density = cone_density(n, meta.width, meta.height,
                           meta.microns_per_pixel, meta.scaling_factor)
    area = mean_cone_area(list(counts.values()), meta.microns_per_pixel) if n else None
    return DensitySample(
        participant_id=meta.participant_id,
        eccentricity_deg=meta.eccentricity_deg,
        density=density,
        mean_area_um2=area,
        n_cones=n,
    )
