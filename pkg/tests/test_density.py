"""Cone density, mean cone area, eccentricity grouping, image analysis."""

import math

import numpy as np
import pytest

import helpers
from conemosaic import (
    EccentricityGroup,
    ImageMeta,
    InstanceLabelMap,
    analyze_image,
    cone_density,
    eccentricity_group,
    mean_cone_area,
)
from conemosaic.errors import (
    DimensionMismatch,
    EmptyInput,
    NonPositiveDimension,
    OutOfRange,
)


def meta(**kw):
    base = dict(participant_id="S1", modality="confocal", eccentricity_deg=0.0,
                microns_per_pixel=1.0, width=100, height=100)
    base.update(kw)
    return ImageMeta(**base)


# --------------------------------------------------------------- cone_density

def test_density_zero_cones():
    assert cone_density(0, 100, 100, 1.0) == 0.0


def test_density_worked_example():
    # 100 cones on 100x100 px at 1 um/px is 0.01 mm^2, hence 10000 per mm^2
    assert cone_density(100, 100, 100, 1.0) == 10000.0


def test_density_scales_inverse_square_in_resolution():
    assert cone_density(100, 100, 100, 2.0) == 2500.0


@pytest.mark.parametrize("kw", [
    dict(width=0), dict(height=-5), dict(microns_per_pixel=0.0),
    dict(scaling_factor=0.0),
])
def test_density_rejects_nonpositive_inputs(kw):
    args = dict(n_cones=10, width=50, height=50, microns_per_pixel=1.0,
                scaling_factor=1000.0)
    args.update(kw)
    with pytest.raises(NonPositiveDimension):
        cone_density(**args)


def test_density_matches_rational_oracle():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(0, 5000))
        w = int(rng.integers(1, 2000))
        h = int(rng.integers(1, 2000))
        mu = float(rng.uniform(0.25, 8.0))
        sf = float(rng.choice([100.0, 1000.0, 25400.0]))
        got = cone_density(n, w, h, mu, sf)
        want = helpers.density_fraction(n, w, h, mu, sf)
        if n == 0:
            assert got == 0.0
        else:
            assert abs(got - float(want)) <= 1e-12 * float(want)


def test_density_scale_consistency():
    # shrinking the pixel pitch while growing the window leaves density alone
    rng = np.random.default_rng(9)
    for _ in range(50):
        n = int(rng.integers(1, 1000))
        w = float(rng.uniform(10, 500))
        h = float(rng.uniform(10, 500))
        mu = float(rng.uniform(0.5, 4.0))
        k = float(rng.uniform(0.2, 5.0))
        a = cone_density(n, w, h, mu)
        b = cone_density(n, w * k, h * k, mu / k)
        assert b == pytest.approx(a, rel=1e-12)


# ------------------------------------------------------------- mean_cone_area

def test_mean_area_worked_example():
    assert mean_cone_area([10, 20, 30], 2.0) == 80.0


def test_mean_area_single_instance():
    assert mean_cone_area([25], 1.0) == 25.0


def test_mean_area_of_constant_counts():
    counts = [13] * 7
    mu = 1.5
    assert mean_cone_area(counts, mu) == pytest.approx(13 * mu * mu, rel=1e-15)


def test_mean_area_rejects_empty():
    with pytest.raises(EmptyInput):
        mean_cone_area([], 1.0)


def test_mean_area_matches_rational_oracle():
    rng = np.random.default_rng(15)
    for _ in range(200):
        counts = rng.integers(1, 400, size=int(rng.integers(1, 40))).tolist()
        mu = float(rng.uniform(0.25, 8.0))
        got = mean_cone_area(counts, mu)
        want = float(helpers.mean_area_fraction(counts, mu))
        assert abs(got - want) <= 1e-12 * want


def test_mean_area_quadratic_in_resolution():
    counts = [4, 9, 16]
    base = mean_cone_area(counts, 1.0)
    for k in (0.5, 2.0, 3.0):
        assert mean_cone_area(counts, k) == pytest.approx(base * k * k, rel=1e-12)


# -------------------------------------------------------- eccentricity_group

@pytest.mark.parametrize("r,want", [
    (0.0, EccentricityGroup.CENTRAL_FOVEA),
    (7.0, EccentricityGroup.PARAFOVEA),
    (-4.5, EccentricityGroup.PARAFOVEA),
    (4.5, EccentricityGroup.PARAFOVEA),
    (4.49, EccentricityGroup.CENTRAL_FOVEA),
    (-4.49, EccentricityGroup.CENTRAL_FOVEA),
    (-15.0, EccentricityGroup.PARAFOVEA),
    (15.0, EccentricityGroup.PARAFOVEA),
])
def test_grouping(r, want):
    assert eccentricity_group(r) is want


def test_grouping_symmetric_in_sign():
    rng = np.random.default_rng(21)
    for r in rng.uniform(0, 15, size=100):
        assert eccentricity_group(float(r)) is eccentricity_group(float(-r))


@pytest.mark.parametrize("r", [15.01, -16.0, 100.0])
def test_grouping_rejects_out_of_range(r):
    with pytest.raises(OutOfRange):
        eccentricity_group(r)


# ------------------------------------------------------------------ ImageMeta

@pytest.mark.parametrize("kw,exc", [
    (dict(microns_per_pixel=0.0), NonPositiveDimension),
    (dict(scaling_factor=-1.0), NonPositiveDimension),
    (dict(width=0), NonPositiveDimension),
    (dict(height=-3), NonPositiveDimension),
    (dict(eccentricity_deg=15.5), OutOfRange),
    (dict(modality="darkfield"), ValueError),
])
def test_image_meta_validation(kw, exc):
    with pytest.raises(exc):
        meta(**kw)


def test_image_meta_default_scaling_factor():
    assert meta().scaling_factor == 1000.0


# -------------------------------------------------------------- analyze_image

def test_analyze_empty_map():
    m = InstanceLabelMap(np.zeros((100, 100), dtype=np.int32))
    sample = analyze_image(m, meta())
    assert sample.n_cones == 0
    assert sample.density == 0.0
    assert sample.mean_area_um2 is None


def test_analyze_single_instance_example():
    grid = np.zeros((100, 100), dtype=np.int32)
    grid[10:15, 20:25] = 1  # one instance of 25 pixels
    sample = analyze_image(InstanceLabelMap(grid), meta())
    assert sample.n_cones == 1
    assert sample.density == pytest.approx(100.0, rel=1e-12)
    assert sample.mean_area_um2 == pytest.approx(25.0, rel=1e-12)


def test_analyze_dimension_mismatch():
    m = InstanceLabelMap(np.zeros((50, 100), dtype=np.int32))
    with pytest.raises(DimensionMismatch):
        analyze_image(m, meta())


def test_analyze_density_times_area_recovers_count():
    rng = np.random.default_rng(33)
    for _ in range(30):
        w = int(rng.integers(20, 200))
        h = int(rng.integers(20, 200))
        mu = float(rng.uniform(0.5, 4.0))
        n = int(rng.integers(1, min(w, 50)))
        grid = np.zeros((h, w), dtype=np.int32)
        cols = rng.choice(w, size=n, replace=False)
        grid[0, cols] = np.arange(1, n + 1)
        sample = analyze_image(InstanceLabelMap(grid),
                               meta(width=w, height=h, microns_per_pixel=mu))
        area_mm2 = w * h * (mu / 1000.0) ** 2
        assert sample.density * area_mm2 == pytest.approx(n, rel=1e-12)


def test_analyze_hexagonal_mosaic_density():
    from conemosaic import MosaicSpec, generate_mosaic
    from conemosaic.synth import lattice_spacing_px

    target = 10000.0
    spec = MosaicSpec(target_density=target, width=500, height=500,
                      microns_per_pixel=1.0, layout="hexagonal")
    _, label_map, _ = generate_mosaic(spec)
    sample = analyze_image(label_map, meta(width=500, height=500))
    s = lattice_spacing_px(target, 1.0)
    lattice_density = 2.0 / (math.sqrt(3.0) * (s / 1000.0) ** 2)  # sites per mm^2
    assert lattice_density == pytest.approx(target, rel=1e-12)
    assert abs(sample.density - target) <= 0.05 * target
    # the analytic site count must agree with the measured count exactly
    assert sample.n_cones == helpers.hex_site_count(500.0, 500.0, s)
