"""Cone photoreceptor mosaic analysis.

Voronoi geometry for center annotations, instance-mask operations and
I/O, segmentation and detection metrics, density and mean-area profiles
versus eccentricity, asymmetric power-law fitting with a two-stage
mixed-effects scheme, and synthetic mosaics with known ground truth.
"""

from . import errors
from .density import (
    DensitySample,
    EccentricityGroup,
    ImageMeta,
    analyze_image,
    cone_density,
    eccentricity_group,
    mean_cone_area,
)
from .fit import (
    FitReport,
    PowerFitParams,
    RandomEffects,
    VarianceComponents,
    eval_log_density,
    fit_fixed,
    fit_two_stage,
    predict_curve,
    rescale_log_base,
    residuals_jacobian,
)
from .geometry import (
    BOUNDARY,
    BoundingBox,
    CircleAnnotation,
    Point,
    VoronoiCell,
    VoronoiTessellation,
    build_voronoi,
    closest_ridge_midpoint_circle,
    closest_vertex_circle,
    polygon_area,
)
from .maskops import (
    CenterSet,
    InstanceLabelMap,
    centroids,
    connected_components,
    instance_pixel_counts,
    load_centers_csv,
    load_label_map,
    rasterize_circles,
    rasterize_voronoi,
    save_centers_csv,
    save_label_map,
)
from .metrics import (
    CorrelationReport,
    SegEvalReport,
    aggregate_overlap,
    correlations,
    detection_metrics,
    match_instances,
    pearson,
    spearman,
)
from .synth import (
    MosaicSpec,
    generate_mosaic,
    generate_profile,
    interior_mean_cell_area_um2,
    lattice_spacing_px,
)

__version__ = "0.1.0"
