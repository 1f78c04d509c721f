"""Iris biometric uniqueness and pigmentation screening toolkit."""

from .imaging import (
    IrisBoundaries,
    clahe,
    load_png,
    resize,
    rotate,
    save_png,
    to_grayscale,
    unwrap_polar,
    white_balance,
    wrap_cartesian,
)
from .segmentation import (
    AmbiguousCandidatesError,
    BoundarySpec,
    DeviationExceededError,
    NoBoundariesError,
    SegmentationError,
    min_enclosing_circle,
    otsu_threshold,
    segment_iris,
    trace_contours,
)
from .encoding import GaborParams, IrisCode, encode, encode_image, log_gabor_row, normalize
from .matching import (
    HdDistributions,
    MatchScore,
    ThresholdReport,
    UniquenessReport,
    best_match,
    build_distributions,
    hamming,
    shift_code,
    sweep_threshold,
    uniqueness_screen,
)
from .pipeline import (
    DatasetManifest,
    PipelineConfig,
    approximate_boundaries,
    augment_rotations,
    coverage_gate,
    hole_punch_variants,
    inpaint,
    label_color_class,
    run_pipeline,
)
from .colors import (
    ColorComposition,
    Palette,
    PcaModel,
    distance_analysis,
    ilr_transform,
    pca_fit,
    pca_project,
    quantify_colors,
)

__version__ = "0.1.0"
