"""Weak-supervision pseudo labels traced through four extreme points."""
from .fgpem import (
    Contour,
    ExtremePoints,
    FgpemOptions,
    extract_extreme_points,
    fgpem_generate,
    fill_contour,
    initial_pseudo_label,
    trace_contour,
)
from .metrics import ConfusionCounts, EvalReport, confusion_counts, dice, evaluate_dataset, iou, mask_iou
from .preprocess import CostMatrix, GradientMap, build_cost_matrix, clahe, sobel_gradient
from .raster import (
    Point,
    RasterError,
    read_f32_raster,
    read_raster,
    resize_bilinear,
    threshold_mask,
    write_f32_raster,
    write_mask,
)
from .refine import (
    LabelRecord,
    RefineSchedule,
    RefineSession,
    plan_schedule,
    run_refinement,
    surrogate_feature_provider,
    update_labels,
)
from .tracing import PixelPath, dijkstra_path, straight_segment

__version__ = "0.1.0"
