"""Active-skeleton segmentation of rod-shaped cells in grayscale images.

Cells are modeled as open polylines with per-node radii; fitting evolves a
colony of such skeletons by gradient descent on a four-term energy
(region contrast, curvature, radius homogeneity, inter-cell repulsion).
The package also renders synthetic ground-truth imagery to validate the
optimizer quantitatively.
"""

from .energy import (
    Colony,
    ColonyEnergy,
    DataTerm,
    EnergyBreakdown,
    EnergyParams,
    ImageGrid,
    ZeroWeightError,
    contrast,
    curvature_energy,
    data_energy,
    homogeneity_energy,
    pixel_select,
    repulsion_energy,
    total_energy,
)
from .geometry import (
    Contour,
    DistanceModel,
    InvalidSkeletonError,
    Point2,
    SegmentQuery,
    Skeleton,
    SkeletonNode,
    dilation_contains,
    dilation_outline,
    distance_to_skeleton,
    project_points,
    project_to_segment,
    rasterize_dilation,
)
from .gradients import (
    GradientField,
    fd_gradient,
    grad_curvature,
    grad_data,
    grad_homogeneity,
    grad_repulsion,
    grad_total,
)
from .initializer import (
    BinaryMask,
    MaskTooSmallError,
    PixelChain,
    build_initial_colony,
    build_initial_skeleton,
    medial_axis,
    vectorize,
)
from .io import (
    FormatError,
    load_image,
    load_params,
    load_points,
    load_skeletons,
    save_image,
    save_params,
    save_skeletons,
)
from .measure import (
    CellLocalCoord,
    CellMeasurements,
    assign_points,
    localize,
    measure,
)
from .optimizer import (
    OptimizationError,
    OptimizeOptions,
    OptimizeTrace,
    optimize,
    optimize_eroded,
)
from .synthesis import (
    EvalReport,
    HausdorffResult,
    RenderSettings,
    add_noise,
    evaluate_outlines,
    hausdorff,
    noise_sweep,
    render_synthetic,
    sweep_table,
)

__version__ = "0.1.0"
