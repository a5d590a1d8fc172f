"""salbench: quantitative benchmarking of 3D surface saliency models."""

__version__ = "0.1.0"

from .geometry import (
    NeighborIndex,
    PointCloud,
    Provenance,
    SaliencyWarning,
    ShapeScale,
    TriangleMesh,
    bounding_sphere,
    build_index,
    estimate_normals,
    gaussian_smooth_field,
    orient_normals_mst,
)
from .descriptor import (
    chi2_cross,
    chi2_distance,
    compute_fpfh_all,
    compute_spfh_all,
    darboux_angles,
    fpfh,
    normalize_blocks,
    spfh,
)
from .models import (
    MODEL_TAGS,
    ModelParams,
    SaliencyMap,
    compute_cs,
    compute_hs,
    compute_ls,
    compute_ms,
    compute_ps,
    compute_rs,
    minmax_normalize,
    principal_projection,
)
from .scanner import (
    CameraPose,
    RangeScan,
    ScanConfig,
    icosahedron_cameras,
    reconstruct_partial_mesh,
    render_scan,
    transfer_ground_truth,
)
from .evaluation import (
    ClassSummary,
    GroundTruth,
    MetricScores,
    aggregate_by_class,
    histogram_match,
    human_performance_curve,
    lcc,
    nss,
    reference_histogram,
    roc_auc,
    wilcoxon_rank_sum,
)
from .meshio import (
    MeshParseError,
    export_colored_map,
    load_ground_truth,
    load_mesh,
    load_scan,
    save_ground_truth,
    save_mesh,
    save_scan,
)
from .bench import (
    BENCH_MODELS,
    DatasetManifest,
    ShapeEntry,
    all_shapes_failed,
    generate_scan_dataset,
    load_manifest,
    run_benchmark,
    run_human_curve,
    save_manifest,
    write_report,
)

__all__ = [
    "__version__",
    # geometry
    "NeighborIndex",
    "PointCloud",
    "Provenance",
    "SaliencyWarning",
    "ShapeScale",
    "TriangleMesh",
    "bounding_sphere",
    "build_index",
    "estimate_normals",
    "gaussian_smooth_field",
    "orient_normals_mst",
    # descriptors
    "chi2_cross",
    "chi2_distance",
    "compute_fpfh_all",
    "compute_spfh_all",
    "darboux_angles",
    "fpfh",
    "normalize_blocks",
    "spfh",
    # saliency models
    "MODEL_TAGS",
    "ModelParams",
    "SaliencyMap",
    "compute_cs",
    "compute_hs",
    "compute_ls",
    "compute_ms",
    "compute_ps",
    "compute_rs",
    "minmax_normalize",
    "principal_projection",
    # range scanner
    "CameraPose",
    "RangeScan",
    "ScanConfig",
    "icosahedron_cameras",
    "reconstruct_partial_mesh",
    "render_scan",
    "transfer_ground_truth",
    # evaluation
    "ClassSummary",
    "GroundTruth",
    "MetricScores",
    "aggregate_by_class",
    "histogram_match",
    "human_performance_curve",
    "lcc",
    "nss",
    "reference_histogram",
    "roc_auc",
    "wilcoxon_rank_sum",
    # mesh and scan files
    "MeshParseError",
    "export_colored_map",
    "load_ground_truth",
    "load_mesh",
    "load_scan",
    "save_ground_truth",
    "save_mesh",
    "save_scan",
    # benchmark driver
    "BENCH_MODELS",
    "DatasetManifest",
    "ShapeEntry",
    "all_shapes_failed",
    "generate_scan_dataset",
    "load_manifest",
    "run_benchmark",
    "run_human_curve",
    "save_manifest",
    "write_report",
]
