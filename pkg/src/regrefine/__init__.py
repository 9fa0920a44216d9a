"""Zero-shot refinement of rigid point-cloud registration.

Feature-poor initial alignments are improved by rendering both clouds
into shared virtual views, fusing geometric descriptors with dense view
features, and robustly aggregating the resulting correspondence sets
into a single rigid transform.
"""

__version__ = "0.1.0"

from .aggregation import (
    AggregationConfig,
    RefinementResult,
    count_inliers,
    finalize_topk,
    reweight_iterate,
    select_best,
    weighted_svd,
)
from .backend import (
    FeatureRequest,
    FileProvider,
    NullProvider,
    SyntheticProvider,
    feature_filename,
    get_provider,
    read_feature_file,
    write_feature_file,
)
from .config import PipelineConfig, default_config, load_config, save_config
from .core import (
    CorrespondenceSet,
    PointCloud,
    RigidTransform,
    SpatialIndex,
    apply_transform,
    compose,
    invert,
    registration_recall,
    rotation_error,
    translation_error,
)
from .correspondence import (
    BANK_LABELS,
    CandidateBank,
    CommonPointSet,
    SideFeatures,
    build_candidate_bank,
    find_common_points,
    match_features,
)
from .descriptors import compute_descriptors, farthest_point_sample, with_keypoints
from .errors import (
    BadMagicError,
    ConfigError,
    DimensionOverflowError,
    EmptyRenderError,
    EstimationError,
    FeatureFormatError,
    InputValidationError,
    ParseError,
    RegRefineError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .features import (
    FeatureMap,
    FeaturePCA,
    PointFeatures,
    aggregate_layer_pairs,
    aggregate_layers,
    fuse_features,
    pca_reduce,
    pca_reduce_pair,
    sample_point_features,
    upsample_bilinear,
)
from .fileio import load_ply, load_pose, save_ply, save_pose
from .pipeline import RegistrationRefiner, refine_many, run_refine
from .projection import (
    CameraIntrinsics,
    DepthMap,
    PixelPointMap,
    auto_frame_pose,
    backproject,
    densify_depth,
    make_view_pairs,
    read_depth_png,
    render_depth,
    write_depth_png,
)
from .report import RefineReport, read_report, report_from_dict, write_report
from .scenes import ScenePair, generate_scene, load_scene, perturb_transform, save_scene

__all__ = [
    "AggregationConfig",
    "BANK_LABELS",
    "BadMagicError",
    "CameraIntrinsics",
    "CandidateBank",
    "CommonPointSet",
    "ConfigError",
    "CorrespondenceSet",
    "DepthMap",
    "DimensionOverflowError",
    "EmptyRenderError",
    "EstimationError",
    "FeatureFormatError",
    "FeatureMap",
    "FeaturePCA",
    "FeatureRequest",
    "FileProvider",
    "InputValidationError",
    "NullProvider",
    "ParseError",
    "PipelineConfig",
    "PixelPointMap",
    "PointCloud",
    "PointFeatures",
    "RefineReport",
    "RefinementResult",
    "RegRefineError",
    "RegistrationRefiner",
    "RigidTransform",
    "ScenePair",
    "SideFeatures",
    "SpatialIndex",
    "SyntheticProvider",
    "TruncatedPayloadError",
    "UnsupportedVersionError",
    "aggregate_layer_pairs",
    "aggregate_layers",
    "apply_transform",
    "auto_frame_pose",
    "backproject",
    "build_candidate_bank",
    "compose",
    "compute_descriptors",
    "count_inliers",
    "default_config",
    "densify_depth",
    "farthest_point_sample",
    "feature_filename",
    "finalize_topk",
    "find_common_points",
    "fuse_features",
    "generate_scene",
    "get_provider",
    "invert",
    "load_config",
    "load_ply",
    "load_pose",
    "load_scene",
    "make_view_pairs",
    "match_features",
    "pca_reduce",
    "pca_reduce_pair",
    "perturb_transform",
    "read_depth_png",
    "read_feature_file",
    "read_report",
    "refine_many",
    "registration_recall",
    "render_depth",
    "report_from_dict",
    "reweight_iterate",
    "rotation_error",
    "run_refine",
    "sample_point_features",
    "save_config",
    "save_ply",
    "save_pose",
    "save_scene",
    "select_best",
    "translation_error",
    "upsample_bilinear",
    "weighted_svd",
    "with_keypoints",
    "write_depth_png",
    "write_feature_file",
    "write_report",
]
