"""Multi-scale histogram of local main orientation: multi-source image registration.

Pipeline: Harris keypoints with size-coupled non-maximum suppression, a
multi-scale averaged-squared-gradient orientation map, equal-area ring/sector
descriptors, Gaussian-pyramid multi-scale matching with consensus outlier
removal, and affine registration.
"""

from .affine import AffineModel, fit_affine, fit_affine_points
from .config import PipelineConfig, apply_overrides, load_config
from .errors import (
    CorruptStreamError,
    FormatError,
    ImageReadError,
    RegistrationError,
    RegistrationFailureError,
    SingularTransformError,
)
from .ggloh import Descriptor, GglohGeometry, describe, describe_batch, geometry
from .harris import Keypoint, cornerness_map, detect, keypoint_array, lnms_ratio
from .ingest import (
    GrayImage,
    MultiBandImage,
    collapse_bands,
    load,
    load_gray,
    normalize_denoise,
    save_png,
    write_rawf,
)
from .matching import (
    ConsensusConfig,
    MatchSet,
    MultiscaleResult,
    consensus_filter,
    match_layer,
    match_multiscale,
)
from .pipeline import PipelineResult, run_pair
from .pmom import (
    GradientField,
    OrientationMap,
    ScaleBank,
    angle2,
    asg_orientation,
    gradients,
    pmom,
)
from .register import (
    RegistrationReport,
    SweepRow,
    intensity_remap,
    model_rmse,
    ncm,
    render,
    rotate_crop,
    scale_down,
    sweep_intensity,
    sweep_rotation,
    sweep_scale,
    warp,
    write_sweep_csv,
)
from .scalespace import (
    LayerDescriptors,
    Pyramid,
    ScaleDescriptorSet,
    build_pyramid,
    downsample2,
    extract_all,
    sigma_for_layer,
)

__version__ = "0.1.0"
