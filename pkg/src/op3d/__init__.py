"""Open-pose 3D zero-shot classification toolkit.

Pipeline: project arbitrarily rotated 3D geometry into depth / render / edge
images, score the images against class prompts with a text-image matcher, and
refine the projection angle per class by sign-gradient ascent from a
pose-normalized frame.
"""

from .core3d import (
    CovarianceFrame,
    PointCloud,
    RotationQ,
    TriMesh,
    covariance,
    eigen_frame,
    normalize_to_unit,
    pca_align,
    rotate,
)
from .errors import Op3DError
from .evalkit import LabeledPrediction, MetricsReport, compute_metrics, ensemble_styles, run_baseline
from .iarm import Prediction, RefineConfig, RefineTrace, classify_openpose, grad_sign, refine_angles
from .io import load_geometry, load_off, load_xyz, save_geometry
from .match import (
    DenoiseTrial,
    MatcherHandle,
    MatchScore,
    NoiseSchedule,
    PromptTemplate,
    TemplateBank,
    build_prompt,
    build_template_bank,
    class_probabilities,
    matching_score,
    noised_feature,
    reference_similarity,
    score,
)
from .posegen import DatasetSplit, PoseManifest, generate_openpose_dataset, load_split, sample_rotation
from .project import (
    CameraConfig,
    GrayImage,
    ProjectionStyle,
    ViewAngles,
    VoxelGrid,
    VoxelParams,
    camera_from_angles,
    canny_edges,
    fixed_view_sets,
    project,
    project_pointcloud_depth,
    render_mesh,
)

__version__ = "0.1.0"
