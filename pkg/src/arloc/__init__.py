"""Indoor localization and AR display: Wi-Fi subarea matching, keypoint
retrieval with distance-ratio compensation, and view-frustum visibility."""

from .errors import (
    DatabaseFormatError,
    DatabaseVersionError,
    DegenerateFingerprintError,
    DegenerateGeometryError,
    InsufficientMatchesError,
    NoCandidateError,
)
from .fingerprints import (
    ClusterConfig,
    Fingerprint,
    align,
    build_subareas,
    cosine_similarity,
    locate_subarea,
    medoid,
)
from .mapmodel import IndoorMap, ReferencePoint, Subarea, VirtualObject, make_grid_map, nearest_rp
from .pipeline import Localizer, LocalizationResult, Method, Query, evaluate, localize
from .pose import (
    EyePose,
    LocalPose,
    PoseConfig,
    ViewFrustum,
    build_frustum,
    eye_pose,
    eye_pose_at,
    local_to_world,
    to_local,
    visible_objects,
)
from .synth import SynthConfig, gen_environment, gen_trials, project_view, synth_world
from .vision import (
    Keypoint,
    KeypointSet,
    MatchConfig,
    MatchPair,
    RankedImage,
    distance_ratio,
    image_similarity,
    match_keypoints,
    rank_images,
    select_rp,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
