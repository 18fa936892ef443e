"""Monocular pedestrian tracking.

Estimates pedestrian state from bounding-box detections of a single
static camera, either directly in the image plane (two baseline Kalman
filters) or in the camera frame through an unconstrained 3D motion model
and a square-root unscented filter, plus the simulation and metric
machinery to compare the two families for accuracy and covariance
consistency.
"""

from .camera import (
    DEPTH_EPSILON,
    CameraIntrinsics,
    ExtentPair,
    ImagePoint,
    Point3,
    Velocity3,
    backproject_point,
    depth_from_height,
    project_extent,
    project_point,
    project_velocity,
)
from .dataio import (
    BoundingBox,
    MotRow,
    SemiAnnotation3D,
    TrackSequence,
    associate_greedy_iou,
    attach_detections,
    build_tracks,
    iou,
    parse_mot_file,
    semi_annotate_3d,
    to_bottom_center,
    to_top_left,
    write_mot_file,
)
from .filters import (
    GaussianEstimate,
    InitConstants2D,
    InitConstants3D,
    SigmaSet,
    bot_init,
    bot_predict,
    bot_update,
    init_2d,
    init_3d,
    joseph_covariance,
    kf_predict,
    kf_update,
    linear_box_estimate,
    project_estimate,
    sqrt_psd,
    ukf_predict,
    ukf_update,
    unscented_kalman_update,
    unscented_transform,
)
from .metrics import EvalSeries, anees, evaluate_track, rmse
from .models import (
    ARParams,
    BoTParams,
    ModelSet2D,
    ModelSet3D,
    NCVParams,
    PedestrianParams,
    ar_discretize,
    bot_measurement_noise,
    bot_process_noise,
    bot_transition_matrix,
    build_model_2d,
    build_model_3d,
    measurement_matrix,
    measurement_noise,
    ncv_discretize,
    project_state,
    psd_from_max_acceleration,
)
from .pipeline import ModelBundle, build_bundle, run_filter, run_track
from .sim import SimConfig, simulate_detections

__version__ = "0.1.0"
