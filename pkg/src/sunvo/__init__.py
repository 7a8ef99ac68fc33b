"""Stereo visual odometry with absolute sun-direction drift correction.

Sliding-window bundle adjustment over stereo feature tracks, augmented with
unit-vector sun measurements that anchor absolute orientation and suppress
heading drift.  Everything runs on synthetic or file-supplied data; there is
no image processing here.
"""

from .camera import (
    BehindCameraError,
    NearInfiniteDepthError,
    StereoIntrinsics,
    StereoObservation,
    project,
    project_jacobian,
    triangulate,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    RunConfig,
    config_from_dict,
    load_config,
)
from .frontend import (
    DegenerateSampleError,
    InitializationError,
    RansacConfig,
    align_three_points,
    ransac_interframe,
)
from .geometry import (
    AzZen,
    LogMapSingularError,
    Pose,
    Rotation,
    azzen_from_unitvec,
    level_camera_pose,
    se3_exp,
    se3_log,
    transform_point,
    unitvec_from_azzen,
)
from .metrics import (
    MetricsAlignmentError,
    TrajectoryMetrics,
    armse,
    evaluate,
    final_drift,
    path_length,
)
from .montecarlo import monte_carlo
from .pipeline import PipelineAbort, RunStats, Trajectory, run, run_with_stats
from .solver import (
    SolveReport,
    SolverOptions,
    SolverSingularError,
    WindowEstimate,
    WindowProblem,
    reprojection_residual,
    solve_window,
    sun_residual,
    total_cost,
)
from .sun import (
    EphemerisQuery,
    EphemerisRangeError,
    SunMeasurement,
    SunPrior,
    azimuth_only,
    bimodal_measurement,
    gate_measurement,
    oracle_measurement,
    predict_sun,
    solar_azimuth_elevation,
    solar_ephemeris,
    vo_prior_disambiguate,
)
from .tracks import (
    InfeasibleSceneError,
    SyntheticWorldConfig,
    TrackFileError,
    TrackTable,
    TrajectorySegment,
    generate_synthetic,
    load_sun_detections,
    load_tracks,
    save_sun_detections,
    save_tracks,
)
from .trajio import TrajectoryFileError, load_trajectory, save_trajectory

__version__ = "1.0.0"
