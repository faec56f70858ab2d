"""ICP scan matching with closed-form covariance and rematching-aware validity checks."""

from .covariance import (
    CovarianceEstimate,
    HessianReport,
    LsSystem,
    build_p2p_system,
    build_p2plane_system,
    covariance_general,
    covariance_iid,
    hessian,
    solve_ls,
)
from .geometry import RigidTransform, apply_small_motion, apply_transform, exp_motion, log_motion, skew
from .icp import IcpConfig, IcpResult, run_icp, solve_point_to_plane_step, solve_point_to_point_step
from .landscape import (
    fixed_matching_cost,
    polyline_cost,
    sample_landscape,
    true_icp_cost,
    verify_taylor_bound,
)
from .matching import Correspondences, nearest_neighbor_match, reject_pairs
from .montecarlo import TrialConfig, compare_cov, empirical_covariance, run_trials
from .scenes import (
    NoiseModel,
    PointCloud,
    add_noise,
    gen_arc_2d,
    gen_corner_3d,
    gen_plane_wall_3d,
    gen_sphere_patch_3d,
    gen_wall_2d,
    load_cloud,
    save_cloud,
)

__version__ = "0.1.0"
