"""Robust geometric model estimation with constant-time hypothesis filtering.

Classic RANSAC verifies every fitted hypothesis against all matches. Here a
hypothesis is instead embedded into a low-dimensional latent space and hashed
into randomly offset grid tables; only hypotheses that collide with a
previously generated one (two independent minimal samples agreeing on nearly
the same transform) are verified. The adaptive stopping rule is adjusted to
require two good samples instead of one.
"""

from ._kernels import BACKEND
from .embedding import (
    EmbeddingConfig,
    embed_homography,
    embed_rigid,
    latent_distance,
)
from .engine import (
    EstimateResult,
    EstimatorConfig,
    estimate,
    required_iterations_latent,
    required_iterations_vanilla,
)
from .geometry import (
    Homography,
    MatchSet,
    RigidMotion,
    count_inliers,
    residual,
)
from .grid import Collision, GridConfig, RandomGrid, grid_detection_bound
from .solvers import (
    fit_homography_4pt,
    fit_rigid_3pt,
    is_degenerate_homography,
    is_degenerate_rigid,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Collision",
    "EmbeddingConfig",
    "EstimateResult",
    "EstimatorConfig",
    "GridConfig",
    "Homography",
    "MatchSet",
    "RandomGrid",
    "RigidMotion",
    "count_inliers",
    "embed_homography",
    "embed_rigid",
    "estimate",
    "fit_homography_4pt",
    "fit_rigid_3pt",
    "grid_detection_bound",
    "is_degenerate_homography",
    "is_degenerate_rigid",
    "latent_distance",
    "required_iterations_latent",
    "required_iterations_vanilla",
    "residual",
]
