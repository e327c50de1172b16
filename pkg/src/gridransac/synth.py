"""Synthetic planted-model instance generation.

An instance is a match set with a known ground-truth transform: a fraction
omega of the matches are inliers (target = transformed source plus Gaussian
noise per coordinate), the rest are uniform outliers over the target domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import rotation_exp
from .geometry import Homography, MatchSet, Model, RigidMotion
from .solvers import MINIMAL_SIZE, fit_homography_4pt, is_degenerate_homography


@dataclass(frozen=True)
class InstanceSpec:
    """Parameters of one planted instance.

    canvas_w/canvas_h bound the 2D domain (pixels); box is the side length
    of the 3D source cube (length units) and xi the translation bound.
    Homography truths perturb the identity's corner displacements within
    +/- corner_range of the canvas extent.
    """

    problem: str = "homography"
    n_matches: int = 1000
    inlier_rate: float = 0.1
    noise_sigma: float = 1.0
    canvas_w: float = 640.0
    canvas_h: float = 480.0
    box: float = 200.0
    xi: float = 50.0
    corner_range: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.problem not in MINIMAL_SIZE:
            raise ValueError(f"unknown problem {self.problem!r}")
        if not (0.0 < self.inlier_rate <= 1.0):
            raise ValueError("inlier_rate must be in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.n_matches < MINIMAL_SIZE[self.problem]:
            raise ValueError("n_matches below the minimal sample size")

    @property
    def n_inliers(self) -> int:
        return int(round(self.inlier_rate * self.n_matches))


def _model_rng(spec: InstanceSpec) -> np.random.Generator:
    return np.random.default_rng([spec.seed, 0])


def _data_rng(spec: InstanceSpec) -> np.random.Generator:
    return np.random.default_rng([spec.seed, 1])


def planted_model(spec: InstanceSpec) -> Model:
    """The instance's ground-truth transform (a pure function of the seed)."""
    rng = _model_rng(spec)
    if spec.problem == "homography":
        corners = np.array(
            [[0.0, 0.0], [spec.canvas_w, 0.0], [spec.canvas_w, spec.canvas_h], [0.0, spec.canvas_h]]
        )
        scale = np.array([spec.canvas_w, spec.canvas_h]) * spec.corner_range
        for _ in range(1000):
            moved = corners + rng.uniform(-1.0, 1.0, size=(4, 2)) * scale
            if is_degenerate_homography(corners, moved):
                continue
            try:
                return fit_homography_4pt(corners, moved)
            except Exception:
                continue
        raise RuntimeError("failed to generate a non-degenerate planted homography")
    # uniform random rotation via a normalized Gaussian quaternion
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    angle = 2.0 * np.arctan2(np.hypot(np.hypot(x, y), z), abs(w))
    axis = np.array([x, y, z]) * (np.sign(w) if w != 0 else 1.0)
    norm = np.linalg.norm(axis)
    r = axis / norm * angle if norm > 0 else np.zeros(3)
    R = rotation_exp(r)
    t = rng.uniform(-spec.xi, spec.xi, size=3)
    return RigidMotion(R, t)


def generate(spec: InstanceSpec) -> tuple[MatchSet, Model, np.ndarray]:
    """Build the instance. Returns (matches, truth model, inlier mask)."""
    truth = planted_model(spec)
    rng = _data_rng(spec)
    n = spec.n_matches
    n_in = spec.n_inliers

    if spec.problem == "homography":
        src = np.column_stack(
            [rng.uniform(0, spec.canvas_w, size=n), rng.uniform(0, spec.canvas_h, size=n)]
        )
        dst = np.empty_like(src)
        for i in range(n_in):
            dst[i] = truth.transform(src[i])
        dst[:n_in] += rng.normal(0.0, spec.noise_sigma, size=(n_in, 2))
        dst[n_in:, 0] = rng.uniform(0, spec.canvas_w, size=n - n_in)
        dst[n_in:, 1] = rng.uniform(0, spec.canvas_h, size=n - n_in)
    else:
        half = spec.box / 2.0
        src = rng.uniform(-half, half, size=(n, 3))
        dst = np.empty_like(src)
        dst[:n_in] = src[:n_in] @ truth.R.T + truth.t
        dst[:n_in] += rng.normal(0.0, spec.noise_sigma, size=(n_in, 3))
        lo, hi = -half - spec.xi, half + spec.xi
        dst[n_in:] = rng.uniform(lo, hi, size=(n - n_in, 3))

    mask = np.zeros(n, dtype=bool)
    mask[:n_in] = True
    perm = rng.permutation(n)
    return MatchSet(spec.problem, src[perm], dst[perm]), truth, mask[perm]
