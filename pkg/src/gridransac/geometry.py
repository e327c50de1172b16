"""Shared geometric vocabulary: matches, transforms, residuals, inlier counting.

Points and matches are plain NumPy arrays: a 2D match set is a pair of
(N, 2) arrays (source, target) in pixels, a 3D match set a pair of (N, 3)
arrays in length units (canonically centimeters). Transforms are immutable
value objects; all operations here are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# |third homogeneous coordinate| at or below this (for a Frobenius-normalized
# matrix) means the point maps near the line at infinity.
EPS_PROJ = 1e-12
EPS_DET = 1e-12
EPS_NORM = 1e-12
ORTHO_TOL = 1e-9

PROBLEMS = ("homography", "rigid3d")


class HomographyAtInfinity(Exception):
    """A point maps too close to the line at infinity to dehomogenize."""


def _frozen_array(a, shape, name):
    a = np.asarray(a, dtype=np.float64)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Homography:
    """A 3x3 projective transform acting on homogeneous 2D points.

    Normalized at construction to unit Frobenius norm with h[2,2] >= 0
    (when it is not negligible), so that equal transforms have equal
    matrices and serialization is canonical.
    """

    h: np.ndarray

    def __post_init__(self):
        h = _frozen_array(self.h, (3, 3), "h")
        norm = float(np.linalg.norm(h))
        if norm == 0.0:
            raise ValueError("homography matrix is zero")
        h = h / norm
        if abs(h[2, 2]) > EPS_NORM and h[2, 2] < 0:
            h = -h
        if abs(np.linalg.det(h)) <= EPS_DET:
            raise ValueError("homography matrix is singular")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def transform(self, p) -> np.ndarray:
        """Map a single 2D point; raises HomographyAtInfinity near the ideal line."""
        p = np.asarray(p, dtype=np.float64)
        x = self.h @ np.array([p[0], p[1], 1.0])
        if abs(x[2]) <= EPS_PROJ:
            raise HomographyAtInfinity(f"point {p} maps near infinity")
        return x[:2] / x[2]


@dataclass(frozen=True)
class RigidMotion:
    """A rotation plus translation in 3D: p -> R @ p + t."""

    R: np.ndarray
    t: np.ndarray
    translation_bound: float | None = None

    def __post_init__(self):
        R = _frozen_array(self.R, (3, 3), "R")
        t = _frozen_array(self.t, (3,), "t")
        if np.linalg.norm(R.T @ R - np.eye(3)) > ORTHO_TOL:
            raise ValueError("R is not orthogonal within tolerance")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValueError("R is not a proper rotation (det != +1)")
        if self.translation_bound is not None:
            if np.max(np.abs(t)) > self.translation_bound:
                raise ValueError("translation exceeds configured bound")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def transform(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return self.R @ p + self.t


Model = Homography | RigidMotion


@dataclass(frozen=True)
class MatchSet:
    """An ordered set of putative correspondences for one problem type."""

    problem: str
    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        d = 2 if self.problem == "homography" else 3
        src = np.ascontiguousarray(self.src, dtype=np.float64)
        dst = np.ascontiguousarray(self.dst, dtype=np.float64)
        if src.ndim != 2 or src.shape[1] != d or src.shape != dst.shape:
            raise ValueError(f"expected matching (N, {d}) arrays, got {src.shape} and {dst.shape}")
        if src.shape[0] == 0:
            raise ValueError("match set is empty")
        if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
            raise ValueError("match coordinates must be finite")
        src.setflags(write=False)
        dst.setflags(write=False)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    def __len__(self) -> int:
        return self.src.shape[0]


def residual(model: Model, p, q) -> float:
    """Euclidean distance between q and the image of p under the model."""
    q = np.asarray(q, dtype=np.float64)
    return float(np.linalg.norm(q - model.transform(p)))


def residuals_homography(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Per-match residuals for a raw 3x3 matrix; +inf where p maps near infinity."""
    w = h[2, 0] * src[:, 0] + h[2, 1] * src[:, 1] + h[2, 2]
    bad = np.abs(w) <= EPS_PROJ
    w = np.where(bad, 1.0, w)
    x = (h[0, 0] * src[:, 0] + h[0, 1] * src[:, 1] + h[0, 2]) / w
    y = (h[1, 0] * src[:, 0] + h[1, 1] * src[:, 1] + h[1, 2]) / w
    r = np.hypot(dst[:, 0] - x, dst[:, 1] - y)
    r[bad] = np.inf
    return r


def residuals_rigid(R: np.ndarray, t: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Per-match residuals for a raw (R, t) pair."""
    mapped = src @ R.T + t
    return np.linalg.norm(dst - mapped, axis=1)


def residuals(model: Model, matches: MatchSet) -> np.ndarray:
    """Per-match residuals; matches mapping near infinity get +inf."""
    if isinstance(model, Homography):
        if matches.problem != "homography":
            raise ValueError("homography model requires a 2D match set")
        return residuals_homography(model.h, matches.src, matches.dst)
    if matches.problem != "rigid3d":
        raise ValueError("rigid model requires a 3D match set")
    return residuals_rigid(model.R, model.t, matches.src, matches.dst)


def count_inliers(model: Model, matches: MatchSet, threshold: float) -> tuple[int, np.ndarray]:
    """Number of matches with residual <= threshold, and the boolean mask.

    Matches that map near infinity under a homography count as outliers.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    mask = residuals(model, matches) <= threshold
    return int(mask.sum()), mask
