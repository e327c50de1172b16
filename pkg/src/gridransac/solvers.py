"""Minimal-sample model fitting and degeneracy screening.

Homographies come from the normalized 4-point DLT (Hartley normalization,
null vector of the 8x9 system by SVD); rigid motions from Arun's 3-point
least-squares alignment with the standard reflection correction.
"""

from __future__ import annotations

import numpy as np

from .geometry import Homography, RigidMotion

# Relative collinearity threshold: a point triple is degenerate when the
# perpendicular distance of one point from the line through the other two
# is at most EPS_COLL times the triple's span.
EPS_COLL = 1e-3

# Relative smallest-singular-value cutoff for the DLT system.
EPS_RANK = 1e-9

MINIMAL_SIZE = {"homography": 4, "rigid3d": 3}


class DegenerateSample(Exception):
    """The minimal sample cannot determine a model (rank-deficient geometry)."""


def _triple_collinear(a, b, c, eps: float) -> bool:
    ab, ac, bc = b - a, c - a, c - b
    span = max(np.linalg.norm(ab), np.linalg.norm(ac), np.linalg.norm(bc))
    if span == 0.0:
        return True
    # 2 * triangle area / longest side = height of the triangle
    area2 = abs(ab[0] * ac[1] - ab[1] * ac[0]) if a.shape[0] == 2 else np.linalg.norm(np.cross(ab, ac))
    return area2 / span <= eps * span


def is_degenerate_homography(src, dst, eps: float = EPS_COLL) -> bool:
    """True when any 3 of the 4 points are (near-)collinear on either side."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    for pts in (src, dst):
        for skip in range(4):
            idx = [i for i in range(4) if i != skip]
            if _triple_collinear(pts[idx[0]], pts[idx[1]], pts[idx[2]], eps):
                return True
    return False


def is_degenerate_rigid(src, eps: float = EPS_COLL) -> bool:
    """True when the 3 source points are (near-)collinear or duplicated."""
    src = np.asarray(src, dtype=np.float64)
    return _triple_collinear(src[0], src[1], src[2], eps)


def _hartley_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin and mean distance to sqrt(2)."""
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(pts - centroid, axis=1))
    s = np.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def fit_homography_4pt(src, dst) -> Homography:
    """Fit an exact homography to 4 correspondences via the normalized DLT.

    Raises DegenerateSample when the linear system is rank-deficient
    (near-collinear point triples on either side).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != (4, 2) or dst.shape != (4, 2):
        raise ValueError("fit_homography_4pt expects (4, 2) arrays")
    tp = _hartley_transform(src)
    tq = _hartley_transform(dst)
    sp = src * tp[0, 0] + tp[:2, 2]
    sq = dst * tq[0, 0] + tq[:2, 2]

    a = np.zeros((8, 9))
    a[0::2, 0] = sp[:, 0]
    a[0::2, 1] = sp[:, 1]
    a[0::2, 2] = 1.0
    a[0::2, 6] = -sq[:, 0] * sp[:, 0]
    a[0::2, 7] = -sq[:, 0] * sp[:, 1]
    a[0::2, 8] = -sq[:, 0]
    a[1::2, 3] = sp[:, 0]
    a[1::2, 4] = sp[:, 1]
    a[1::2, 5] = 1.0
    a[1::2, 6] = -sq[:, 1] * sp[:, 0]
    a[1::2, 7] = -sq[:, 1] * sp[:, 1]
    a[1::2, 8] = -sq[:, 1]

    _, s, vt = np.linalg.svd(a)
    if s[7] <= EPS_RANK * s[0]:
        raise DegenerateSample("DLT system is rank-deficient")
    hn = vt[8].reshape(3, 3)
    h = np.linalg.inv(tq) @ hn @ tp
    try:
        return Homography(h)
    except ValueError as exc:
        raise DegenerateSample(f"fitted homography is unusable: {exc}") from None


def fit_rigid_3pt(src, dst) -> RigidMotion:
    """Least-squares rigid motion over 3 point pairs (Arun's method).

    det(R) = +1 is enforced by flipping the singular vector of the smallest
    singular value when the raw solution is a reflection. Raises
    DegenerateSample for collinear source points.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != (3, 3) or dst.shape != (3, 3):
        raise ValueError("fit_rigid_3pt expects (3, 3) arrays")
    if is_degenerate_rigid(src):
        raise DegenerateSample("source points are collinear")
    cp = src.mean(axis=0)
    cq = dst.mean(axis=0)
    cov = (src - cp).T @ (dst - cq)
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    flip = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = vt.T @ flip @ u.T
    t = cq - R @ cp
    return RigidMotion(R, t)


def fit_homography_lsq(src, dst) -> Homography:
    """Least-squares homography over N >= 4 correspondences (normalized DLT).

    Used to polish a consensus set: the algebraic-error minimizer over all
    inliers averages out the per-point noise that a minimal fit interpolates.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = src.shape[0]
    if src.ndim != 2 or src.shape[1] != 2 or src.shape != dst.shape or n < 4:
        raise ValueError("fit_homography_lsq expects matching (N >= 4, 2) arrays")
    tp = _hartley_transform(src)
    tq = _hartley_transform(dst)
    sp = src * tp[0, 0] + tp[:2, 2]
    sq = dst * tq[0, 0] + tq[:2, 2]

    a = np.zeros((2 * n, 9))
    a[0::2, 0] = sp[:, 0]
    a[0::2, 1] = sp[:, 1]
    a[0::2, 2] = 1.0
    a[0::2, 6] = -sq[:, 0] * sp[:, 0]
    a[0::2, 7] = -sq[:, 0] * sp[:, 1]
    a[0::2, 8] = -sq[:, 0]
    a[1::2, 3] = sp[:, 0]
    a[1::2, 4] = sp[:, 1]
    a[1::2, 5] = 1.0
    a[1::2, 6] = -sq[:, 1] * sp[:, 0]
    a[1::2, 7] = -sq[:, 1] * sp[:, 1]
    a[1::2, 8] = -sq[:, 1]

    # at n = 4 the reduced SVD has no row for the null space; take the full one
    _, s, vt = np.linalg.svd(a, full_matrices=(2 * n < 9))
    if s[7] <= EPS_RANK * s[0]:
        raise DegenerateSample("DLT system is rank-deficient")
    hn = vt[8].reshape(3, 3)
    h = np.linalg.inv(tq) @ hn @ tp
    try:
        return Homography(h)
    except ValueError as exc:
        raise DegenerateSample(f"fitted homography is unusable: {exc}") from None


def fit_rigid_lsq(src, dst) -> RigidMotion:
    """Least-squares rigid motion over N >= 3 point pairs (Arun's method)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = src.shape[0]
    if src.ndim != 2 or src.shape[1] != 3 or src.shape != dst.shape or n < 3:
        raise ValueError("fit_rigid_lsq expects matching (N >= 3, 3) arrays")
    cp = src.mean(axis=0)
    cq = dst.mean(axis=0)
    cov = (src - cp).T @ (dst - cq)
    u, s, vt = np.linalg.svd(cov)
    if s[1] <= EPS_RANK * max(s[0], 1.0):
        raise DegenerateSample("source points are collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    flip = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = vt.T @ flip @ u.T
    t = cq - R @ cp
    return RigidMotion(R, t)


# --- vectorized degeneracy screens used by the estimation engine ---


def _collinear_mask_triples(a, b, c, eps: float) -> np.ndarray:
    """Boolean mask over stacked triples (B, dim) x3."""
    ab, ac, bc = b - a, c - a, c - b
    span = np.maximum(
        np.linalg.norm(ab, axis=1),
        np.maximum(np.linalg.norm(ac, axis=1), np.linalg.norm(bc, axis=1)),
    )
    if a.shape[1] == 2:
        area2 = np.abs(ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    else:
        area2 = np.linalg.norm(np.cross(ab, ac), axis=1)
    safe = np.where(span > 0, span, 1.0)
    return (area2 / safe <= eps * span) | (span == 0)


def degenerate_mask_homography(src, dst, eps: float = EPS_COLL) -> np.ndarray:
    """Vectorized is_degenerate_homography over (B, 4, 2) sample stacks."""
    mask = np.zeros(src.shape[0], dtype=bool)
    for pts in (src, dst):
        for skip in range(4):
            idx = [i for i in range(4) if i != skip]
            mask |= _collinear_mask_triples(pts[:, idx[0]], pts[:, idx[1]], pts[:, idx[2]], eps)
    return mask


def degenerate_mask_rigid(src, eps: float = EPS_COLL) -> np.ndarray:
    """Vectorized is_degenerate_rigid over (B, 3, 3) sample stacks."""
    return _collinear_mask_triples(src[:, 0], src[:, 1], src[:, 2], eps)
