"""Hypothesis embeddings into a fixed-length latent vector.

A homography becomes the 8-tuple of dehomogenized images of the source
canvas corners; a rigid motion becomes axis-angle rotation coordinates
plus the translation rescaled so one latent unit equals one radian.
Closeness in l-infinity distance between latent vectors tracks closeness
of per-match residuals, which is what the collision filter relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import EPS_PROJ, Homography, RigidMotion

LATENT_DIM = {"homography": 8, "rigid3d": 6}

# Default translation-to-angle ratio, in length units per radian.
DEFAULT_RHO = 1.0 / 3.6


class UnstableHypothesis(Exception):
    """A canvas corner maps near infinity; the hypothesis cannot be embedded."""


class DimensionMismatch(Exception):
    """Latent vectors of different dimensions were compared."""


@dataclass(frozen=True)
class EmbeddingConfig:
    """Embedding parameters.

    canvas_w/canvas_h: source-image extent in pixels (homography problems).
    rho: translation-to-angle ratio in length units per radian (rigid).
    xi: translation bound in length units.
    min_corner_spread: fraction of the canvas diagonal below which the
    corner images of a homography count as collapsed. Collapse maps send the
    whole canvas near one point: they can never carry a real consensus set,
    and they pile up on a low-dimensional sheet of the latent space where
    they trigger floods of false collisions. 0 disables the screen.
    """

    canvas_w: float = 640.0
    canvas_h: float = 480.0
    rho: float = DEFAULT_RHO
    xi: float = 100.0
    min_corner_spread: float = 0.05

    def __post_init__(self):
        if not (self.canvas_w > 0 and self.canvas_h > 0 and self.rho > 0 and self.xi > 0):
            raise ValueError("embedding parameters must be positive")
        if self.min_corner_spread < 0:
            raise ValueError("min_corner_spread must be >= 0")

    def corners(self) -> np.ndarray:
        """Source canvas corners in the fixed embedding order."""
        w, h = self.canvas_w, self.canvas_h
        return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


def embed_homography(model: Homography, cfg: EmbeddingConfig) -> np.ndarray:
    """8-vector of corner images (x1, y1, ..., x4, y4) in pixels."""
    v, ok = embed_homography_batch(model.h[None], cfg)
    if not ok[0]:
        raise UnstableHypothesis(
            "a canvas corner maps near infinity or the corner images collapse"
        )
    return v[0]


def embed_homography_batch(h: np.ndarray, cfg: EmbeddingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Corner-image embedding for (B, 3, 3) matrix stacks.

    Returns (vectors (B, 8), ok (B,)); rows with a corner near infinity or
    with collapsed corner images have ok=False and undefined content.
    """
    corners = cfg.corners()
    x = np.einsum("bij,cj->bci", h, np.column_stack([corners, np.ones(4)]))
    w = x[:, :, 2]
    ok = np.all(np.abs(w) > EPS_PROJ, axis=1)
    w = np.where(np.abs(w) > EPS_PROJ, w, 1.0)
    out = np.empty((h.shape[0], 8))
    out[:, 0::2] = x[:, :, 0] / w
    out[:, 1::2] = x[:, :, 1] / w
    if cfg.min_corner_spread > 0:
        floor = cfg.min_corner_spread * float(np.hypot(cfg.canvas_w, cfg.canvas_h))
        spread = np.maximum(
            np.ptp(out[:, 0::2], axis=1), np.ptp(out[:, 1::2], axis=1)
        )
        ok &= spread >= floor
    return out, ok


def _quat_from_matrix_batch(R: np.ndarray) -> np.ndarray:
    """Unit quaternions (w, x, y, z) for (B, 3, 3) rotation stacks (Shepperd)."""
    B = R.shape[0]
    q = np.empty((B, 4))
    tr = R[:, 0, 0] + R[:, 1, 1] + R[:, 2, 2]
    cand = np.stack([tr, R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]], axis=1)
    case = np.argmax(cand, axis=1)

    m = case == 0
    if m.any():
        s = np.sqrt(tr[m] + 1.0) * 2.0
        q[m, 0] = 0.25 * s
        q[m, 1] = (R[m, 2, 1] - R[m, 1, 2]) / s
        q[m, 2] = (R[m, 0, 2] - R[m, 2, 0]) / s
        q[m, 3] = (R[m, 1, 0] - R[m, 0, 1]) / s
    for k, (i, j, l) in enumerate([(0, 1, 2), (1, 2, 0), (2, 0, 1)], start=1):
        m = case == k
        if not m.any():
            continue
        s = np.sqrt(1.0 + R[m, i, i] - R[m, j, j] - R[m, l, l]) * 2.0
        q[m, 0] = (R[m, l, j] - R[m, j, l]) / s
        q[m, 1 + i] = 0.25 * s
        q[m, 1 + j] = (R[m, j, i] + R[m, i, j]) / s
        q[m, 1 + l] = (R[m, l, i] + R[m, i, l]) / s
    return q


def _canonicalize_quat(q: np.ndarray) -> np.ndarray:
    """Force w >= 0 (angle in [0, pi]); at w == 0 make the first nonzero
    vector component positive so the axis sign is deterministic."""
    flip = q[:, 0] < 0
    at_pi = q[:, 0] == 0
    if at_pi.any():
        xyz = q[at_pi, 1:]
        lead = xyz[np.arange(xyz.shape[0]), np.argmax(np.abs(xyz) > 0, axis=1)]
        flip_pi = np.zeros(q.shape[0], dtype=bool)
        flip_pi[at_pi] = lead < 0
        flip = flip | flip_pi
    q = q.copy()
    q[flip] *= -1.0
    return q


def rotation_log_batch(R: np.ndarray) -> np.ndarray:
    """Axis-angle vectors with angle canonicalized to [0, pi], for (B, 3, 3)."""
    q = _canonicalize_quat(_quat_from_matrix_batch(R))
    s = np.linalg.norm(q[:, 1:], axis=1)
    angle = 2.0 * np.arctan2(s, q[:, 0])
    factor = np.where(s > 1e-12, angle / np.where(s > 1e-12, s, 1.0), 2.0)
    return q[:, 1:] * factor[:, None]


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of one rotation matrix; angle in [0, pi]."""
    return rotation_log_batch(np.asarray(R, dtype=np.float64)[None])[0]


def rotation_exp(r) -> np.ndarray:
    """Rotation matrix exp([r]_x) via the Rodrigues formula."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.linalg.norm(r)
    K = np.array([[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]])
    if theta < 1e-8:
        # second-order series keeps orthogonality to machine precision here
        return np.eye(3) + K + 0.5 * (K @ K)
    return np.eye(3) + (np.sin(theta) / theta) * K + ((1.0 - np.cos(theta)) / theta**2) * (K @ K)


def embed_rigid(model: RigidMotion, cfg: EmbeddingConfig) -> np.ndarray:
    """6-vector (r1, r2, r3, t1/rho, t2/rho, t3/rho)."""
    return embed_rigid_batch(model.R[None], model.t[None], cfg)[0]


def embed_rigid_batch(R: np.ndarray, t: np.ndarray, cfg: EmbeddingConfig) -> np.ndarray:
    """Axis-angle + scaled-translation embedding for (B, 3, 3) / (B, 3) stacks."""
    out = np.empty((R.shape[0], 6))
    out[:, :3] = rotation_log_batch(R)
    out[:, 3:] = t / cfg.rho
    return out


def latent_distance(a: np.ndarray, b: np.ndarray) -> float:
    """l-infinity distance between two latent vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"latent dimensions differ: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))
