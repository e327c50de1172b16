"""Latent-tolerance calibration from planted instances.

The collision tolerance t trades detection against false collisions: it must
cover the core of the latent-space cluster formed by hypotheses fitted from
pure-inlier minimal samples, while staying far below the scale at which
unrelated hypotheses start sharing grid cells. Because the adaptive stopping
rule keeps drawing until a close good pair actually appears, t only needs to
cover the tight core of the cluster, not its heavy tail: minimal fits from
poorly conditioned samples scatter enormously, and chasing them with a large
t floods the filter with false collisions.

This utility measures the cluster directly: it fits and embeds many
pure-inlier hypotheses, keeps the consensus-bearing ones (those that
recover at least half of the generating inliers), and returns a low
quantile of their pairwise l-infinity distances. The ``quantile`` knob sets
the filter's selectivity: higher values produce a smaller, stricter t
(t is the (1 - quantile) quantile of the pairwise distances).
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .embedding import EmbeddingConfig, embed_homography_batch, embed_rigid_batch
from .geometry import residuals_homography, residuals_rigid
from .solvers import MINIMAL_SIZE, degenerate_mask_homography, degenerate_mask_rigid
from .synth import InstanceSpec, generate

# A hypothesis is consensus-bearing when it recovers at least this fraction
# of the inliers it was generated from.
CONSENSUS_GATE = 0.5


def calibrate_tolerance(
    spec: InstanceSpec,
    quantile: float = 0.95,
    embedding: EmbeddingConfig | None = None,
    n_hypotheses: int = 512,
    verify_threshold: float | None = None,
) -> float:
    """Recommended collision tolerance for instances like ``spec``.

    Fits minimal samples drawn purely from the instance's planted inliers,
    embeds the consensus-bearing fits, and returns the (1 - quantile)
    quantile of their pairwise l-infinity latent distances. Higher
    ``quantile`` means a more selective filter (smaller t).

    ``verify_threshold`` is the residual threshold used for the consensus
    gate; it defaults to 3 sigma of the instance noise (or the latent floor
    for noiseless instances).
    """
    if not (0.0 < quantile <= 1.0):
        raise ValueError("quantile must be in (0, 1]")
    if verify_threshold is None:
        verify_threshold = 3.0 * spec.noise_sigma if spec.noise_sigma > 0 else 1e-9
    matches, truth, mask = generate(spec)
    inlier_idx = np.nonzero(mask)[0]
    planted = inlier_idx.size
    rng = np.random.default_rng([spec.seed, 2])
    gamma = MINIMAL_SIZE[spec.problem]
    if embedding is None:
        embedding = EmbeddingConfig(canvas_w=spec.canvas_w, canvas_h=spec.canvas_h, xi=spec.xi)
    kern = _kernels.active

    vecs: list[np.ndarray] = []
    collected = 0
    for attempt in range(100):
        if collected >= n_hypotheses:
            break
        B = n_hypotheses
        sel = rng.choice(inlier_idx, size=(B, gamma))
        dup = np.zeros(B, dtype=bool)
        for i in range(gamma):
            for j in range(i + 1, gamma):
                dup |= sel[:, i] == sel[:, j]
        src = matches.src[sel]
        dst = matches.dst[sel]
        if spec.problem == "homography":
            deg = dup | degenerate_mask_homography(src, dst)
            H, ok = kern.fit_homography_batch(
                np.ascontiguousarray(src[~deg]), np.ascontiguousarray(dst[~deg])
            )
            H = H[ok]
            v, emb_ok = embed_homography_batch(H, embedding)
            H, v = H[emb_ok], v[emb_ok]
            counts = np.array(
                [
                    ((residuals_homography(h, matches.src, matches.dst) <= verify_threshold)
                     & mask).sum()
                    for h in H
                ]
            )
        else:
            deg = dup | degenerate_mask_rigid(src)
            R, t, ok = kern.fit_rigid_batch(
                np.ascontiguousarray(src[~deg]), np.ascontiguousarray(dst[~deg])
            )
            R, t = R[ok], t[ok]
            v = embed_rigid_batch(R, t, embedding)
            counts = np.array(
                [
                    ((residuals_rigid(R[i], t[i], matches.src, matches.dst) <= verify_threshold)
                     & mask).sum()
                    for i in range(R.shape[0])
                ]
            )
        keep = v[counts >= CONSENSUS_GATE * planted] if v.shape[0] else v
        keep = keep[np.isfinite(keep).all(axis=1)]
        vecs.append(keep)
        collected += keep.shape[0]
    else:
        raise RuntimeError("calibration failed to collect enough hypotheses")

    v = np.concatenate(vecs)[:n_hypotheses]
    dists = np.max(np.abs(v[:, None, :] - v[None, :, :]), axis=2)
    iu = np.triu_indices(v.shape[0], k=1)
    return float(np.quantile(dists[iu], 1.0 - quantile))
