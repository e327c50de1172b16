"""Pure-NumPy kernel backend.

Semantically identical to the compiled backend; used as the import-time
fallback and as the reference side in cross-backend tests.
"""

from __future__ import annotations

import numpy as np

from ..grid import hash_cells_batch

_SQRT2 = np.sqrt(2.0)
_EPS_RANK = 1e-9


def normalize_h_batch(h: np.ndarray) -> np.ndarray:
    """Frobenius-normalize matrix stacks in place, fixing the h[2,2] sign."""
    norms = np.linalg.norm(h.reshape(h.shape[0], 9), axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    h /= norms[:, None, None]
    sign = np.where(h[:, 2, 2] < -1e-12, -1.0, 1.0)
    h *= sign[:, None, None]
    return h


def fit_homography_batch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized 4-point DLT over (B, 4, 2) sample stacks.

    Returns (H (B, 3, 3) Frobenius-normalized, ok (B,) bool). ok is False for
    rank-deficient or numerically unusable samples; their H rows are undefined.
    """
    B = src.shape[0]
    H = np.zeros((B, 3, 3))
    ok = np.zeros(B, dtype=bool)
    if B == 0:
        return H, ok

    cp = src.mean(axis=1)
    cq = dst.mean(axis=1)
    dp = np.linalg.norm(src - cp[:, None, :], axis=2).mean(axis=1)
    dq = np.linalg.norm(dst - cq[:, None, :], axis=2).mean(axis=1)
    usable = (dp > 0) & (dq > 0)
    sp = _SQRT2 / np.where(usable, dp, 1.0)
    sq = _SQRT2 / np.where(usable, dq, 1.0)

    nsrc = (src - cp[:, None, :]) * sp[:, None, None]
    ndst = (dst - cq[:, None, :]) * sq[:, None, None]

    a = np.zeros((B, 8, 9))
    px, py = nsrc[:, :, 0], nsrc[:, :, 1]
    qx, qy = ndst[:, :, 0], ndst[:, :, 1]
    a[:, 0::2, 0] = px
    a[:, 0::2, 1] = py
    a[:, 0::2, 2] = 1.0
    a[:, 0::2, 6] = -qx * px
    a[:, 0::2, 7] = -qx * py
    a[:, 0::2, 8] = -qx
    a[:, 1::2, 3] = px
    a[:, 1::2, 4] = py
    a[:, 1::2, 5] = 1.0
    a[:, 1::2, 6] = -qy * px
    a[:, 1::2, 7] = -qy * py
    a[:, 1::2, 8] = -qy

    try:
        _, s, vt = np.linalg.svd(a)
        hn = vt[:, 8, :].reshape(B, 3, 3)
        rank_ok = s[:, 7] > _EPS_RANK * s[:, 0]
    except np.linalg.LinAlgError:
        hn = np.zeros((B, 3, 3))
        rank_ok = np.zeros(B, dtype=bool)
        for i in range(B):
            try:
                _, si, vti = np.linalg.svd(a[i])
                hn[i] = vti[8].reshape(3, 3)
                rank_ok[i] = si[7] > _EPS_RANK * si[0]
            except np.linalg.LinAlgError:
                pass

    # H = inv(Tq) @ Hn @ Tp with similarity normalizers Tp, Tq
    tp = np.zeros((B, 3, 3))
    tp[:, 0, 0] = sp
    tp[:, 1, 1] = sp
    tp[:, 0, 2] = -sp * cp[:, 0]
    tp[:, 1, 2] = -sp * cp[:, 1]
    tp[:, 2, 2] = 1.0
    tq_inv = np.zeros((B, 3, 3))
    tq_inv[:, 0, 0] = 1.0 / sq
    tq_inv[:, 1, 1] = 1.0 / sq
    tq_inv[:, 0, 2] = cq[:, 0]
    tq_inv[:, 1, 2] = cq[:, 1]
    tq_inv[:, 2, 2] = 1.0
    H = tq_inv @ hn @ tp

    ok = usable & rank_ok & np.isfinite(H).all(axis=(1, 2))
    H = normalize_h_batch(H)
    # reject matrices that are singular after normalization; they cannot be
    # inverted and their transforms collapse the plane
    with np.errstate(all="ignore"):
        ok &= np.abs(np.linalg.det(np.where(ok[:, None, None], H, np.eye(3)))) > 1e-12
    return H, ok


def fit_rigid_batch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arun's 3-point rigid alignment over (B, 3, 3) sample stacks.

    Returns (R (B, 3, 3), t (B, 3), ok (B,) bool) with det(R) = +1 enforced
    by the reflection correction.
    """
    B = src.shape[0]
    if B == 0:
        return np.zeros((0, 3, 3)), np.zeros((0, 3)), np.zeros(0, dtype=bool)
    cp = src.mean(axis=1)
    cq = dst.mean(axis=1)
    cov = np.einsum("bki,bkj->bij", src - cp[:, None, :], dst - cq[:, None, :])
    try:
        u, s, vt = np.linalg.svd(cov)
        svd_ok = np.ones(B, dtype=bool)
    except np.linalg.LinAlgError:
        u = np.zeros((B, 3, 3))
        s = np.zeros((B, 3))
        vt = np.zeros((B, 3, 3))
        svd_ok = np.zeros(B, dtype=bool)
        for i in range(B):
            try:
                u[i], s[i], vt[i] = np.linalg.svd(cov[i])
                svd_ok[i] = True
            except np.linalg.LinAlgError:
                pass
    v = vt.transpose(0, 2, 1)
    ut = u.transpose(0, 2, 1)
    d = np.sign(np.linalg.det(v @ ut))
    d = np.where(d == 0, 1.0, d)
    flip = v.copy()
    flip[:, :, 2] *= d[:, None]
    R = flip @ ut
    t = cq - np.einsum("bij,bj->bi", R, cp)
    ok = svd_ok & np.isfinite(R).all(axis=(1, 2)) & np.isfinite(t).all(axis=1)
    return R, t, ok


def grid_insert_batch(grid, vecs, ids, models, skip):
    """Sequentially insert a chunk of latent vectors into the grid tables.

    Mirrors RandomGrid.insert_and_check item by item: per item the tables are
    scanned in order, the first tolerance-passing collision is reported, and
    the vector overwrites every slot. Items with skip != 0 are not inserted.

    Returns (positions, tables, existing_ids, distances, existing_models).
    """
    cfg = grid.config
    B = vecs.shape[0]
    z = np.floor((vecs[None, :, :] + grid.offsets[:, None, :]) / cfg.c).astype(np.int64)
    slots = hash_cells_batch(z, cfg.table_bits)  # (L, B)

    out_pos, out_table, out_id, out_dist, out_model = [], [], [], [], []
    gids, gvecs, gmodels = grid.ids, grid.vecs, grid.models
    stats = grid.stats
    store_models = gmodels is not None
    for i in range(B):
        if skip[i]:
            continue
        v = vecs[i]
        stats.insertions += 1
        found = False
        for l in range(cfg.L):
            s = slots[l, i]
            if gids[l, s] >= 0:
                stats.cell_collisions += 1
                if not found:
                    dist = float(np.max(np.abs(v - gvecs[l, s])))
                    if dist < cfg.t:
                        stats.tolerance_passing += 1
                        found = True
                        out_pos.append(i)
                        out_table.append(l)
                        out_id.append(int(gids[l, s]))
                        out_dist.append(dist)
                        if store_models:
                            out_model.append(gmodels[l, s].copy())
            gids[l, s] = ids[i]
            gvecs[l, s] = v
            if store_models:
                gmodels[l, s] = models[i]
    mdim = grid.model_dim
    return (
        np.array(out_pos, dtype=np.int64),
        np.array(out_table, dtype=np.int64),
        np.array(out_id, dtype=np.int64),
        np.array(out_dist, dtype=np.float64),
        np.array(out_model, dtype=np.float64).reshape(len(out_pos), mdim),
    )
