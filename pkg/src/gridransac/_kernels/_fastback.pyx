# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

Same contracts as pyback: normalized 4-point DLT and Arun 3-point rigid
fitting over sample batches, plus the sequential insert-and-check loop over
the randomly offset grid tables. The hash mixing constants must stay in
sync with gridransac.grid.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, sqrt
from scipy.linalg.cython_lapack cimport dgesvd

cnp.import_array()

cdef double _EPS_RANK = 1e-9
cdef double _SQRT2 = 1.4142135623730951

cdef unsigned long long MIX_SEED = 0x9E3779B97F4A7C15ULL
cdef unsigned long long MIX_MUL1 = 0xBF58476D1CE4E5B9ULL
cdef unsigned long long MIX_MUL2 = 0x94D049BB133111EBULL


cdef inline unsigned long long _hash_coords(long long* z, int lam) nogil:
    cdef unsigned long long h = MIX_SEED
    cdef unsigned long long x
    cdef int k
    for k in range(lam):
        x = (<unsigned long long> z[k]) * MIX_MUL1
        x ^= x >> 31
        h = (h ^ x) * MIX_MUL2
    h ^= h >> 33
    return h


cdef inline void _mat3_mul(double* a, double* b, double* out) nogil:
    cdef int i, j, k
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = 0.0
            for k in range(3):
                out[3 * i + j] += a[3 * i + k] * b[3 * k + j]


cdef inline double _det3(double* m) nogil:
    return (m[0] * (m[4] * m[8] - m[5] * m[7])
            - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6]))


def fit_homography_batch(double[:, :, ::1] src, double[:, :, ::1] dst):
    """Normalized 4-point DLT over (B, 4, 2) stacks; returns (H, ok)."""
    cdef Py_ssize_t B = src.shape[0]
    H_arr = np.zeros((B, 3, 3))
    ok_arr = np.zeros(B, dtype=bool)
    cdef double[:, :, ::1] H = H_arr
    cdef cnp.uint8_t[::1] ok = ok_arr.view(np.uint8)

    cdef double[72] a          # 8x9 row-major = 9x8 column-major transpose
    cdef double[81] u
    cdef double[8] s
    cdef double[512] work
    cdef double vt_dummy
    cdef int m = 9, nn = 8, ldu = 9, ldvt = 1, lwork = 512, info
    cdef Py_ssize_t b
    cdef int i, j
    cdef double cpx, cpy, cqx, cqy, dp, dq, sp, sq
    cdef double px, py, qx, qy
    cdef double[9] hn, tp, tqi, tmp, hh
    cdef double norm, sign

    for b in range(B):
        cpx = cpy = cqx = cqy = 0.0
        for i in range(4):
            cpx += src[b, i, 0]; cpy += src[b, i, 1]
            cqx += dst[b, i, 0]; cqy += dst[b, i, 1]
        cpx *= 0.25; cpy *= 0.25; cqx *= 0.25; cqy *= 0.25
        dp = dq = 0.0
        for i in range(4):
            dp += sqrt((src[b, i, 0] - cpx) ** 2 + (src[b, i, 1] - cpy) ** 2)
            dq += sqrt((dst[b, i, 0] - cqx) ** 2 + (dst[b, i, 1] - cqy) ** 2)
        dp *= 0.25; dq *= 0.25
        if dp <= 0.0 or dq <= 0.0:
            continue
        sp = _SQRT2 / dp
        sq = _SQRT2 / dq

        for i in range(72):
            a[i] = 0.0
        for i in range(4):
            px = (src[b, i, 0] - cpx) * sp
            py = (src[b, i, 1] - cpy) * sp
            qx = (dst[b, i, 0] - cqx) * sq
            qy = (dst[b, i, 1] - cqy) * sq
            # row-major rows 2i and 2i+1 of the 8x9 system
            a[(2 * i) * 9 + 0] = px
            a[(2 * i) * 9 + 1] = py
            a[(2 * i) * 9 + 2] = 1.0
            a[(2 * i) * 9 + 6] = -qx * px
            a[(2 * i) * 9 + 7] = -qx * py
            a[(2 * i) * 9 + 8] = -qx
            a[(2 * i + 1) * 9 + 3] = px
            a[(2 * i + 1) * 9 + 4] = py
            a[(2 * i + 1) * 9 + 5] = 1.0
            a[(2 * i + 1) * 9 + 6] = -qy * px
            a[(2 * i + 1) * 9 + 7] = -qy * py
            a[(2 * i + 1) * 9 + 8] = -qy

        # memory is the 9x8 column-major transpose; its left singular
        # vectors are the right singular vectors of the 8x9 system
        dgesvd("A", "N", &m, &nn, &a[0], &m, &s[0], &u[0], &ldu,
               &vt_dummy, &ldvt, &work[0], &lwork, &info)
        if info != 0 or s[7] <= _EPS_RANK * s[0]:
            continue
        for i in range(9):
            hn[i] = u[8 * 9 + i]   # last column = null direction

        tp[0] = sp; tp[1] = 0.0; tp[2] = -sp * cpx
        tp[3] = 0.0; tp[4] = sp; tp[5] = -sp * cpy
        tp[6] = 0.0; tp[7] = 0.0; tp[8] = 1.0
        tqi[0] = 1.0 / sq; tqi[1] = 0.0; tqi[2] = cqx
        tqi[3] = 0.0; tqi[4] = 1.0 / sq; tqi[5] = cqy
        tqi[6] = 0.0; tqi[7] = 0.0; tqi[8] = 1.0
        _mat3_mul(&hn[0], &tp[0], &tmp[0])
        _mat3_mul(&tqi[0], &tmp[0], &hh[0])

        norm = 0.0
        for i in range(9):
            norm += hh[i] * hh[i]
        norm = sqrt(norm)
        if norm <= 0.0 or norm != norm:
            continue
        sign = -1.0 if hh[8] / norm < -1e-12 else 1.0
        for i in range(9):
            hh[i] *= sign / norm
        if fabs(_det3(&hh[0])) <= 1e-12:   # singular: collapses the plane
            continue
        for i in range(3):
            for j in range(3):
                H[b, i, j] = hh[3 * i + j]
        ok[b] = 1
    return H_arr, ok_arr


def fit_rigid_batch(double[:, :, ::1] src, double[:, :, ::1] dst):
    """Arun 3-point rigid alignment over (B, 3, 3) stacks; returns (R, t, ok)."""
    cdef Py_ssize_t B = src.shape[0]
    R_arr = np.zeros((B, 3, 3))
    t_arr = np.zeros((B, 3))
    ok_arr = np.zeros(B, dtype=bool)
    cdef double[:, :, ::1] R = R_arr
    cdef double[:, ::1] t = t_arr
    cdef cnp.uint8_t[::1] ok = ok_arr.view(np.uint8)

    cdef double[9] cov, bu, bvt, um, vtm, v, rr
    cdef double[3] s
    cdef double[64] work
    cdef int m3 = 3, lwork = 64, info
    cdef Py_ssize_t b
    cdef int i, j, k
    cdef double[3] cp, cq
    cdef double d

    for b in range(B):
        for j in range(3):
            cp[j] = (src[b, 0, j] + src[b, 1, j] + src[b, 2, j]) / 3.0
            cq[j] = (dst[b, 0, j] + dst[b, 1, j] + dst[b, 2, j]) / 3.0
        for i in range(3):
            for j in range(3):
                cov[3 * i + j] = 0.0
                for k in range(3):
                    cov[3 * i + j] += (src[b, k, i] - cp[i]) * (dst[b, k, j] - cq[j])

        # LAPACK sees the buffer as the column-major transpose: reading its
        # U output row-major yields VT of cov, and its VT output yields U.
        dgesvd("A", "A", &m3, &m3, &cov[0], &m3, &s[0], &bu[0], &m3,
               &bvt[0], &m3, &work[0], &lwork, &info)
        if info != 0:
            continue
        for i in range(9):
            um[i] = bvt[i]    # row-major U of cov
            vtm[i] = bu[i]    # row-major VT of cov
        for i in range(3):
            for j in range(3):
                v[3 * i + j] = vtm[3 * j + i]
        # d = det(V @ U^T); tmp = V @ U^T
        for i in range(3):
            for j in range(3):
                rr[3 * i + j] = 0.0
                for k in range(3):
                    rr[3 * i + j] += v[3 * i + k] * um[3 * j + k]
        d = _det3(&rr[0])
        d = -1.0 if d < 0.0 else 1.0
        for i in range(3):
            v[3 * i + 2] *= d
        for i in range(3):
            for j in range(3):
                rr[3 * i + j] = 0.0
                for k in range(3):
                    rr[3 * i + j] += v[3 * i + k] * um[3 * j + k]
        for i in range(3):
            for j in range(3):
                R[b, i, j] = rr[3 * i + j]
        for i in range(3):
            t[b, i] = cq[i] - (rr[3 * i] * cp[0] + rr[3 * i + 1] * cp[1] + rr[3 * i + 2] * cp[2])
        ok[b] = 1
    return R_arr, t_arr, ok_arr


def grid_insert_batch(grid, double[:, ::1] vecs, long long[::1] ids,
                      double[:, ::1] models, cnp.uint8_t[::1] skip):
    """Sequential insert-and-check of a chunk; mirrors pyback.grid_insert_batch."""
    cfg = grid.config
    cdef int L = cfg.L
    cdef int lam = cfg.lam
    cdef double c = cfg.c
    cdef double t = cfg.t
    cdef unsigned long long mask = (1ULL << cfg.table_bits) - 1ULL
    cdef Py_ssize_t B = vecs.shape[0]
    cdef int mdim = models.shape[1]

    cdef double[:, ::1] offsets = grid.offsets
    cdef long long[:, ::1] gids = grid.ids
    cdef double[:, :, ::1] gvecs = grid.vecs
    cdef double[:, :, ::1] gmodels = grid.models if grid.models is not None else \
        np.zeros((L, 1, 0))
    cdef bint store_models = grid.models is not None

    out_pos_arr = np.empty(B, dtype=np.int64)
    out_table_arr = np.empty(B, dtype=np.int64)
    out_id_arr = np.empty(B, dtype=np.int64)
    out_dist_arr = np.empty(B, dtype=np.float64)
    out_model_arr = np.empty((B, mdim), dtype=np.float64)
    cdef long long[::1] out_pos = out_pos_arr
    cdef long long[::1] out_table = out_table_arr
    cdef long long[::1] out_id = out_id_arr
    cdef double[::1] out_dist = out_dist_arr
    cdef double[:, ::1] out_model = out_model_arr

    cdef long long[8] z
    cdef Py_ssize_t i, slot
    cdef int l, k, found
    cdef long long n_coll = 0
    cdef long long insertions = 0, cell_collisions = 0
    cdef double dist, diff

    for i in range(B):
        if skip[i]:
            continue
        insertions += 1
        found = 0
        for l in range(L):
            for k in range(lam):
                z[k] = <long long> floor((vecs[i, k] + offsets[l, k]) / c)
            slot = <Py_ssize_t> (_hash_coords(&z[0], lam) & mask)
            if gids[l, slot] >= 0:
                cell_collisions += 1
                if not found:
                    dist = 0.0
                    for k in range(lam):
                        diff = fabs(vecs[i, k] - gvecs[l, slot, k])
                        if diff > dist:
                            dist = diff
                    if dist < t:
                        found = 1
                        out_pos[n_coll] = i
                        out_table[n_coll] = l
                        out_id[n_coll] = gids[l, slot]
                        out_dist[n_coll] = dist
                        if store_models:
                            for k in range(mdim):
                                out_model[n_coll, k] = gmodels[l, slot, k]
                        n_coll += 1
            gids[l, slot] = ids[i]
            for k in range(lam):
                gvecs[l, slot, k] = vecs[i, k]
            if store_models:
                for k in range(mdim):
                    gmodels[l, slot, k] = models[i, k]

    stats = grid.stats
    stats.insertions += insertions
    stats.cell_collisions += cell_collisions
    stats.tolerance_passing += n_coll
    return (
        out_pos_arr[:n_coll].copy(),
        out_table_arr[:n_coll].copy(),
        out_id_arr[:n_coll].copy(),
        out_dist_arr[:n_coll].copy(),
        out_model_arr[:n_coll].copy(),
    )
