"""Estimation pipelines: classic sample-fit-verify RANSAC and the
grid-filtered variant that verifies a hypothesis only when it collides
with a previously generated one in the latent space.

Both pipelines share the chunked driver: minimal samples are drawn and
fitted in batches (the batch size is an internal detail; results are
deterministic for a fixed seed and configuration), while verification and
the adaptive stopping logic run per event.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .embedding import LATENT_DIM, EmbeddingConfig, embed_homography_batch, embed_rigid_batch
from .geometry import (
    Homography,
    MatchSet,
    Model,
    RigidMotion,
    count_inliers,
    residuals_homography,
    residuals_rigid,
)
from .grid import GridConfig, RandomGrid, grid_detection_bound
from .solvers import MINIMAL_SIZE, degenerate_mask_homography, degenerate_mask_rigid


class InvalidProbability(Exception):
    """A probability argument is outside its valid range."""


class NotEnoughMatches(Exception):
    """Fewer matches than the minimal sample size."""


class AllSamplesDegenerate(Exception):
    """Too many consecutive degenerate draws; the data cannot be sampled."""


def required_iterations_vanilla(p0: float, omega: float, gamma: int) -> int:
    """Smallest n with 1 - (1 - omega**gamma)**n >= p0."""
    _check_probs(p0, omega, gamma)
    p = omega**gamma
    if p >= 1.0:
        return 1
    l = math.log1p(-p)

    def ok(n):
        return -math.expm1(n * l) >= p0

    n = max(1, math.ceil(math.log1p(-p0) / l))
    while n > 1 and ok(n - 1):
        n -= 1
    while not ok(n):
        n += 1
    return n


def prob_at_least_two_good(p: float, n: int) -> float:
    """P[G_n >= 2] for G_n ~ Binomial(n, p), computed stably."""
    if p >= 1.0:
        return 1.0 if n >= 2 else 0.0
    if n < 2 or p <= 0.0:
        return 0.0
    l = math.log1p(-p)
    a = math.exp(n * l)
    b = math.exp(math.log(n) + math.log(p) + (n - 1) * l)
    return max(0.0, 1.0 - a - b)


def required_iterations_latent(p0: float, omega: float, gamma: int, p_r2: float) -> int | float:
    """Smallest n with P[G_n >= 2] * p_r2 >= p0, where p = omega**gamma.

    p_r2 is the probability that the grid detects a collision given two
    good hypotheses. Returns math.inf when p0 > p_r2 (the criterion can
    never be met); the caller caps at its iteration budget.
    """
    _check_probs(p0, omega, gamma)
    if not (0.0 < p_r2 <= 1.0):
        raise InvalidProbability(f"p_r2 must be in (0, 1], got {p_r2}")
    if p0 > p_r2:
        return math.inf
    p = omega**gamma
    if p >= 1.0:
        return 2

    def ok(n):
        return prob_at_least_two_good(p, n) * p_r2 >= p0

    hi = 2
    while not ok(hi):
        hi *= 2
        if hi > 1 << 62:
            return math.inf
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _check_probs(p0, omega, gamma):
    if not (0.0 < p0 < 1.0):
        raise InvalidProbability(f"p0 must be in (0, 1), got {p0}")
    if not (0.0 < omega <= 1.0):
        raise InvalidProbability(f"omega must be in (0, 1], got {omega}")
    if gamma < 1:
        raise InvalidProbability(f"gamma must be >= 1, got {gamma}")


@dataclass
class EstimatorConfig:
    """Configuration for one estimation run.

    detect_prob is the collision-detection probability used in the
    grid-filtered stopping rule; None substitutes the analytic lower bound
    from the grid geometry. The default of 1.0 stops as soon as two good
    hypotheses are statistically accounted for; the analytic bound with the
    default cell factor is so small that every run would hit n_max, which
    also floods the run with redundant good-pair collisions.
    """

    mode: str = "latent"
    p0: float = 0.99
    n_max: int = 5_000_000
    verify_threshold: float = 3.0
    latent_tolerance: float | None = None
    c_factor: float = 1.8
    tables: int = 4
    table_bits: int = 19
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    seed: int | None = 0
    min_inliers_to_accept: int = 0
    detect_prob: float | None = 1.0
    final_refit: bool = True
    omega_floor: float = 1e-3
    chunk_size: int = 4096
    max_consecutive_degenerate: int = 10_000

    def __post_init__(self):
        if self.mode not in ("vanilla", "latent"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (0.0 < self.p0 < 1.0):
            raise InvalidProbability(f"p0 must be in (0, 1), got {self.p0}")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.verify_threshold <= 0:
            raise ValueError("verify_threshold must be positive")
        if self.mode == "latent":
            if self.latent_tolerance is None or self.latent_tolerance <= 0:
                raise ValueError("latent mode needs a positive latent_tolerance")
            if self.c_factor < 1.0:
                raise ValueError("c_factor must be >= 1 (cell at least as wide as the tolerance)")


@dataclass
class EstimateResult:
    """Outcome of one estimation run, with counters and a timing breakdown."""

    problem: str
    mode: str
    best_model: Model | None
    best_inlier_count: int
    best_inlier_rate: float
    iterations_used: int
    stop_reason: str
    samples_drawn: int
    degenerate_skipped: int
    fits: int
    embeddings: int
    collisions_reported: int
    verifications_run: int
    timing: dict[str, float]
    seed: int

    def to_dict(self) -> dict:
        model = None
        if isinstance(self.best_model, Homography):
            model = {"type": "homography", "h": self.best_model.h.tolist()}
        elif isinstance(self.best_model, RigidMotion):
            model = {
                "type": "rigid3d",
                "R": self.best_model.R.tolist(),
                "t": self.best_model.t.tolist(),
            }
        return {
            "problem": self.problem,
            "mode": self.mode,
            "best_model": model,
            "best_inlier_count": self.best_inlier_count,
            "best_inlier_rate": self.best_inlier_rate,
            "iterations_used": self.iterations_used,
            "stop_reason": self.stop_reason,
            "counters": {
                "samples_drawn": self.samples_drawn,
                "degenerate_skipped": self.degenerate_skipped,
                "fits": self.fits,
                "embeddings": self.embeddings,
                "collisions_reported": self.collisions_reported,
                "verifications_run": self.verifications_run,
            },
            "timing_ms": {k: 1000.0 * v for k, v in self.timing.items()},
            "seed": self.seed,
        }


class _Timer:
    def __init__(self):
        self.buckets = {"sampling": 0.0, "fitting": 0.0, "hashing": 0.0, "verification": 0.0}
        self._t0 = None
        self._key = None

    def start(self, key):
        self._key = key
        self._t0 = time.perf_counter()

    def stop(self):
        self.buckets[self._key] += time.perf_counter() - self._t0
        self._key = None


def estimate(matches: MatchSet, cfg: EstimatorConfig) -> EstimateResult:
    """Run one estimation over the match set per the configured pipeline."""
    gamma = MINIMAL_SIZE[matches.problem]
    n = len(matches)
    if n < gamma:
        raise NotEnoughMatches(f"need at least {gamma} matches, got {n}")

    seed = cfg.seed if cfg.seed is not None else int(np.random.SeedSequence().entropy % (1 << 63))
    ss = np.random.SeedSequence(seed)
    sample_seed, grid_seed = ss.spawn(2)
    rng = np.random.default_rng(sample_seed)

    is_homog = matches.problem == "homography"
    model_dim = 9 if is_homog else 12
    kern = _kernels.active

    grid = None
    p_r2 = 1.0
    if cfg.mode == "latent":
        lam = LATENT_DIM[matches.problem]
        t = cfg.latent_tolerance
        c = cfg.c_factor * t
        gcfg = GridConfig(
            c=c, t=t, lam=lam, L=cfg.tables, table_bits=cfg.table_bits,
            seed=int(grid_seed.generate_state(1)[0]),
        )
        grid = RandomGrid(gcfg, model_dim=model_dim)
        p_r2 = cfg.detect_prob if cfg.detect_prob is not None else grid_detection_bound(
            t, c, lam, cfg.tables
        )

    timer = _Timer()
    counters = {
        "samples_drawn": 0, "degenerate_skipped": 0, "fits": 0,
        "embeddings": 0, "collisions_reported": 0, "verifications_run": 0,
    }
    best_count = -1
    best_params: np.ndarray | None = None
    verified_ids: set[int] = set()
    consecutive_degenerate = 0
    limit = cfg.n_max
    done = 0
    criterion_hit = False

    # Re-drawing an already-tried sample yields a hypothesis identical to an
    # earlier one: it adds no information but its zero-distance self-collision
    # floods the grid filter. Skip repeats, except when the sample space is
    # small enough that repeats are the expected way to collide at all.
    dedup = math.comb(n, gamma) > cfg.n_max
    seen_samples: set = set()
    key_pows = None
    if dedup and n**gamma < 1 << 62:
        key_pows = (n ** np.arange(gamma)).astype(np.int64)

    def model_from_params(params: np.ndarray) -> Model:
        if is_homog:
            return Homography(params.reshape(3, 3))
        return RigidMotion(params[:9].reshape(3, 3), params[9:])

    def raw_residuals(params: np.ndarray) -> np.ndarray:
        if is_homog:
            return residuals_homography(params.reshape(3, 3), matches.src, matches.dst)
        return residuals_rigid(params[:9].reshape(3, 3), params[9:], matches.src, matches.dst)

    def verify(params: np.ndarray) -> int:
        counters["verifications_run"] += 1
        return int((raw_residuals(params) <= cfg.verify_threshold).sum())

    def recompute_limit() -> int:
        omega = max(best_count / n, cfg.omega_floor)
        omega = min(omega, 1.0)
        if cfg.mode == "latent":
            n_star = required_iterations_latent(cfg.p0, omega, gamma, p_r2)
        else:
            n_star = required_iterations_vanilla(cfg.p0, omega, gamma)
        if math.isinf(n_star) or n_star > cfg.n_max:
            return cfg.n_max
        nonlocal criterion_hit
        criterion_hit = True
        return int(n_star)

    while done < limit:
        B = min(cfg.chunk_size, limit - done)

        timer.start("sampling")
        idx = rng.integers(0, n, size=(B, gamma))
        src = matches.src[idx]
        dst = matches.dst[idx]
        dup = np.zeros(B, dtype=bool)
        for i in range(gamma):
            for j in range(i + 1, gamma):
                dup |= idx[:, i] == idx[:, j]
        if dedup:
            sorted_idx = np.sort(idx, axis=1)
            if key_pows is not None:
                chunk_keys = (sorted_idx @ key_pows).tolist()
            else:
                chunk_keys = [row.tobytes() for row in sorted_idx]
            for i, key in enumerate(chunk_keys):
                if key in seen_samples:
                    dup[i] = True
                else:
                    seen_samples.add(key)
        if is_homog:
            deg = dup | degenerate_mask_homography(src, dst)
        else:
            deg = dup | degenerate_mask_rigid(src)
        counters["samples_drawn"] += B
        counters["degenerate_skipped"] += int(deg.sum())
        consecutive_degenerate = _check_degenerate_runs(
            deg, consecutive_degenerate, cfg.max_consecutive_degenerate
        )
        timer.stop()

        good = ~deg
        gpos = np.nonzero(good)[0]

        timer.start("fitting")
        params = np.zeros((B, model_dim))
        ok_full = np.zeros(B, dtype=bool)
        if gpos.size:
            if is_homog:
                H, ok = kern.fit_homography_batch(
                    np.ascontiguousarray(src[gpos]), np.ascontiguousarray(dst[gpos])
                )
                params[gpos] = H.reshape(-1, 9)
            else:
                R, tvec, ok = kern.fit_rigid_batch(
                    np.ascontiguousarray(src[gpos]), np.ascontiguousarray(dst[gpos])
                )
                params[gpos, :9] = R.reshape(-1, 9)
                params[gpos, 9:] = tvec
            ok_full[gpos] = ok
        counters["fits"] += int(ok_full.sum())
        timer.stop()

        if cfg.mode == "latent":
            timer.start("hashing")
            vecs = np.zeros((B, grid.config.lam))
            embeddable = np.zeros(B, dtype=bool)
            fpos = np.nonzero(ok_full)[0]
            if fpos.size:
                if is_homog:
                    v, emb_ok = embed_homography_batch(
                        params[fpos].reshape(-1, 3, 3), cfg.embedding
                    )
                else:
                    v = embed_rigid_batch(
                        params[fpos, :9].reshape(-1, 3, 3), params[fpos, 9:], cfg.embedding
                    )
                    emb_ok = np.ones(fpos.size, dtype=bool)
                emb_ok &= np.isfinite(v).all(axis=1)
                vecs[fpos] = np.where(emb_ok[:, None], v, 0.0)
                embeddable[fpos] = emb_ok
            counters["embeddings"] += int(embeddable.sum())

            ids = done + np.arange(B, dtype=np.int64)
            skip = (~embeddable).astype(np.uint8)
            pos, _tables, ex_ids, dists, ex_models = grid.insert_batch(
                np.ascontiguousarray(vecs), ids, np.ascontiguousarray(params), skip
            )
            timer.stop()

            timer.start("verification")
            for k in range(pos.shape[0]):
                it = done + int(pos[k])
                if it >= limit:
                    break
                counters["collisions_reported"] += 1
                new_id = it
                # verify the stored (earlier) member first so that ties keep it
                if int(ex_ids[k]) not in verified_ids:
                    verified_ids.add(int(ex_ids[k]))
                    cnt = verify(ex_models[k])
                    if cnt > best_count:
                        best_count = cnt
                        best_params = ex_models[k].copy()
                        limit = min(limit, max(recompute_limit(), it + 1))
                verified_ids.add(new_id)
                cnt = verify(params[pos[k]])
                if cnt > best_count:
                    best_count = cnt
                    best_params = params[pos[k]].copy()
                    limit = min(limit, max(recompute_limit(), it + 1))
                if it + 1 >= limit:
                    break
            timer.stop()
        else:
            timer.start("verification")
            counts = np.full(B, -1, dtype=np.int64)
            for pidx in np.nonzero(ok_full)[0]:
                counts[pidx] = int(
                    (raw_residuals(params[pidx]) <= cfg.verify_threshold).sum()
                )
                counters["verifications_run"] += 1
            for p_i in np.nonzero(counts > best_count)[0]:
                it = done + int(p_i)
                if it >= limit:
                    break
                if counts[p_i] > best_count:
                    best_count = int(counts[p_i])
                    best_params = params[p_i].copy()
                    limit = min(limit, max(recompute_limit(), it + 1))
            timer.stop()

        done = min(done + B, limit)

    best_model = model_from_params(best_params) if best_params is not None else None
    if cfg.final_refit and best_model is not None:
        refined = _polish(best_model, matches, cfg.verify_threshold)
        if refined is not None:
            cnt, _ = count_inliers(refined, matches, cfg.verify_threshold)
            if cnt >= best_count:
                best_model, best_count = refined, cnt
    stop_reason = "criterion_met" if criterion_hit else "cap_reached"

    return EstimateResult(
        problem=matches.problem,
        mode=cfg.mode,
        best_model=best_model,
        best_inlier_count=max(best_count, 0),
        best_inlier_rate=max(best_count, 0) / n,
        iterations_used=done,
        stop_reason=stop_reason,
        samples_drawn=counters["samples_drawn"],
        degenerate_skipped=counters["degenerate_skipped"],
        fits=counters["fits"],
        embeddings=counters["embeddings"],
        collisions_reported=counters["collisions_reported"],
        verifications_run=counters["verifications_run"],
        timing=timer.buckets,
        seed=seed,
    )


def _polish(model: Model, matches: MatchSet, threshold: float) -> Model | None:
    """Least-squares refit over the model's consensus set (the smoothing step
    of the classic sample-consensus recipe). A minimal-sample fit interpolates
    its sample's noise; refitting over all inliers averages it out. Returns
    None when the consensus set is too small or degenerate."""
    from .solvers import DegenerateSample, fit_homography_lsq, fit_rigid_lsq

    _, mask = count_inliers(model, matches, threshold)
    gamma = MINIMAL_SIZE[matches.problem]
    if int(mask.sum()) <= gamma:
        return None
    src, dst = matches.src[mask], matches.dst[mask]
    try:
        if matches.problem == "homography":
            return fit_homography_lsq(src, dst)
        return fit_rigid_lsq(src, dst)
    except (DegenerateSample, ValueError):
        return None


def _check_degenerate_runs(deg: np.ndarray, carry: int, cap: int) -> int:
    """Track consecutive degenerate draws across chunks; raise past the cap."""
    goods = np.nonzero(~deg)[0]
    if goods.size == 0:
        carry += deg.size
        if carry >= cap:
            raise AllSamplesDegenerate(f"{carry} consecutive degenerate samples")
        return carry
    if carry + int(goods[0]) >= cap:
        raise AllSamplesDegenerate(f"{carry + int(goods[0])} consecutive degenerate samples")
    if goods.size > 1:
        longest = int(np.max(np.diff(goods))) - 1
        if longest >= cap:
            raise AllSamplesDegenerate(f"{longest} consecutive degenerate samples")
    return int(deg.size - 1 - goods[-1])
