"""Randomly offset grid hash tables for constant-time hypothesis collision checks.

L independently offset uniform grids cover the latent space; each table is a
flat single-slot array addressed by a mixed hash of the integer cell
coordinates. Inserting a vector overwrites its slot in every table; a
collision is reported when an occupied slot already holds a vector within
l-infinity tolerance t. Cost per insert is O(L * dim) regardless of how many
vectors were inserted before.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Frozen multiply-xor mixing constants (64-bit); changing them changes every
# table address, so they are pinned by a golden test.
MIX_SEED = 0x9E3779B97F4A7C15
MIX_MUL1 = 0xBF58476D1CE4E5B9
MIX_MUL2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class GridConfig:
    """Grid geometry and table sizing.

    c: cell side length, t: collision tolerance (both in latent units),
    lam: latent dimension, table_bits: address width of each table.
    """

    c: float
    t: float
    lam: int
    L: int = 4
    table_bits: int = 19
    seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("need at least one table")
        if not (0 < self.t <= self.c):
            raise ValueError("tolerance must satisfy 0 < t <= c")
        if self.lam not in (6, 8):
            raise ValueError("latent dimension must be 6 or 8")
        if not (1 <= self.table_bits <= 62):
            raise ValueError("table_bits must be in [1, 62]")

    @property
    def slots(self) -> int:
        return 1 << self.table_bits


def grid_detection_bound(t: float, c: float, lam: int, L: int) -> float:
    """Analytic lower bound on detecting a colliding pair at l-infinity
    distance t: per table (1 - t/c)**lam, combined over L independent tables."""
    per_table = (1.0 - t / c) ** lam
    return 1.0 - (1.0 - per_table) ** L


def table_bits_for(n_max: int) -> int:
    """Address width giving at least n_max / 10 slots (rounded up to a power of two)."""
    target = max(1, -(-n_max // 10))
    return max(1, (target - 1).bit_length())


@dataclass
class Collision:
    """A pair of hypotheses sharing a cell within the l-infinity tolerance."""

    existing_id: int
    new_id: int
    distance: float
    table_index: int


@dataclass
class GridStats:
    insertions: int = 0
    cell_collisions: int = 0
    tolerance_passing: int = 0


def cell_index(v: np.ndarray, offset: np.ndarray, c: float) -> np.ndarray:
    """Componentwise floor((v + offset) / c) as int64."""
    return np.floor((np.asarray(v, dtype=np.float64) + offset) / c).astype(np.int64)


def hash_cell(z, table_bits: int) -> int:
    """Mix integer cell coordinates into a table address in [0, 2**table_bits)."""
    h = MIX_SEED
    for zk in z:
        x = int(zk) & _MASK64
        x = (x * MIX_MUL1) & _MASK64
        x ^= x >> 31
        h = ((h ^ x) * MIX_MUL2) & _MASK64
    h ^= h >> 33
    return h & ((1 << table_bits) - 1)


def hash_cells_batch(z: np.ndarray, table_bits: int) -> np.ndarray:
    """Vectorized hash_cell over (..., lam) int64 coordinate stacks."""
    zu = z.astype(np.uint64)
    x = zu * np.uint64(MIX_MUL1)
    x = x ^ (x >> np.uint64(31))
    h = np.full(z.shape[:-1], MIX_SEED, dtype=np.uint64)
    for k in range(z.shape[-1]):
        h = (h ^ x[..., k]) * np.uint64(MIX_MUL2)
    h = h ^ (h >> np.uint64(33))
    return (h & np.uint64((1 << table_bits) - 1)).astype(np.int64)


class RandomGrid:
    """L single-slot hash tables with independent random offsets.

    Slots store the latent vector, the hypothesis id, and optionally the
    model parameters so a colliding hypothesis can be verified without a
    refit. Single-writer: concurrent inserts must be serialized externally.
    """

    def __init__(self, config: GridConfig, model_dim: int = 0):
        self.config = config
        self.model_dim = model_dim
        rng = np.random.default_rng(config.seed)
        self.offsets = rng.uniform(0.0, config.c, size=(config.L, config.lam))
        self.ids = np.full((config.L, config.slots), -1, dtype=np.int64)
        self.vecs = np.zeros((config.L, config.slots, config.lam))
        self.models = np.zeros((config.L, config.slots, model_dim)) if model_dim else None
        self.stats = GridStats()
        self._tables = np.arange(config.L)

    def clear(self) -> None:
        """Empty all tables; offsets and stats are kept."""
        self.ids.fill(-1)

    def resample_offsets(self, seed=None) -> None:
        """Draw fresh offsets (used by Monte Carlo detection experiments)."""
        rng = np.random.default_rng(seed)
        self.offsets = rng.uniform(0.0, self.config.c, size=(self.config.L, self.config.lam))

    def slot_for(self, v: np.ndarray, table: int) -> int:
        z = cell_index(v, self.offsets[table], self.config.c)
        return hash_cell(z, self.config.table_bits)

    def insert_and_check(self, v: np.ndarray, hyp_id: int, model: np.ndarray | None = None):
        """Insert a latent vector into every table; report the first collision.

        Returns a Collision or None. The vector overwrites each slot
        regardless of the collision outcome.
        """
        cfg = self.config
        v = np.asarray(v, dtype=np.float64)
        collision = None
        self.stats.insertions += 1
        # vectorized over tables: cells, slot contents, and distances at once
        cells = np.floor((v + self.offsets) / cfg.c).astype(np.int64).tolist()
        slots = [hash_cell(cells[i], cfg.table_bits) for i in range(cfg.L)]
        occupant = self.ids[self._tables, slots]
        dists = np.abs(self.vecs[self._tables, slots] - v).max(axis=1)
        for i in range(cfg.L):
            if occupant[i] >= 0:
                self.stats.cell_collisions += 1
                if collision is None and dists[i] < cfg.t:
                    self.stats.tolerance_passing += 1
                    collision = Collision(int(occupant[i]), hyp_id, float(dists[i]), i)
        self.ids[self._tables, slots] = hyp_id
        self.vecs[self._tables, slots] = v
        if self.models is not None and model is not None:
            self.models[self._tables, slots] = model
        return collision

    def insert_batch(self, vecs, ids, models=None, skip=None):
        """Insert a chunk of hypotheses via the active kernel backend.

        Returns (positions, tables, existing_ids, distances, existing_models)
        describing at most one collision per inserted item, in insertion order.
        """
        from . import _kernels

        B = vecs.shape[0]
        if skip is None:
            skip = np.zeros(B, dtype=np.uint8)
        if models is None:
            models = np.zeros((B, self.model_dim))
        return _kernels.active.grid_insert_batch(self, vecs, ids, models, skip)
