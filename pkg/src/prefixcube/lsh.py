"""Hash-based subspace lookup.

Leaf boxes and query boxes project onto a set of Gaussian directions; on
each direction an interval is sampled at `tables` evenly spaced positions
and every sample is hashed with the p-stable form floor((x + b) / r). Leaf
samples fill the per-(projection, table) buckets in ascending position
order while queries probe them in descending order, so two overlapping
intervals meet near the crossing point of the two sweeps. A leaf is a
candidate only if it collides on every projection; the engine then
validates candidates with an exact box-intersection test, so false
positives cost time but never correctness.

All hashing happens in lattice units to keep mixed-unit schemas isotropic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Schema


@dataclass(frozen=True)
class LshConfig:
    projections: Optional[int] = None  # default 2 * d
    tables: int = 8
    width_factor: float = 4.0
    rng_seed: int = 1

    def __post_init__(self):
        if self.tables < 1:
            raise ValueError("tables must be >= 1")
        if self.width_factor <= 0:
            raise ValueError("width_factor must be positive")


def hash_value(a: np.ndarray, b: float, r: float, v: np.ndarray) -> int:
    """The raw hash: floor((a . v + b) / r)."""
    return int(np.floor((float(np.dot(a, v)) + b) / r))


class LshFamily:
    """Projection directions, offsets and the shared bucket width."""

    def __init__(self, schema: Schema, cfg: LshConfig):
        self.schema = schema
        self.cfg = cfg
        d = schema.d
        self.projections = cfg.projections or 2 * d
        rng = np.random.default_rng(cfg.rng_seed)
        self.a = rng.standard_normal((self.projections, d))
        # Bucket width scales with the widest full-domain projection so a
        # query spanning everything still collides with every leaf.
        counts = np.array([dim.scale_count for dim in schema.dims], dtype=np.float64)
        extents = np.abs(self.a) @ counts
        self.r = cfg.width_factor * float(extents.max()) / cfg.tables
        self.b = rng.uniform(0.0, self.r, self.projections)

    @classmethod
    def from_arrays(cls, schema: Schema, cfg: LshConfig, a: np.ndarray,
                    b: np.ndarray, r: float) -> "LshFamily":
        """Rehydrate a family from stored draws (bypasses the RNG)."""
        fam = cls.__new__(cls)
        fam.schema = schema
        fam.cfg = cfg
        fam.a = np.asarray(a, dtype=np.float64)
        fam.projections = fam.a.shape[0]
        fam.b = np.asarray(b, dtype=np.float64)
        fam.r = float(r)
        return fam

    def to_units(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        cols = [self.schema.dims[ax].to_units(coords[:, ax])
                for ax in range(self.schema.d)]
        return np.stack(cols, axis=1)

    def hash_point(self, coords: np.ndarray) -> np.ndarray:
        """One bucket key per projection for a single point."""
        v = self.to_units(coords)[0]
        return np.floor((self.a @ v + self.b) / self.r).astype(np.int64)

    def _project_box(self, lo: np.ndarray, hi: np.ndarray):
        """Interval of each box on each projection: (n, P) los and his."""
        lo_u = self.to_units(lo)
        hi_u = self.to_units(hi)
        a_pos = np.maximum(self.a, 0.0).T
        a_neg = np.minimum(self.a, 0.0).T
        return lo_u @ a_pos + hi_u @ a_neg, hi_u @ a_pos + lo_u @ a_neg

    def box_keys(self, lo: np.ndarray, hi: np.ndarray, reverse: bool = False) -> np.ndarray:
        """(n, P, T) bucket keys of interval samples, table-ordered.

        Samples sit at the (k + 0.5)/T midpoints of the interval; ascending
        for indexing, descending (reverse=True) for querying.
        """
        p_lo, p_hi = self._project_box(lo, hi)
        t = (np.arange(self.cfg.tables) + 0.5) / self.cfg.tables
        if reverse:
            t = t[::-1]
        pos = p_lo[:, :, None] + (p_hi - p_lo)[:, :, None] * t
        return np.floor((pos + self.b[None, :, None]) / self.r).astype(np.int64)


# Keys of boxes that hold no data (non-finite bounds). Unreachable by real
# hashes: it would need a projected magnitude near 9e18 lattice units.
EMPTY_KEY = np.iinfo(np.int64).min


class LshBuckets:
    """Per-(projection, table) key -> sorted leaf ordinals."""

    def __init__(self, family: LshFamily, keys: np.ndarray):
        self.family = family
        self.keys = keys  # (L, P, T), kept for serialization
        n, p, t = keys.shape
        self.buckets: list[list[dict[int, np.ndarray]]] = []
        for j in range(p):
            row = []
            for k in range(t):
                table: dict[int, list[int]] = {}
                for leaf_ord, key in enumerate(keys[:, j, k]):
                    if key == EMPTY_KEY:
                        continue
                    table.setdefault(int(key), []).append(leaf_ord)
                row.append({key: np.array(ids, dtype=np.int64)
                            for key, ids in table.items()})
            self.buckets.append(row)

    def candidates(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Leaf ordinals colliding on every projection (unvalidated).

        A projection counts as colliding when any sampled query key appears
        in any of its tables. Sampled keys cover the query interval's whole
        key range whenever the sample step is below the bucket width, so a
        collision detects interval overlap; overlaps shorter than half a
        sample step can still slip between sample positions.
        """
        qkeys = self.family.box_keys(lo, hi, reverse=True)[0]  # (P, T)
        result: Optional[np.ndarray] = None
        for j in range(self.family.projections):
            keys = {int(k) for k in qkeys[j]}
            hits = [table.get(k)
                    for table in self.buckets[j] for k in keys]
            hits = [h for h in hits if h is not None]
            if not hits:
                return np.empty(0, dtype=np.int64)
            ids = np.unique(np.concatenate(hits))
            result = ids if result is None else np.intersect1d(result, ids, assume_unique=True)
            if len(result) == 0:
                return result
        return result if result is not None else np.empty(0, dtype=np.int64)


def index_subspaces(family: LshFamily, leaf_los: np.ndarray, leaf_his: np.ndarray) -> LshBuckets:
    """Hash every leaf box into the bucket maps (ascending sample order).

    Boxes with non-finite bounds (leaves that never saw a row) get EMPTY_KEY
    everywhere and land in no bucket.
    """
    los = np.atleast_2d(np.asarray(leaf_los, dtype=np.float64))
    his = np.atleast_2d(np.asarray(leaf_his, dtype=np.float64))
    shape = (len(los), family.projections, family.cfg.tables)
    keys = np.full(shape, EMPTY_KEY, dtype=np.int64)
    finite = np.isfinite(los).all(axis=1) & np.isfinite(his).all(axis=1)
    if finite.any():
        keys[finite] = family.box_keys(los[finite], his[finite], reverse=False)
    return LshBuckets(family, keys)
