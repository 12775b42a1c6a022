"""Integral histograms: d-dimensional prefix-sum tables of descriptors.

The table stores, at lattice position (i_1, ..., i_d), the descriptor sum of
every cell with index < i_k along each axis (a zero margin at index 0 makes
the maximal corner equal the descriptor of everything inserted). Any
axis-aligned box is then recovered with one signed corner combination, and a
whole m x n x ... grid of boxes with one lattice gather plus d successive
adjacent differences.

Box boundaries are snapped onto cell edges by one of three rounding modes:

* ``nearest`` - default value estimate;
* ``inner``   - lower bound: snap the box inward (can collapse to empty);
* ``outer``   - upper bound: snap the box outward.

For counts, inner <= nearest <= outer always holds because the snapped
boxes are nested.
"""

from __future__ import annotations

import itertools
from typing import Optional, Sequence

import numpy as np

from .model import DescriptorConfig, bin_indices, bin_indices_clipped

_MODES = ("nearest", "inner", "outer")


class IntegralHistogram:
    """Prefix-sum descriptor table over one leaf's cell grid.

    Starts in an accumulating state (raw per-cell sums); `finalize()` turns
    the raw grid into the padded prefix table and freezes it. Queries are
    only valid after finalization.
    """

    def __init__(
        self,
        edges: Sequence[np.ndarray],
        cfg: DescriptorConfig,
        local_range: Optional[tuple[float, float]] = None,
        dims: Optional[tuple[int, ...]] = None,
    ):
        self.edges = tuple(np.asarray(e, dtype=np.float64) for e in edges)
        for e in self.edges:
            if len(e) < 2 or not np.all(np.diff(e) > 0):
                raise ValueError("cell edges must be strictly increasing, >= 2 values")
        self.cfg = cfg
        self.dims = tuple(dims) if dims is not None else tuple(range(len(self.edges)))
        self.local_range = local_range
        self.hist_edges: Optional[np.ndarray] = None
        if cfg.kind == "histogram":
            if local_range is None:
                raise ValueError("histogram descriptors need a local_range")
            lo, hi = local_range
            # Degenerate range: widen for binning, estimation special-cases it.
            self.hist_edges = np.linspace(lo, hi if hi > lo else lo + 1.0, cfg.bins + 1)
        self._raw: Optional[np.ndarray] = np.zeros(self.shape_cells + (cfg.bins,))
        self.table: Optional[np.ndarray] = None

    @classmethod
    def from_table(
        cls,
        edges: Sequence[np.ndarray],
        cfg: DescriptorConfig,
        table: np.ndarray,
        local_range: Optional[tuple[float, float]] = None,
        dims: Optional[tuple[int, ...]] = None,
    ) -> "IntegralHistogram":
        """Rehydrate a finalized histogram from its stored prefix table."""
        ih = cls.__new__(cls)
        ih.edges = tuple(np.asarray(e, dtype=np.float64) for e in edges)
        ih.cfg = cfg
        ih.dims = tuple(dims) if dims is not None else tuple(range(len(ih.edges)))
        ih.local_range = local_range
        ih.hist_edges = None
        if cfg.kind == "histogram":
            if local_range is None:
                raise ValueError("histogram descriptors need a local_range")
            lo, hi = local_range
            ih.hist_edges = np.linspace(lo, hi if hi > lo else lo + 1.0, cfg.bins + 1)
        want = tuple(len(e) for e in ih.edges) + (cfg.bins,)
        table = np.ascontiguousarray(table, dtype=np.float64)
        if table.shape != want:
            raise ValueError(f"prefix table shape {table.shape} != {want}")
        table.flags.writeable = False
        ih.table = table
        ih._raw = None
        return ih

    @property
    def d(self) -> int:
        return len(self.edges)

    @property
    def shape_cells(self) -> tuple[int, ...]:
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def nbytes(self) -> int:
        t = self.table if self.table is not None else self._raw
        return t.nbytes + sum(e.nbytes for e in self.edges)

    # -- construction ------------------------------------------------------

    def accumulate(self, coords: np.ndarray, measures: Optional[np.ndarray] = None):
        """Add a chunk of points. Coordinates must lie within the edge span."""
        if self._raw is None:
            raise RuntimeError("histogram already finalized")
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != self.d:
            raise ValueError(f"expected (n, {self.d}) coordinates")
        n = len(coords)
        if n == 0:
            return
        idx = []
        for ax in range(self.d):
            i = bin_indices(coords[:, ax], self.edges[ax])
            if i.min() < 0 or i.max() >= self.shape_cells[ax]:
                raise ValueError(f"point outside table bounds on axis {ax}")
            idx.append(i)
        flat = np.ravel_multi_index(idx, self.shape_cells)
        cells = int(np.prod(self.shape_cells))
        b = self.cfg.bins
        raw = self._raw.reshape(cells, b)
        if self.cfg.kind == "aggregate":
            raw[:, 0] += np.bincount(flat, minlength=cells)
            if b == 2:
                if measures is None:
                    raise ValueError("sum slot needs measure values")
                raw[:, 1] += np.bincount(flat, weights=measures, minlength=cells)
        else:
            if measures is None:
                raise ValueError("histogram descriptors need measure values")
            mb = bin_indices_clipped(measures, self.hist_edges)
            raw.reshape(-1)[...] += np.bincount(flat * b + mb, minlength=cells * b)

    def extend(self, axis: int, new_edges: np.ndarray):
        """Grow the cell grid along one axis (prepend/append cells only)."""
        if self._raw is None:
            raise RuntimeError("histogram already finalized")
        new_edges = np.asarray(new_edges, dtype=np.float64)
        old = self.edges[axis]
        lo_add = int(np.searchsorted(new_edges, old[0]))
        hi_add = len(new_edges) - 1 - lo_add - (len(old) - 1)
        if hi_add < 0 or not np.array_equal(new_edges[lo_add:lo_add + len(old)], old):
            raise ValueError("new edges must extend the old ones")
        pad = [(0, 0)] * (self.d + 1)
        pad[axis] = (lo_add, hi_add)
        self._raw = np.pad(self._raw, pad)
        self.edges = self.edges[:axis] + (new_edges,) + self.edges[axis + 1:]

    def finalize(self) -> "IntegralHistogram":
        """Build the padded prefix table; the histogram becomes immutable."""
        if self._raw is None:
            return self
        shape = tuple(n + 1 for n in self.shape_cells) + (self.cfg.bins,)
        table = np.zeros(shape, dtype=np.float64)
        table[(slice(1, None),) * self.d] = self._raw
        for ax in range(self.d):
            np.cumsum(table, axis=ax, out=table)
        table.flags.writeable = False
        self.table = table
        self._raw = None
        return self

    # -- queries -----------------------------------------------------------

    def total(self) -> np.ndarray:
        """Descriptor of everything inserted (the maximal prefix corner)."""
        return self.table[(-1,) * self.d]

    def _floor_pos(self, ax: int, values: np.ndarray) -> np.ndarray:
        e = self.edges[ax]
        v = np.clip(values, e[0], e[-1])
        return np.clip(np.searchsorted(e, v, side="right") - 1, 0, len(e) - 1)

    def _ceil_pos(self, ax: int, values: np.ndarray) -> np.ndarray:
        e = self.edges[ax]
        v = np.clip(values, e[0], e[-1])
        return np.clip(np.searchsorted(e, v, side="left"), 0, len(e) - 1)

    def _nearest_pos(self, ax: int, values: np.ndarray) -> np.ndarray:
        e = self.edges[ax]
        v = np.clip(values, e[0], e[-1])
        hi = np.clip(np.searchsorted(e, v, side="left"), 0, len(e) - 1)
        lo = np.maximum(hi - 1, 0)
        return np.where((v - e[lo]) < (e[hi] - v), lo, hi)

    def nearest_displacements(self, edge_arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Per-axis |clipped edge - snapped boundary| for the nearest mode."""
        out = []
        for ax in range(self.d):
            e = self.edges[ax]
            v = np.clip(np.asarray(edge_arrays[ax], np.float64), e[0], e[-1])
            out.append(np.abs(v - e[self._nearest_pos(ax, v)]))
        return out

    def query_grid(self, edge_arrays: Sequence[np.ndarray], mode: str = "nearest") -> np.ndarray:
        """Descriptor grid for the boxes spanned by per-axis edge arrays.

        `edge_arrays[ax]` holds m_ax + 1 nondecreasing boundary values; the
        result has shape (m_1, ..., m_d, B). Boundaries are clipped to the
        table span first, so boxes outside it contribute zero rather than
        erroring. Identical to querying every box individually: both go
        through the same snapped-lattice arithmetic.
        """
        if self.table is None:
            raise RuntimeError("finalize() before querying")
        if mode not in _MODES:
            raise ValueError(f"unknown rounding mode {mode!r}")
        if len(edge_arrays) != self.d:
            raise ValueError(f"expected {self.d} edge arrays")
        arrays = [np.asarray(a, dtype=np.float64) for a in edge_arrays]
        if mode == "nearest":
            pos = [self._nearest_pos(ax, arrays[ax]) for ax in range(self.d)]
            sub = self.table[np.ix_(*pos)]
            for ax in range(self.d):
                sub = np.diff(sub, axis=ax)
            return sub
        if mode == "inner":
            lo_pos = [self._ceil_pos(ax, arrays[ax][:-1]) for ax in range(self.d)]
            hi_pos = [self._floor_pos(ax, arrays[ax][1:]) for ax in range(self.d)]
            hi_pos = [np.maximum(l, h) for l, h in zip(lo_pos, hi_pos)]
        else:  # outer
            lo_pos = [self._floor_pos(ax, arrays[ax][:-1]) for ax in range(self.d)]
            hi_pos = [self._ceil_pos(ax, arrays[ax][1:]) for ax in range(self.d)]
        shape = tuple(len(a) - 1 for a in arrays) + (self.cfg.bins,)
        out = np.zeros(shape, dtype=np.float64)
        # Fixed-order signed corner accumulation keeps results bit-reproducible.
        for pattern in itertools.product((0, 1), repeat=self.d):
            sel = [hi_pos[ax] if bit else lo_pos[ax] for ax, bit in enumerate(pattern)]
            term = self.table[np.ix_(*sel)]
            if (self.d - sum(pattern)) % 2 == 0:
                out += term
            else:
                out -= term
        return out

    def query_rect(self, lo, hi, mode: str = "nearest") -> np.ndarray:
        """Descriptor of one box; equals a 1-cell query_grid by construction."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        edge_arrays = [np.array([lo[ax], hi[ax]]) for ax in range(self.d)]
        return self.query_grid(edge_arrays, mode).reshape(self.cfg.bins)


def build_histogram(
    coords: np.ndarray,
    bounds_lo: Sequence[float],
    bounds_hi: Sequence[float],
    resolution,
    cfg: DescriptorConfig,
    measures: Optional[np.ndarray] = None,
    local_range: Optional[tuple[float, float]] = None,
) -> IntegralHistogram:
    """One-shot build over in-memory points with uniform cell edges.

    `resolution` is an int or per-axis sequence of cell counts. Points
    falling outside [bounds_lo, bounds_hi] are a construction error. For
    histogram descriptors the local range defaults to the measure's actual
    min/max.
    """
    coords = np.asarray(coords, dtype=np.float64)
    d = coords.shape[1] if coords.ndim == 2 else len(bounds_lo)
    res = [int(resolution)] * d if np.isscalar(resolution) else [int(r) for r in resolution]
    if any(r < 1 for r in res):
        raise ValueError("resolution must be >= 1 per axis")
    edges = [np.linspace(bounds_lo[ax], bounds_hi[ax], res[ax] + 1) for ax in range(d)]
    if cfg.kind == "histogram" and local_range is None:
        if measures is None or len(measures) == 0:
            local_range = (0.0, 1.0)
        else:
            local_range = (float(np.min(measures)), float(np.max(measures)))
    ih = IntegralHistogram(edges, cfg, local_range=local_range)
    if len(coords):
        lo = np.asarray(bounds_lo, np.float64)
        hi = np.asarray(bounds_hi, np.float64)
        if np.any(coords < lo) or np.any(coords > hi):
            raise ValueError("point outside bounds")
        ih.accumulate(coords, measures)
    return ih.finalize()
