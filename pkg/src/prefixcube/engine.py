"""Grid query planning and execution.

A query is a filter box plus zero or more grouped dimensions, each carrying
its own cell edges (equi-width, equi-data, log or explicit). Execution
gathers candidate leaves (exact tree search, hash lookup, or internal nodes
at a reduced height), reads one descriptor grid per candidate from its
prefix table, sums them, and turns the summed descriptors into the
requested measure per cell.

Error bounds come from re-reading every candidate with the inward and
outward rounding modes; the true value of a count always lies between
them, and for sums of nonnegative measures likewise. Bounds are refused
for medians and for reduced-height modes, where no such sandwich exists.

Reduced-height mode reads one descriptor per internal node covering the
intersection of its box with the query, then splits it over the grid cells
proportionally to overlap volume, trading accuracy for touching far fewer
tables.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .model import (
    EMPTY,
    DescriptorConfig,
    Measure,
    Range,
    Schema,
    UnsupportedMeasureError,
    bin_indices,
    count_of,
    measure_grid,
)
from .rtree import Node, leaves_for_range, nodes_at_level

if TYPE_CHECKING:  # pragma: no cover
    from .index import DatasetIndex

_STRATEGIES = ("equi_width", "equi_data", "log", "explicit")


@dataclass(frozen=True)
class GroupBy:
    """One grouped dimension and how to cut it into cells."""

    dim: int
    strategy: str = "equi_width"
    bins: int = 10
    edges: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.strategy not in _STRATEGIES:
            raise ValueError(f"unknown binning strategy {self.strategy!r}")
        if self.strategy == "explicit":
            if self.edges is None or len(self.edges) < 2:
                raise ValueError("explicit binning needs >= 2 edges")
            object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        elif self.bins < 1:
            raise ValueError("bins must be >= 1")


@dataclass(frozen=True)
class ComputationalGrid:
    """Resolved cell edges for every grouped dimension plus the filter box."""

    group_dims: tuple[int, ...]
    edges: tuple[np.ndarray, ...]
    filter: Range
    aligned: bool = False

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(e) - 1 for e in self.edges)


@dataclass(frozen=True)
class QuerySpec:
    grid: ComputationalGrid
    measure: Measure = field(default_factory=Measure)
    mode: str = "tree"  # "tree" | "lsh" | "tree@<h>"
    error_bounds: bool = False
    align_scales: bool = True
    category_filter: dict[int, tuple[int, ...]] = field(default_factory=dict)


@dataclass
class QueryMeta:
    mode: str
    candidates: int
    coincident_fraction: float
    aligned: bool
    elapsed_us: int = 0


@dataclass
class QueryResult:
    values: np.ndarray
    group_dims: tuple[int, ...]
    edges: tuple[np.ndarray, ...]
    meta: QueryMeta
    v_min: Optional[np.ndarray] = None
    v_max: Optional[np.ndarray] = None
    error: Optional[np.ndarray] = None


def make_grid(index: "DatasetIndex", filter: Range, groups: Sequence[GroupBy]) -> ComputationalGrid:
    """Resolve per-dimension cell edges against the filtered domain."""
    schema = index.schema
    box = filter.resolve(schema)
    dims = [g.dim for g in groups]
    if len(set(dims)) != len(dims):
        raise ValueError("a dimension can be grouped only once")
    edges: list[np.ndarray] = []
    for g in groups:
        if not 0 <= g.dim < schema.d:
            raise KeyError(f"group_by references unknown dimension {g.dim}")
        lo, hi = float(box[0, g.dim]), float(box[1, g.dim])
        if g.strategy == "explicit":
            e = np.asarray(g.edges, dtype=np.float64)
            if not np.all(np.diff(e) > 0):
                raise ValueError("explicit edges must be strictly increasing")
        elif g.strategy == "equi_width":
            if not hi > lo:
                raise ValueError(f"empty interval on dimension {g.dim}")
            e = np.linspace(lo, hi, g.bins + 1)
        elif g.strategy == "log":
            if lo <= 0:
                raise ValueError("log binning needs a positive lower bound")
            e = np.geomspace(lo, hi, g.bins + 1)
        else:  # equi_data
            e = _equi_data_edges(index, filter, g.dim, g.bins)
        edges.append(e)
    return ComputationalGrid(tuple(dims), tuple(edges), filter, aligned=False)


def _equi_data_edges(index: "DatasetIndex", filter: Range, dim: int, bins: int) -> np.ndarray:
    """Quantile edges from a coarse aligned count profile along one axis."""
    schema = index.schema
    coarse = min(schema.dims[dim].scale_count, 600)
    probe = make_grid(index, filter, [GroupBy(dim, "equi_width", coarse)])
    res = execute(index, QuerySpec(grid=probe, measure=Measure("count"), align_scales=True))
    counts = np.asarray(res.values, dtype=np.float64)
    coarse_edges = res.edges[0]
    cum = np.concatenate(([0.0], np.cumsum(counts)))
    total = cum[-1]
    box = filter.resolve(schema)
    lo, hi = float(box[0, dim]), float(box[1, dim])
    if total <= 0 or not hi > lo:
        return np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
    targets = total * np.arange(1, bins) / bins
    inner = np.interp(targets, cum, coarse_edges)
    e = np.unique(np.concatenate(([coarse_edges[0]], inner, [coarse_edges[-1]])))
    if len(e) < 2:
        return np.linspace(lo, hi, bins + 1)
    return e


def align_to_scales(grid: ComputationalGrid, schema: Schema) -> ComputationalGrid:
    """Snap cell edges and filter boundaries to the dimension lattices.

    Degenerate cells produced by snapping are merged away; a fully collapsed
    axis is widened to the single lattice cell nearest the requested span.
    """
    new_edges = []
    for dim_i, e in zip(grid.group_dims, grid.edges):
        dim = schema.dims[dim_i]
        snapped = np.unique(dim.snap_nearest(np.asarray(e, dtype=np.float64)))
        if len(snapped) < 2:
            k = int(dim.unit_round(e[0]))
            k = min(max(k, 0), dim.scale_count - 1)
            snapped = np.asarray(dim.lattice_value(np.array([k, k + 1])))
        new_edges.append(snapped)
    new_intervals = {}
    for dim_i, (lo, hi) in grid.filter.intervals.items():
        dim = schema.dims[dim_i]
        new_intervals[dim_i] = (float(dim.snap_nearest(lo)), float(dim.snap_nearest(hi)))
    return ComputationalGrid(grid.group_dims, tuple(new_edges),
                             Range(new_intervals), aligned=True)


def resolve_extent(schema: Schema, spec: QuerySpec) -> tuple[ComputationalGrid, np.ndarray]:
    """Final grid (after any snapping) and the (2, d) query extent box.

    Grouped dimensions take their extent from the grid edges; everything
    else from the filter clipped to the domain. Shared with the scan oracle
    so both sides answer exactly the same question.
    """
    grid = spec.grid
    if spec.align_scales and not grid.aligned:
        grid = align_to_scales(grid, schema)
    box = grid.filter.resolve(schema)
    for i, g in enumerate(grid.group_dims):
        box[0, g], box[1, g] = grid.edges[i][0], grid.edges[i][-1]
    return grid, box


def _parse_mode(mode: str, height: int) -> tuple[str, int]:
    """Return (kind, tree level). kind is "tree" or "lsh"."""
    if mode == "tree":
        return "tree", 0
    if mode == "lsh":
        return "lsh", 0
    if mode.startswith("tree@"):
        try:
            h = int(mode[5:])
        except ValueError:
            raise ValueError(f"unknown accuracy mode {mode!r}")
        if h < 1:
            raise ValueError("tree@h needs h >= 1")
        return "tree", max(height - h, 0)
    raise ValueError(f"unknown accuracy mode {mode!r}")


def _category_slices(spec: QuerySpec, schema: Schema, box: np.ndarray) -> list[dict[int, tuple[float, float]]]:
    """Expand label-set filters into per-dimension contiguous coordinate runs."""
    slices: list[dict[int, tuple[float, float]]] = [{}]
    for dim_i in sorted(spec.category_filter):
        dim = schema.dims[dim_i]
        if dim.kind != "categorical":
            raise ValueError(f"category filter on numeric dimension {dim.name!r}")
        if dim_i in spec.grid.group_dims:
            raise ValueError(f"category filter on grouped dimension {dim.name!r}")
        labels = sorted(set(spec.category_filter[dim_i]))
        if not labels:
            return []
        if labels[0] < 0 or labels[-1] >= dim.scale_count:
            raise ValueError(f"category ordinal out of range for {dim.name!r}")
        runs: list[tuple[float, float]] = []
        start = prev = labels[0]
        for lab in labels[1:]:
            if lab == prev + 1:
                prev = lab
                continue
            runs.append((float(start), float(prev + 1)))
            start = prev = lab
        runs.append((float(start), float(prev + 1)))
        slices = [{**s, dim_i: r} for s in slices for r in runs]
    return slices


def _slice_arrays(schema: Schema, grid: ComputationalGrid, box: np.ndarray,
                  sl: dict[int, tuple[float, float]]) -> Optional[list[np.ndarray]]:
    """Per-axis boundary arrays for one slice; None if the slice is empty."""
    arrays: list[np.ndarray] = []
    pos = {g: i for i, g in enumerate(grid.group_dims)}
    for ax in range(schema.d):
        if ax in pos:
            arrays.append(grid.edges[pos[ax]])
            continue
        lo, hi = float(box[0, ax]), float(box[1, ax])
        if ax in sl:
            lo, hi = max(lo, sl[ax][0]), min(hi, sl[ax][1])
            if hi < lo:
                return None
        arrays.append(np.array([lo, hi]))
    return arrays


def _to_group_order(acc: np.ndarray, d: int, group_dims: tuple[int, ...]) -> np.ndarray:
    """Drop singleton non-group axes, reorder the rest as requested."""
    drop = tuple(ax for ax in range(d) if ax not in group_dims)
    acc = acc.squeeze(axis=drop)
    asc = sorted(group_dims)
    perm = [asc.index(g) for g in group_dims] + [len(group_dims)]
    return acc.transpose(perm)


def execute(index: "DatasetIndex", spec: QuerySpec) -> QueryResult:
    t0 = time.perf_counter_ns()
    schema: Schema = index.schema
    cfg: DescriptorConfig = index.descriptor
    spec.measure.validate_against(cfg)

    height = index.root.level
    kind, level = _parse_mode(spec.mode, height)
    reduced = level > 0
    if spec.error_bounds:
        if spec.measure.kind == "median":
            raise UnsupportedMeasureError("error bounds for median are not supported")
        if reduced:
            raise UnsupportedMeasureError("error bounds need full-height traversal")

    grid, box = resolve_extent(schema, spec)
    slices = _category_slices(spec, schema, box)

    if kind == "lsh":
        cand: list[Node] = index.candidates_lsh(box[0], box[1])
    elif reduced:
        cand = nodes_at_level(index.root, level, box[0], box[1])
    else:
        cand = leaves_for_range(index.root, box[0], box[1])

    rebin = cfg.kind == "histogram" and spec.measure.kind == "median"
    k = len(grid.group_dims)
    gshape = grid.shape
    b = cfg.bins
    acc = np.zeros(gshape + (b,))
    acc_lo = np.zeros_like(acc) if spec.error_bounds else None
    acc_hi = np.zeros_like(acc) if spec.error_bounds else None
    coincident = np.ones(gshape, dtype=bool)

    if reduced:
        # Coarse estimate: each node's stored total, assumed uniform over its
        # box, clipped to the query region and spread over the grid cells.
        coincident[...] = False
        for sl in slices:
            arrays = _slice_arrays(schema, grid, box, sl)
            if arrays is None:
                continue
            slo = np.array([a[0] for a in arrays])
            shi = np.array([a[-1] for a in arrays])
            for node in cand:
                rlo = np.maximum(slo, node.mbr[0])
                rhi = np.minimum(shi, node.mbr[1])
                if np.any(rlo > rhi):
                    continue
                width = node.mbr[1] - node.mbr[0]
                safe = np.where(width > 0, width, 1.0)
                vol = float(np.prod(np.where(width > 0, (rhi - rlo) / safe, 1.0)))
                desc = index.node_total(node) * vol
                frac = np.ones(gshape)
                for i, g in enumerate(grid.group_dims):
                    e = grid.edges[i]
                    f = _overlap_fractions(e, float(rlo[g]), float(rhi[g]))
                    shape = [1] * k
                    shape[i] = -1
                    frac = frac * f.reshape(shape)
                acc += desc * frac[..., None]
    else:
        full_shape = [1] * schema.d
        for i, g in enumerate(grid.group_dims):
            full_shape[g] = len(grid.edges[i]) - 1
        acc_full = np.zeros(tuple(full_shape) + (b,))
        lo_full = np.zeros_like(acc_full) if spec.error_bounds else None
        hi_full = np.zeros_like(acc_full) if spec.error_bounds else None
        for sl in slices:
            arrays = _slice_arrays(schema, grid, box, sl)
            if arrays is None:
                continue
            for leaf in cand:
                sub = leaf.ih.query_grid(arrays, "nearest")
                if rebin:
                    sub = sub @ index.rebin_matrix(leaf)
                acc_full += sub
                if spec.error_bounds:
                    s_lo = leaf.ih.query_grid(arrays, "inner")
                    s_hi = leaf.ih.query_grid(arrays, "outer")
                    if rebin:
                        s_lo = s_lo @ index.rebin_matrix(leaf)
                        s_hi = s_hi @ index.rebin_matrix(leaf)
                    lo_full += s_lo
                    hi_full += s_hi
                _fold_coincidence(coincident, leaf, arrays, schema, grid)
        acc = _to_group_order(acc_full, schema.d, grid.group_dims)
        if spec.error_bounds:
            acc_lo = _to_group_order(lo_full, schema.d, grid.group_dims)
            acc_hi = _to_group_order(hi_full, schema.d, grid.group_dims)

    hist_edges = index.global_hist_edges if cfg.kind == "histogram" else None
    values = measure_grid(acc, spec.measure, cfg, hist_edges)

    v_min = v_max = error = None
    if spec.error_bounds:
        v_min, v_max = _bound_values(acc_lo, acc_hi, spec.measure, cfg)
        with np.errstate(divide="ignore", invalid="ignore"):
            error = np.where(values != 0, (v_max - v_min) / values, EMPTY)

    meta = QueryMeta(
        mode=spec.mode,
        candidates=len(cand),
        coincident_fraction=float(np.mean(coincident)),
        aligned=grid.aligned,
    )
    meta.elapsed_us = (time.perf_counter_ns() - t0) // 1000
    return QueryResult(values, grid.group_dims, grid.edges, meta,
                       v_min=v_min, v_max=v_max, error=error)


def _overlap_fractions(edges: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Share of [lo, hi] falling into each cell; point mass if degenerate."""
    if hi > lo:
        ov = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None)
        return ov / (hi - lo)
    f = np.zeros(len(edges) - 1)
    i = int(bin_indices(np.array([lo]), edges)[0])
    if 0 <= i < len(f):
        f[i] = 1.0
    return f


def _fold_coincidence(coincident: np.ndarray, leaf: Node, arrays: list[np.ndarray],
                      schema: Schema, grid: ComputationalGrid) -> None:
    """AND per-cell alignment of this contribution into the running mask.

    A cell stays marked aligned only while every snapped boundary of every
    contribution coincides with a table cell edge, in which case the nearest
    rounding is not an estimate but the exact answer.
    """
    disps = leaf.ih.nearest_displacements(arrays)
    pos = {g: i for i, g in enumerate(grid.group_dims)}
    k = len(grid.group_dims)
    for ax in range(schema.d):
        dim = schema.dims[ax]
        tol = (dim.domain_max - dim.domain_min) / dim.scale_count * 1e-9
        ok = disps[ax] <= tol
        if ax in pos:
            cells = ok[:-1] & ok[1:]
            shape = [1] * k
            shape[pos[ax]] = -1
            coincident &= cells.reshape(shape)
        else:
            coincident &= bool(ok.all())


def _bound_values(acc_lo: np.ndarray, acc_hi: np.ndarray,
                  measure: Measure, cfg: DescriptorConfig):
    """Lower/upper value estimates from the inward/outward descriptor sums."""
    if measure.kind == "count":
        return count_of(acc_lo, cfg).copy(), count_of(acc_hi, cfg).copy()
    if measure.kind == "sum":
        return acc_lo[..., 1].copy(), acc_hi[..., 1].copy()
    # mean: smallest sum over largest count, largest sum over smallest count
    c_lo, c_hi = acc_lo[..., 0], acc_hi[..., 0]
    s_lo, s_hi = acc_lo[..., 1], acc_hi[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        v_min = np.where(c_hi > 0, s_lo / c_hi, EMPTY)
        v_max = np.where(c_lo > 0, s_hi / c_lo, EMPTY)
    return v_min, v_max
