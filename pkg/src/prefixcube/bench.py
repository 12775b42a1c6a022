"""Measurement harness: scan oracle, error metric, workloads, experiments.

The oracle answers the same resolved question as the engine (same snapped
edges, same half-open cells with the domain's top edge closed), by brute
force over the raw rows. Error is the mean of |v - exact| / max(v, exact)
per cell, with empty-empty cells contributing zero.

Four canned experiments cover the interesting tradeoffs: construction
scaling (storage/latency plateau under a bounded skeleton), accuracy vs
latency across traversal heights, hash lookup vs exact tree search, and
scale-aligned vs misaligned grids. Each returns a plain dict and can write
it as JSON plus a readable text table.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .engine import (
    ComputationalGrid,
    GroupBy,
    QuerySpec,
    _category_slices,
    execute,
    resolve_extent,
)
from .index import DatasetIndex
from .lsh import LshConfig
from .model import EMPTY, Measure, Range, Schema, bin_indices
from .rtree import BuildConfig
from .synth import SplomSpec, skewed_schema, skewed_source, splom_schema, splom_source


def spec_to_payload(schema: Schema, spec: QuerySpec) -> dict:
    """HTTP body for POST /query answering the same question as `spec`."""
    body: dict = {
        "filter": {},
        "group_by": [],
        "measure": {"kind": spec.measure.kind, "dim": spec.measure.dim},
        "accuracy_mode": spec.mode,
        "want_error_bounds": spec.error_bounds,
        "align_scales": spec.align_scales,
    }
    for ax, (lo, hi) in spec.grid.filter.intervals.items():
        if ax not in spec.grid.group_dims:
            body["filter"][schema.dims[ax].name] = [float(lo), float(hi)]
    for ax, labels in spec.category_filter.items():
        dim = schema.dims[ax]
        body["filter"][dim.name] = {
            "categories": [dim.category_labels[i] for i in labels]}
    for i, g in enumerate(spec.grid.group_dims):
        body["group_by"].append({"dim": schema.dims[g].name,
                                 "edges": [float(v) for v in spec.grid.edges[i]]})
    return body


def materialize(source) -> tuple[np.ndarray, np.ndarray]:
    """Pull a chunk stream into memory for the oracle."""
    coords, meas = [], []
    for c, m in source():
        coords.append(np.asarray(c, dtype=np.float64))
        meas.append(np.asarray(m, dtype=np.float64))
    if not coords:
        return np.zeros((0, 0)), np.zeros((0, 0))
    return np.vstack(coords), np.vstack(meas)


def _interval_mask(values: np.ndarray, lo: float, hi: float, domain_max: float) -> np.ndarray:
    """Half-open selection [lo, hi); the domain's top boundary stays closed."""
    m = values >= lo
    if hi >= domain_max:
        return m & (values <= hi)
    return m & (values < hi)


def oracle_grid(coords: np.ndarray, measures: np.ndarray, schema: Schema,
                spec: QuerySpec) -> np.ndarray:
    """Exact per-cell values for the same resolved question the engine answers."""
    grid, box = resolve_extent(schema, spec)
    slices = _category_slices(spec, schema, box)
    k = len(grid.group_dims)
    shape = grid.shape
    mcol = None
    if spec.measure.kind != "count":
        mcol = measures[:, schema.measure_index(spec.measure.dim)]

    sel = np.zeros(len(coords), dtype=bool)
    for sl in slices:
        m = np.ones(len(coords), dtype=bool)
        for ax in range(schema.d):
            if ax in grid.group_dims:
                continue
            lo, hi = float(box[0, ax]), float(box[1, ax])
            if ax in sl:
                lo, hi = max(lo, sl[ax][0]), min(hi, sl[ax][1])
                if hi < lo:
                    m[:] = False
                    break
            m &= _interval_mask(coords[:, ax], lo, hi, schema.dims[ax].domain_max)
        sel |= m

    idx = []
    for i, g in enumerate(grid.group_dims):
        e = grid.edges[i]
        j = bin_indices(coords[:, g], e)
        ok = (j >= 0) & (j <= len(e) - 2)
        if e[-1] < schema.dims[g].domain_max:
            ok &= coords[:, g] != e[-1]  # interior top edge is open
        sel &= ok
        idx.append(j)

    cell = tuple(j[sel] for j in idx)
    counts = np.zeros(shape)
    np.add.at(counts, cell, 1.0)
    if spec.measure.kind == "count":
        return counts
    vals = mcol[sel]
    if spec.measure.kind in ("sum", "mean"):
        sums = np.zeros(shape)
        np.add.at(sums, cell, vals)
        if spec.measure.kind == "sum":
            return sums
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(counts > 0, sums / counts, EMPTY)
    # median: group values by flattened cell id
    flat = np.ravel_multi_index(cell, shape) if k else np.zeros(len(vals), dtype=np.int64)
    out = np.full(shape, EMPTY).reshape(-1)
    order = np.argsort(flat, kind="stable")
    flat, vals = flat[order], vals[order]
    bounds = np.searchsorted(flat, np.arange(int(np.prod(shape)) + 1))
    for c in range(int(np.prod(shape))):
        part = vals[bounds[c]:bounds[c + 1]]
        if len(part):
            out[c] = float(np.median(part))
    return out.reshape(shape)


def oracle_from_csv(csv_path: str, config: dict, spec: QuerySpec) -> np.ndarray:
    """Exact grid for a query against an ingested CSV."""
    from .ingest import prepare

    cfg, source, _ = prepare(csv_path, config)
    coords, measures = materialize(source)
    return oracle_grid(coords, measures, cfg.schema, spec)


def are(values, exact) -> float:
    """Mean of |v - exact| / max(v, exact); 0/0 cells contribute 0."""
    v = np.nan_to_num(np.asarray(values, dtype=np.float64), nan=0.0)
    e = np.nan_to_num(np.asarray(exact, dtype=np.float64), nan=0.0)
    if v.shape != e.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {e.shape}")
    denom = np.maximum(v, e)
    with np.errstate(divide="ignore", invalid="ignore"):
        cell = np.where(denom > 0, np.abs(v - e) / denom, 0.0)
    return float(cell.mean()) if cell.size else 0.0


def latency_stats(samples_us: Sequence[float]) -> dict:
    samples = sorted(float(s) for s in samples_us)
    n = len(samples)
    if n == 0:
        return {"n": 0, "median_us": 0.0, "mean_us": 0.0, "stdev_us": 0.0,
                "p90_us": 0.0, "max_us": 0.0}
    return {
        "n": n,
        "median_us": statistics.median(samples),
        "mean_us": statistics.fmean(samples),
        "stdev_us": statistics.stdev(samples) if n > 1 else 0.0,
        "p90_us": samples[min(n - 1, max(0, int(np.ceil(0.9 * n)) - 1))],
        "max_us": samples[-1],
    }


# -- workloads -------------------------------------------------------------------


@dataclass(frozen=True)
class WorkloadSpec:
    """Seeded query-generation policy; every query carries an aligned label."""

    kind: str = "random"  # random | zoom | brush
    queries: int = 100
    group_dims: tuple[int, ...] = (0, 1)
    bins: tuple[int, ...] = (20, 20)
    aligned: bool = True
    seed: int = 123
    measure: Measure = field(default_factory=Measure)
    mode: str = "tree"
    bounds: bool = False
    min_width: float = 0.1  # of the domain span, for group dims
    max_width: float = 0.6


def _random_interval(rng, dim, min_w: float, max_w: float) -> tuple[float, float]:
    span = dim.domain_max - dim.domain_min
    width = rng.uniform(min_w, max_w) * span
    lo = dim.domain_min + rng.uniform(0.0, span - width)
    return lo, lo + width


def _snap_interval(dim, lo: float, hi: float) -> tuple[float, float]:
    """Snap to the lattice keeping at least one unit of width."""
    slo = float(dim.snap_nearest(lo))
    shi = float(dim.snap_nearest(hi))
    if shi <= slo:
        k = min(int(dim.unit_round(slo)), dim.scale_count - 1)
        slo, shi = float(dim.lattice_value(k)), float(dim.lattice_value(k + 1))
    return slo, shi


def _spec_from_geometry(schema: Schema, ws: WorkloadSpec,
                        boxes: dict[int, tuple[float, float]]) -> QuerySpec:
    intervals = {}
    for ax, (lo, hi) in boxes.items():
        if ws.aligned:
            lo, hi = _snap_interval(schema.dims[ax], lo, hi)
        intervals[ax] = (lo, hi)
    edges = []
    for i, ax in enumerate(ws.group_dims):
        lo, hi = intervals[ax]
        edges.append(np.linspace(lo, hi, ws.bins[i] + 1))
    grid = ComputationalGrid(ws.group_dims, tuple(edges), Range(intervals),
                             aligned=False)
    return QuerySpec(grid=grid, measure=ws.measure, mode=ws.mode,
                     error_bounds=ws.bounds, align_scales=ws.aligned)


def make_workload(schema: Schema, ws: WorkloadSpec) -> list[QuerySpec]:
    """Replayable list of queries for one policy."""
    rng = np.random.default_rng(ws.seed)
    specs = []
    if ws.kind == "random":
        for _ in range(ws.queries):
            boxes = {}
            for ax, dim in enumerate(schema.dims):
                mn, mx = (ws.min_width, ws.max_width) if ax in ws.group_dims else (0.2, 0.7)
                boxes[ax] = _random_interval(rng, dim, mn, mx)
            specs.append(_spec_from_geometry(schema, ws, boxes))
    elif ws.kind == "zoom":
        focus = {ax: rng.uniform(dim.domain_min, dim.domain_max)
                 for ax, dim in enumerate(schema.dims)}
        for step in range(ws.queries):
            shrink = 0.7 ** step
            boxes = {}
            for ax, dim in enumerate(schema.dims):
                span = (dim.domain_max - dim.domain_min) * shrink
                lo = np.clip(focus[ax] - span / 2, dim.domain_min, dim.domain_max - span)
                boxes[ax] = (float(lo), float(lo + span))
            specs.append(_spec_from_geometry(schema, ws, boxes))
    elif ws.kind == "brush":
        sweep_ax = next((ax for ax in range(schema.d) if ax not in ws.group_dims),
                        ws.group_dims[0])
        dim = schema.dims[sweep_ax]
        span = dim.domain_max - dim.domain_min
        width = 0.2 * span
        for step in range(ws.queries):
            t = step / max(ws.queries - 1, 1)
            lo = dim.domain_min + t * (span - width)
            boxes = {ax: (d.domain_min, d.domain_max)
                     for ax, d in enumerate(schema.dims)}
            boxes[sweep_ax] = (lo, lo + width)
            specs.append(_spec_from_geometry(schema, ws, boxes))
    else:
        raise ValueError(f"unknown workload kind {ws.kind!r}")
    return specs


def paired_alignment_workload(schema: Schema, ws: WorkloadSpec) -> list[tuple[QuerySpec, QuerySpec]]:
    """(aligned, misaligned) variants of identical query geometry."""
    raw = make_workload(schema, replace(ws, aligned=False))
    pairs = []
    for spec in raw:
        aligned = replace(spec, align_scales=True)
        pairs.append((aligned, spec))
    return pairs


# -- experiments -----------------------------------------------------------------


def _default_build(**over) -> BuildConfig:
    base = dict(m_max=32, sample_rate=0.02, max_skeleton_points=20_000, rng_seed=5)
    base.update(over)
    return BuildConfig(**base)


def _run_queries(index: DatasetIndex, specs: Sequence[QuerySpec]):
    results = []
    for spec in specs:
        results.append(execute(index, spec))
    return results


def http_roundtrip_us(index: DatasetIndex, payloads: Sequence[dict]) -> list[float]:
    """Per-request wall time through the full ASGI + JSON path, in-process."""
    import asyncio

    import httpx

    from .server import create_app

    app = create_app(index=index)

    async def drive() -> list[float]:
        times = []
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://index") as client:
            for body in payloads:
                t0 = time.perf_counter_ns()
                resp = await client.post("/query", json=body)
                times.append((time.perf_counter_ns() - t0) / 1000)
                resp.raise_for_status()
        return times

    return asyncio.run(drive())


def _scaling_row(rows: int, seed: int, build_over: dict, scale_count: int,
                 queries: int) -> dict:
    """One dataset size: build, measure engine-boundary and HTTP latency."""
    build = _default_build(**build_over)
    schema = skewed_schema(scale_count=scale_count)
    index = DatasetIndex.build(skewed_source(rows, seed=seed), schema, build)
    specs = make_workload(schema, WorkloadSpec(
        kind="random", queries=queries, bins=(20, 20), aligned=True, seed=77))
    results = _run_queries(index, specs)
    engine_lat = latency_stats([r.meta.elapsed_us for r in results])
    payloads = [spec_to_payload(schema, s) for s in specs]
    e2e_lat = latency_stats(http_roundtrip_us(index, payloads))
    return {
        "rows": rows,
        "build_seconds": round(index.stats.build_seconds, 3),
        "storage_bytes": index.stats.storage_bytes,
        "subspaces": index.stats.subspace_count,
        "tree_height": index.stats.tree_height,
        "median_engine_us": engine_lat["median_us"],
        "median_http_us": e2e_lat["median_us"],
    }


def run_construction_scaling(config: Optional[dict] = None) -> dict:
    cfg = config or {}
    rows_list = cfg.get("rows", [100_000, 250_000, 500_000, 1_000_000])
    args = [(rows, cfg.get("seed", 11), cfg.get("build", {}),
             cfg.get("scale_count", 240), cfg.get("queries", 30))
            for rows in rows_list]
    if cfg.get("parallel"):
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(len(args), os.cpu_count() or 1)) as ex:
            table = list(ex.map(_scaling_row, *zip(*args)))
    else:
        table = [_scaling_row(*a) for a in args]
    build = _default_build(**cfg.get("build", {}))
    return {"experiment": "construction_scaling", "build": _build_doc(build),
            "parallel": bool(cfg.get("parallel")), "rows": table}


def run_height_tradeoff(config: Optional[dict] = None) -> dict:
    cfg = config or {}
    rows = cfg.get("rows", 1_000_000)
    build = _default_build(**cfg.get("build", {}))
    schema = skewed_schema(scale_count=cfg.get("scale_count", 240))
    src = skewed_source(rows, seed=cfg.get("seed", 11))
    index = DatasetIndex.build(src, schema, build)
    coords, measures = materialize(src)
    ws = WorkloadSpec(kind="random", queries=cfg.get("queries", 40),
                      bins=(30, 30), aligned=False, seed=31)
    base_specs = make_workload(schema, ws)
    exact = [oracle_grid(coords, measures, schema, s) for s in base_specs]
    heights = list(range(1, index.root.level + 1))
    table = []
    for h in heights:
        errs, lats = [], []
        for spec, truth in zip(base_specs, exact):
            r = execute(index, replace(spec, mode=f"tree@{h}"))
            errs.append(are(r.values, truth))
            lats.append(r.meta.elapsed_us)
        table.append({"height": h,
                      "median_are": float(np.median(errs)),
                      "median_latency_us": float(np.median(lats))})
    return {"experiment": "height_tradeoff", "rows": rows,
            "tree_height": index.root.level, "heights": table}


def run_lsh_vs_tree(config: Optional[dict] = None) -> dict:
    cfg = config or {}
    spec = SplomSpec(rows=cfg.get("rows", 100_000), dims=cfg.get("dims", 5),
                     seed=cfg.get("seed", 7))
    schema = splom_schema(spec)
    build = _default_build(**cfg.get("build", {"m_max": 64}))
    index = DatasetIndex.build(splom_source(spec), schema, build)

    rng = np.random.default_rng(cfg.get("query_seed", 99))
    n = cfg.get("queries", 1000)
    recalls, violations = [], 0
    for _ in range(n):
        boxes = [_random_interval(rng, dim, 0.1, 0.8) for dim in schema.dims]
        lo = np.array([b[0] for b in boxes])
        hi = np.array([b[1] for b in boxes])
        exact_ids = {node.id for node in index.candidates_tree(lo, hi)}
        got_ids = {node.id for node in index.candidates_lsh(lo, hi)}
        violations += len(got_ids - exact_ids)
        if exact_ids:
            recalls.append(len(got_ids & exact_ids) / len(exact_ids))
    curve = []
    for tables in cfg.get("tables_sweep", [1, 2, 4, 8, 16]):
        variant = index.with_lsh(LshConfig(tables=tables,
                                           width_factor=index.lsh_cfg.width_factor,
                                           rng_seed=index.lsh_cfg.rng_seed))
        rng2 = np.random.default_rng(cfg.get("query_seed", 99))
        rs = []
        for _ in range(cfg.get("sweep_queries", 200)):
            boxes = [_random_interval(rng2, dim, 0.1, 0.8) for dim in schema.dims]
            lo = np.array([b[0] for b in boxes])
            hi = np.array([b[1] for b in boxes])
            exact_ids = {node.id for node in variant.candidates_tree(lo, hi)}
            got_ids = {node.id for node in variant.candidates_lsh(lo, hi)}
            if exact_ids:
                rs.append(len(got_ids & exact_ids) / len(exact_ids))
        curve.append({"tables": tables, "median_recall": float(np.median(rs))})
    return {
        "experiment": "lsh_vs_tree",
        "queries": n,
        "false_positive_leaves_after_validation": violations,
        "mean_recall": float(np.mean(recalls)),
        "median_recall": float(np.median(recalls)),
        "recall_vs_tables": curve,
    }


def run_scale_alignment(config: Optional[dict] = None) -> dict:
    cfg = config or {}
    rows = cfg.get("rows", 1_000_000)
    build = _default_build(**cfg.get("build", {}))
    schema = skewed_schema(scale_count=cfg.get("scale_count", 240))
    src = skewed_source(rows, seed=cfg.get("seed", 11))
    index = DatasetIndex.build(src, schema, build)
    coords, measures = materialize(src)
    ws = WorkloadSpec(kind="random", queries=cfg.get("queries", 300),
                      bins=(24, 24), seed=59)
    pairs = paired_alignment_workload(schema, ws)
    rows_out = []
    for aligned_spec, raw_spec in pairs:
        ra = execute(index, aligned_spec)
        rm = execute(index, raw_spec)
        ta = oracle_grid(coords, measures, schema, aligned_spec)
        tm = oracle_grid(coords, measures, schema, raw_spec)
        rows_out.append({
            "aligned_are": are(ra.values, ta),
            "misaligned_are": are(rm.values, tm),
            "aligned_coincident": ra.meta.coincident_fraction,
            "misaligned_coincident": rm.meta.coincident_fraction,
        })
    mean_aligned = float(np.mean([r["aligned_are"] for r in rows_out]))
    mean_misaligned = float(np.mean([r["misaligned_are"] for r in rows_out]))
    return {
        "experiment": "scale_alignment",
        "queries": len(rows_out),
        "mean_aligned_are": mean_aligned,
        "mean_misaligned_are": mean_misaligned,
        "reduction": 1.0 - (mean_aligned / mean_misaligned if mean_misaligned else 0.0),
        "mean_aligned_coincident": float(np.mean([r["aligned_coincident"] for r in rows_out])),
        "mean_misaligned_coincident": float(np.mean([r["misaligned_coincident"] for r in rows_out])),
    }


_EXPERIMENTS: dict[str, Callable[[Optional[dict]], dict]] = {
    "construction_scaling": run_construction_scaling,
    "height_tradeoff": run_height_tradeoff,
    "lsh_vs_tree": run_lsh_vs_tree,
    "scale_alignment": run_scale_alignment,
}


def _build_doc(build: BuildConfig) -> dict:
    return {"m_max": build.m_max, "sample_rate": build.sample_rate,
            "max_skeleton_points": build.max_skeleton_points,
            "rng_seed": build.rng_seed}


def _table_rows(report: dict) -> Optional[list[dict]]:
    for key in ("rows", "heights", "recall_vs_tables"):
        if isinstance(report.get(key), list):
            return report[key]
    return None


def _text_table(report: dict) -> str:
    lines = [f"experiment: {report.get('experiment')}"]
    rows = _table_rows(report)
    if rows:
        cols = list(rows[0].keys())
        widths = [max(len(c), *(len(_fmt(r[c])) for r in rows)) for c in cols]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
        for r in rows:
            lines.append("  ".join(_fmt(r[c]).ljust(w) for c, w in zip(cols, widths)))
    for key, val in report.items():
        if key in ("experiment",) or isinstance(val, (list, dict)):
            continue
        lines.append(f"{key}: {_fmt(val)}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def run_experiment(kind: str, config: Optional[dict] = None,
                   out_dir: Optional[str] = None) -> dict:
    if kind not in _EXPERIMENTS:
        raise ValueError(f"unknown experiment {kind!r}; "
                         f"choose from {sorted(_EXPERIMENTS)}")
    started = time.perf_counter()
    report = _EXPERIMENTS[kind](config)
    report["wall_seconds"] = round(time.perf_counter() - started, 3)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"{kind}.json"), "w", encoding="utf-8") as f:
            json.dump(report, f, sort_keys=True, indent=2)
        with open(os.path.join(out_dir, f"{kind}.txt"), "w", encoding="utf-8") as f:
            f.write(_text_table(report))
        rows = _table_rows(report)
        if rows:
            with open(os.path.join(out_dir, f"{kind}.csv"), "w", encoding="utf-8",
                      newline="") as f:
                writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
                writer.writeheader()
                writer.writerows(rows)
    return report
