"""CSV ingestion and dataset configuration.

A dataset is described by one JSON config document:

    {
      "dimensions": [
        {"name": "x", "kind": "numeric", "domain": [0, 1] or "auto",
         "scale_count": 360 or "auto", "role": "index"},
        {"name": "day", "kind": "categorical", "categories": [...] or "auto"},
        {"name": "value", "role": "measure"}
      ],
      "descriptor": {"kind": "aggregate", "bins": 2, "measure": "value"},
      "build": {... BuildConfig fields ...},
      "lsh": {... LshConfig fields ...}
    }

Roles: "index" (coordinate), "measure" (aggregated column), "both".
Ingestion is streaming and single-pass; a resolving pre-pass runs only when
some field says "auto". Rows with unparseable cells, unknown categories, or
values outside an explicitly configured domain are skipped and tallied.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
import pandas as pd

from .lsh import LshConfig
from .model import DescriptorConfig, DimensionSpec, Schema, auto_scale_count
from .rtree import BuildConfig

_MAX_CATEGORIES = 10_000


@dataclass
class IngestReport:
    """Mutable row tally; the chunk source updates it on every full pass."""

    rows: int = 0
    malformed_rows: int = 0


@dataclass(frozen=True)
class DatasetConfig:
    schema: Schema
    descriptor: DescriptorConfig
    build: BuildConfig
    lsh: LshConfig
    index_columns: tuple[str, ...] = ()
    measure_columns: tuple[str, ...] = ()


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _split_roles(config: dict) -> tuple[list[dict], list[str]]:
    dims_cfg, measures = [], []
    for entry in config.get("dimensions", []):
        role = entry.get("role", "index")
        if role not in ("index", "measure", "both"):
            raise ValueError(f"column {entry.get('name')!r}: unknown role {role!r}")
        if role in ("index", "both"):
            dims_cfg.append(entry)
        if role in ("measure", "both"):
            measures.append(entry["name"])
    if not dims_cfg:
        raise ValueError("config needs at least one index dimension")
    if len(dims_cfg) > 5:
        warnings.warn("more than 5 index dimensions: expect large tables "
                      "and weak pruning", stacklevel=2)
    return dims_cfg, measures


def _needs_scan(dims_cfg: list[dict]) -> bool:
    for entry in dims_cfg:
        if entry.get("kind", "numeric") == "categorical":
            if entry.get("categories", "auto") == "auto":
                return True
        elif entry.get("domain", "auto") == "auto":
            return True
    return False


def _scan(csv_path: str, dims_cfg: list[dict], chunk_rows: int) -> dict:
    """Resolving pre-pass: per-column min/max and category sets."""
    names = [e["name"] for e in dims_cfg]
    lo = {n: np.inf for n in names}
    hi = {n: -np.inf for n in names}
    cats: dict[str, set] = {e["name"]: set() for e in dims_cfg
                            if e.get("kind", "numeric") == "categorical"}
    for chunk in pd.read_csv(csv_path, chunksize=chunk_rows, usecols=names):
        for entry in dims_cfg:
            n = entry["name"]
            if n in cats:
                cats[n].update(str(v) for v in chunk[n].dropna().unique())
                if len(cats[n]) > _MAX_CATEGORIES:
                    raise ValueError(f"column {n!r}: over {_MAX_CATEGORIES} categories")
            else:
                col = pd.to_numeric(chunk[n], errors="coerce")
                if col.notna().any():
                    lo[n] = min(lo[n], float(col.min()))
                    hi[n] = max(hi[n], float(col.max()))
    return {"lo": lo, "hi": hi, "cats": {k: tuple(sorted(v)) for k, v in cats.items()}}


def resolve_config(csv_path: str, config: dict) -> DatasetConfig:
    """Turn the JSON document into concrete schema and build settings."""
    dims_cfg, measures = _split_roles(config)
    build = BuildConfig(**config.get("build", {}))
    scanned = _scan(csv_path, dims_cfg, build.chunk_rows) if _needs_scan(dims_cfg) else None

    dims = []
    for entry in dims_cfg:
        name = entry["name"]
        kind = entry.get("kind", "numeric")
        if kind == "categorical":
            labels = entry.get("categories", "auto")
            if labels == "auto":
                labels = scanned["cats"][name]
                if not labels:
                    raise ValueError(f"column {name!r}: no category values found")
            dims.append(DimensionSpec(name=name, kind="categorical",
                                      category_labels=tuple(str(c) for c in labels)))
            continue
        domain = entry.get("domain", "auto")
        if domain == "auto":
            lo, hi = scanned["lo"][name], scanned["hi"][name]
            if not np.isfinite(lo) or not np.isfinite(hi):
                raise ValueError(f"column {name!r}: no numeric values found")
            if hi <= lo:
                hi = lo + 1.0
        else:
            lo, hi = float(domain[0]), float(domain[1])
        sc = entry.get("scale_count", "auto")
        if sc == "auto":
            sc = auto_scale_count(len(dims_cfg))
        dims.append(DimensionSpec(name=name, domain_min=lo, domain_max=hi,
                                  scale_count=int(sc)))

    schema = Schema(tuple(dims), tuple(measures))
    descriptor = DescriptorConfig(**config.get("descriptor", {"kind": "aggregate", "bins": 1}))
    if descriptor.measure is not None and descriptor.measure not in measures:
        raise ValueError(f"descriptor measure {descriptor.measure!r} is not a measure column")
    lsh = LshConfig(**config.get("lsh", {}))
    return DatasetConfig(schema, descriptor, build, lsh,
                         tuple(e["name"] for e in dims_cfg), tuple(measures))


def chunk_source(csv_path: str, cfg: DatasetConfig, report: Optional[IngestReport] = None):
    """Re-iterable chunk stream of (coords, measures) float arrays.

    Every full pass recounts the tally into `report`, so after a build the
    report reflects the file as ingested. Skipped rows: unparseable cells,
    unknown category labels, numeric coordinates outside an explicit domain.
    """
    schema = cfg.schema
    report = report if report is not None else IngestReport()
    dim_cols = [d.name for d in schema.dims]
    needed = list(dict.fromkeys(dim_cols + list(cfg.measure_columns)))
    label_maps = {d.name: {lab: i for i, lab in enumerate(d.category_labels)}
                  for d in schema.dims if d.kind == "categorical"}

    def chunks() -> Iterator[tuple[np.ndarray, np.ndarray]]:
        report.rows = 0
        report.malformed_rows = 0
        header = pd.read_csv(csv_path, nrows=0)
        missing = [c for c in needed if c not in header.columns]
        if missing:
            raise ValueError(f"CSV is missing columns: {missing}")
        for frame in pd.read_csv(csv_path, chunksize=cfg.build.chunk_rows, usecols=needed):
            n = len(frame)
            if n == 0:
                continue
            cols = {}
            ok = np.ones(n, dtype=bool)
            for dim in schema.dims:
                if dim.kind == "categorical":
                    mapped = frame[dim.name].astype(str).map(label_maps[dim.name])
                    vals = mapped.to_numpy(dtype=np.float64, na_value=np.nan) + 0.5
                else:
                    vals = pd.to_numeric(frame[dim.name], errors="coerce").to_numpy(np.float64)
                    ok &= (vals >= dim.domain_min) & (vals <= dim.domain_max)
                ok &= np.isfinite(vals)
                cols[dim.name] = vals
            meas = {}
            for name in cfg.measure_columns:
                vals = pd.to_numeric(frame[name], errors="coerce").to_numpy(np.float64)
                ok &= np.isfinite(vals)
                meas[name] = vals
            report.rows += int(ok.sum())
            report.malformed_rows += int(n - ok.sum())
            if not ok.any():
                continue
            coords = np.stack([cols[c][ok] for c in dim_cols], axis=1)
            if cfg.measure_columns:
                measures = np.stack([meas[c][ok] for c in cfg.measure_columns], axis=1)
            else:
                measures = np.empty((coords.shape[0], 0))
            yield coords, measures

    return chunks, report


def prepare(csv_path: str, config: dict):
    """Resolve the config against a CSV: (DatasetConfig, chunk source, report)."""
    cfg = resolve_config(csv_path, config)
    chunks, report = chunk_source(csv_path, cfg)
    return cfg, chunks, report
