"""Synthetic dataset generators for benchmarks and tests.

Both generators return chunk-source callables: every call restarts an
identical deterministic stream, which is what the two-pass builder needs.
Measure values are integer-valued floats so exact sums are easy to check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
import pandas as pd

from .model import DimensionSpec, Schema, auto_scale_count


@dataclass(frozen=True)
class SplomSpec:
    """Clustered d-dimensional point cloud with a uniform background."""

    rows: int
    dims: int = 5
    clusters: int = 8
    cluster_std: float = 0.04  # fraction of the domain span
    background: float = 0.2  # fraction of rows drawn uniformly
    domain: tuple[float, float] = (0.0, 1.0)
    scale_count: Optional[int] = None  # default: auto for the dimensionality
    seed: int = 7
    chunk_rows: int = 200_000

    def resolved_scale_count(self) -> int:
        return self.scale_count or auto_scale_count(self.dims)


def splom_schema(spec: SplomSpec) -> Schema:
    lo, hi = spec.domain
    dims = tuple(
        DimensionSpec(name=f"x{i}", domain_min=lo, domain_max=hi,
                      scale_count=spec.resolved_scale_count())
        for i in range(spec.dims)
    )
    return Schema(dims, measure_names=("value",))


def splom_source(spec: SplomSpec):
    """Chunk-source callable over the clustered cloud."""
    lo, hi = spec.domain
    span = hi - lo

    def chunks() -> Iterator[tuple[np.ndarray, np.ndarray]]:
        rng = np.random.default_rng(spec.seed)
        centers = rng.uniform(lo + 0.1 * span, hi - 0.1 * span,
                              size=(spec.clusters, spec.dims))
        remaining = spec.rows
        while remaining > 0:
            n = min(spec.chunk_rows, remaining)
            remaining -= n
            which = rng.integers(0, spec.clusters, size=n)
            pts = centers[which] + rng.normal(0.0, spec.cluster_std * span,
                                              size=(n, spec.dims))
            uniform = rng.random(n) < spec.background
            n_bg = int(uniform.sum())
            if n_bg:
                pts[uniform] = rng.uniform(lo, hi, size=(n_bg, spec.dims))
            np.clip(pts, lo, hi, out=pts)
            values = rng.integers(0, 1000, size=n).astype(np.float64)
            yield pts, values[:, None]

    return chunks


def skewed_schema(scale_count: int = 360, domain: tuple[float, float] = (0.0, 1.0)) -> Schema:
    lo, hi = domain
    dims = (
        DimensionSpec(name="x", domain_min=lo, domain_max=hi, scale_count=scale_count),
        DimensionSpec(name="y", domain_min=lo, domain_max=hi, scale_count=scale_count),
    )
    return Schema(dims, measure_names=("value",))


def skewed_source(rows: int, seed: int = 11, chunk_rows: int = 200_000,
                  domain: tuple[float, float] = (0.0, 1.0)):
    """Heavily nonuniform 2-d stream: corner mass, a tight blob, thin tail."""
    lo, hi = domain
    span = hi - lo

    def chunks() -> Iterator[tuple[np.ndarray, np.ndarray]]:
        rng = np.random.default_rng(seed)
        remaining = rows
        while remaining > 0:
            n = min(chunk_rows, remaining)
            remaining -= n
            u = rng.random((n, 2))
            pts = u ** 3  # density piles up toward the low corner
            pick = rng.random(n)
            blob = pick < 0.15
            n_blob = int(blob.sum())
            if n_blob:
                pts[blob] = rng.normal((0.7, 0.3), 0.02, size=(n_blob, 2))
            flat = pick > 0.85
            n_flat = int(flat.sum())
            if n_flat:
                pts[flat] = rng.random((n_flat, 2))
            pts = lo + span * np.clip(pts, 0.0, 1.0)
            values = rng.integers(0, 1000, size=n).astype(np.float64)
            yield pts, values[:, None]

    return chunks


def write_csv(schema: Schema, source, path: str) -> int:
    """Stream a chunk source into a CSV with one column per schema field."""
    cols = [d.name for d in schema.dims] + list(schema.measure_names)
    rows = 0
    first = True
    for coords, measures in source():
        frame = pd.DataFrame(np.hstack([coords, measures]), columns=cols)
        frame.to_csv(path, mode="w" if first else "a", header=first, index=False)
        first = False
        rows += len(frame)
    if first:  # empty stream still writes a header
        pd.DataFrame(columns=cols).to_csv(path, index=False)
    return rows
