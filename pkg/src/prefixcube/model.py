"""Core model: dimensions, ranges, feature descriptors, measures.

A dataset schema is a list of indexed dimensions (numeric or categorical)
plus named measure columns that ride along with each point. Aggregates are
accumulated into fixed-length descriptor vectors:

* ``aggregate`` kind — slot 0 holds a point count, slot 1 (optional) holds
  the running sum of one measure column.
* ``histogram`` kind — B bin counts of one measure column over a local
  value range shared by the owning table.

Descriptors of the same kind and length form a commutative group under
elementwise addition/subtraction, which is what makes prefix-sum tables and
their inclusion-exclusion queries work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import scales

EMPTY = math.nan
"""Marker for an undefined aggregate (mean/median of an empty selection).

Distinct from 0: an empty cell has count 0, but its mean is EMPTY, not 0.
Serialized as JSON null.
"""


def is_empty(x) -> bool:
    return isinstance(x, float) and math.isnan(x)


# Default per-dimension scale counts when the schema says "auto", keyed by
# dataset dimensionality. All values are 2-3-5-smooth, and count^d stays
# within the default per-leaf cell budget (65536), so leaf tables keep one
# cell per scale unit even for a domain-spanning leaf and aligned queries
# stay exact.
_AUTO_SCALES = {1: 3600, 2: 240, 3: 40, 4: 16, 5: 8}


@dataclass(frozen=True)
class DimensionSpec:
    """One indexed dimension.

    Numeric dimensions carry a [domain_min, domain_max] interval divided
    into `scale_count` lattice units. Categorical dimensions get one unit
    per label: domain [0, len(labels)], points sit at index + 0.5.
    """

    name: str
    kind: str = "numeric"  # "numeric" | "categorical"
    domain_min: float = 0.0
    domain_max: float = 1.0
    scale_count: int = 360
    category_labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise ValueError(f"unknown dimension kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.category_labels:
                raise ValueError(f"dimension {self.name!r}: categorical needs labels")
            k = len(self.category_labels)
            object.__setattr__(self, "domain_min", 0.0)
            object.__setattr__(self, "domain_max", float(k))
            object.__setattr__(self, "scale_count", k)
            object.__setattr__(self, "category_labels", tuple(self.category_labels))
            return
        if not self.domain_min < self.domain_max:
            raise ValueError(
                f"dimension {self.name!r}: domain_min must be < domain_max"
            )
        if self.scale_count < 1 or not scales.is_smooth(self.scale_count):
            raise ValueError(
                f"dimension {self.name!r}: scale_count {self.scale_count} is not "
                "2-3-5-smooth; pick e.g. "
                f"{scales.nearest_smooth(self.scale_count)}"
            )

    # Lattice helpers; all delegate to the canonical formula in `scales`.
    def lattice_value(self, k):
        return scales.lattice_value(self.domain_min, self.domain_max, self.scale_count, k)

    def to_units(self, values):
        return scales.to_units(self.domain_min, self.domain_max, self.scale_count, values)

    def unit_floor(self, values):
        return scales.unit_floor(self.domain_min, self.domain_max, self.scale_count, values)

    def unit_ceil(self, values):
        return scales.unit_ceil(self.domain_min, self.domain_max, self.scale_count, values)

    def unit_round(self, values):
        return scales.unit_round(self.domain_min, self.domain_max, self.scale_count, values)

    def snap_nearest(self, values):
        return scales.snap_nearest(self.domain_min, self.domain_max, self.scale_count, values)

    def label_index(self, label: str) -> int:
        if self.category_labels is None:
            raise ValueError(f"dimension {self.name!r} is not categorical")
        try:
            return self.category_labels.index(label)
        except ValueError:
            raise KeyError(f"unknown category {label!r} for dimension {self.name!r}")


@dataclass(frozen=True)
class Schema:
    """Indexed dimensions (coordinate order) plus named measure columns."""

    dims: tuple[DimensionSpec, ...]
    measure_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        object.__setattr__(self, "measure_names", tuple(self.measure_names))
        # One column may serve as both a dimension and a measure, but names
        # must be unique within each role.
        dim_names = [d.name for d in self.dims]
        if len(set(dim_names)) != len(dim_names):
            raise ValueError("duplicate dimension names in schema")
        if len(set(self.measure_names)) != len(self.measure_names):
            raise ValueError("duplicate measure names in schema")

    @property
    def d(self) -> int:
        return len(self.dims)

    def dim_index(self, name: str) -> int:
        for i, dim in enumerate(self.dims):
            if dim.name == name:
                return i
        raise KeyError(f"unknown dimension {name!r}")

    def measure_index(self, name: str) -> int:
        try:
            return self.measure_names.index(name)
        except ValueError:
            raise KeyError(f"unknown measure column {name!r}")

    def full_domain(self) -> np.ndarray:
        """(2, d) array of [domain_min; domain_max] rows."""
        lo = [dim.domain_min for dim in self.dims]
        hi = [dim.domain_max for dim in self.dims]
        return np.array([lo, hi], dtype=np.float64)


@dataclass(frozen=True)
class DataPoint:
    """One record: coordinates over schema.dims plus measure column values."""

    coordinates: tuple[float, ...]
    measure_values: tuple[float, ...] = ()


@dataclass(frozen=True)
class Range:
    """Axis-aligned query box; unspecified dimensions mean the full domain."""

    intervals: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for dim, (lo, hi) in self.intervals.items():
            if not lo <= hi:
                raise ValueError(f"range on dim {dim}: lo {lo} > hi {hi}")

    def resolve(self, schema: Schema) -> np.ndarray:
        """(2, d) array of the box clipped to the schema domains."""
        box = schema.full_domain()
        for dim, (lo, hi) in self.intervals.items():
            if not 0 <= dim < schema.d:
                raise KeyError(f"range references unknown dimension {dim}")
            box[0, dim] = max(box[0, dim], lo)
            box[1, dim] = min(box[1, dim], hi)
            if box[0, dim] > box[1, dim]:  # disjoint from domain
                box[0, dim] = box[1, dim]
        return box


@dataclass(frozen=True)
class DescriptorConfig:
    """Shape of the per-cell descriptor vector.

    aggregate: bins == 1 (count) or 2 (count + sum of `measure`).
    histogram: bins >= 2 counts of `measure` over a local range.
    """

    kind: str = "aggregate"
    bins: int = 1
    measure: Optional[str] = None

    def __post_init__(self):
        if self.kind == "aggregate":
            if self.bins not in (1, 2):
                raise ValueError("aggregate descriptors have 1 or 2 slots")
            if self.bins == 2 and self.measure is None:
                raise ValueError("sum slot needs a measure column")
        elif self.kind == "histogram":
            if self.bins < 2:
                raise ValueError("histogram descriptors need >= 2 bins")
            if self.measure is None:
                raise ValueError("histogram descriptors need a measure column")
        else:
            raise ValueError(f"unknown descriptor kind {self.kind!r}")


@dataclass(frozen=True)
class FeatureDescriptor:
    """Immutable descriptor vector with its kind tag."""

    kind: str
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def descriptor_add(a: FeatureDescriptor, b: FeatureDescriptor) -> FeatureDescriptor:
    """Elementwise a + b. Kind and length must match."""
    _check_compatible(a, b)
    return FeatureDescriptor(a.kind, tuple(x + y for x, y in zip(a.values, b.values)))


def descriptor_sub(a: FeatureDescriptor, b: FeatureDescriptor) -> FeatureDescriptor:
    """Elementwise a - b. Kind and length must match."""
    _check_compatible(a, b)
    return FeatureDescriptor(a.kind, tuple(x - y for x, y in zip(a.values, b.values)))


def _check_compatible(a: FeatureDescriptor, b: FeatureDescriptor) -> None:
    if a.kind != b.kind:
        raise ValueError(f"descriptor kind mismatch: {a.kind!r} vs {b.kind!r}")
    if len(a.values) != len(b.values):
        raise ValueError(
            f"descriptor length mismatch: {len(a.values)} vs {len(b.values)}"
        )


@dataclass(frozen=True)
class Measure:
    """What to compute per cell: count | sum | mean | median (over `dim`)."""

    kind: str = "count"
    dim: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("count", "sum", "mean", "median"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind != "count" and self.dim is None:
            raise ValueError(f"measure {self.kind!r} needs a measure column")

    def validate_against(self, cfg: DescriptorConfig) -> None:
        """Raise if this measure cannot be answered from `cfg` descriptors."""
        if self.kind == "count":
            return
        if self.kind in ("sum", "mean"):
            if cfg.kind != "aggregate" or cfg.bins != 2:
                raise UnsupportedMeasureError(
                    f"{self.kind} needs aggregate descriptors with a sum slot"
                )
            if cfg.measure != self.dim:
                raise UnsupportedMeasureError(
                    f"index accumulates {cfg.measure!r}, not {self.dim!r}"
                )
            return
        # median
        if cfg.kind != "histogram":
            raise UnsupportedMeasureError("median needs histogram descriptors")
        if cfg.measure != self.dim:
            raise UnsupportedMeasureError(
                f"index accumulates {cfg.measure!r}, not {self.dim!r}"
            )


class UnsupportedMeasureError(ValueError):
    """Measure/descriptor or measure/bounds combination the index can't answer."""


def bin_indices(values, edges) -> np.ndarray:
    """Bin index per value: half-open [lo, hi) cells, top edge closed.

    The shared binning rule. Values outside [edges[0], edges[-1]] come back
    as -1 or len(edges)-1; callers mask or clip as appropriate.
    """
    values = np.asarray(values, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    idx = np.searchsorted(edges, values, side="right") - 1
    # A value exactly on the top edge belongs to the last cell.
    idx = np.where(values == edges[-1], len(edges) - 2, idx)
    return idx.astype(np.int64)


def bin_indices_clipped(values, edges) -> np.ndarray:
    """bin_indices with out-of-range values clamped into the end bins."""
    return np.clip(bin_indices(values, edges), 0, len(edges) - 2)


def count_of(table: np.ndarray, cfg: DescriptorConfig) -> np.ndarray:
    """Count per cell from a (..., B) descriptor array."""
    if cfg.kind == "aggregate":
        return table[..., 0]
    return table.sum(axis=-1)


def measure_grid(
    table: np.ndarray,
    measure: Measure,
    cfg: DescriptorConfig,
    hist_edges: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Estimate a measure per cell over a (..., B) descriptor array.

    Empty cells produce EMPTY (NaN) for mean/median and 0 for count/sum.
    Median is read off the cumulative histogram by linear interpolation
    within the bin that crosses half the total mass.
    """
    measure.validate_against(cfg)
    if measure.kind == "count":
        return count_of(table, cfg).copy()
    if measure.kind == "sum":
        return table[..., 1].copy()
    if measure.kind == "mean":
        counts = table[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(counts > 0, table[..., 1] / counts, EMPTY)
        return out
    # median
    if hist_edges is None:
        raise ValueError("median estimation needs histogram edges")
    hist_edges = np.asarray(hist_edges, dtype=np.float64)
    if len(hist_edges) != cfg.bins + 1:
        raise ValueError("histogram edges length must be bins + 1")
    cum = np.cumsum(table, axis=-1)
    total = cum[..., -1]
    half = total / 2.0
    # First bin whose cumulative mass reaches half the total.
    j = np.sum(cum < half[..., None], axis=-1)
    j = np.minimum(j, cfg.bins - 1)
    prev = np.where(j > 0, np.take_along_axis(cum, np.maximum(j - 1, 0)[..., None], -1)[..., 0], 0.0)
    mass = np.take_along_axis(table, j[..., None], -1)[..., 0]
    lo = hist_edges[j]
    width = hist_edges[j + 1] - hist_edges[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(mass > 0, (half - prev) / mass, 0.0)
    out = lo + frac * width
    return np.where(total > 0, out, EMPTY)


def estimate_measure(
    desc: FeatureDescriptor | Sequence[float] | np.ndarray,
    measure: Measure,
    cfg: DescriptorConfig,
    hist_edges: Optional[np.ndarray] = None,
) -> float:
    """Single-descriptor form of measure_grid."""
    arr = desc.as_array() if isinstance(desc, FeatureDescriptor) else np.asarray(desc, np.float64)
    return float(measure_grid(arr[None, :], measure, cfg, hist_edges)[0])


def auto_scale_count(d: int) -> int:
    """Default lattice size for a d-dimensional dataset."""
    return _AUTO_SCALES.get(d, 12)
