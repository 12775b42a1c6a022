"""Approximate aggregate queries over prefix-sum tables in an adaptive partition tree."""

from .engine import ComputationalGrid, GroupBy, QueryResult, QuerySpec, align_to_scales, execute, make_grid
from .histogram import IntegralHistogram, build_histogram
from .index import DatasetIndex, IndexStats
from .lsh import LshConfig, LshFamily
from .model import (
    EMPTY,
    DataPoint,
    DescriptorConfig,
    DimensionSpec,
    FeatureDescriptor,
    Measure,
    Range,
    Schema,
    UnsupportedMeasureError,
    descriptor_add,
    descriptor_sub,
)
from .rtree import BuildConfig

__version__ = "0.1.0"

__all__ = [
    "BuildConfig",
    "ComputationalGrid",
    "DataPoint",
    "DatasetIndex",
    "DescriptorConfig",
    "DimensionSpec",
    "EMPTY",
    "FeatureDescriptor",
    "GroupBy",
    "IndexStats",
    "IntegralHistogram",
    "LshConfig",
    "LshFamily",
    "Measure",
    "QueryResult",
    "QuerySpec",
    "Range",
    "Schema",
    "UnsupportedMeasureError",
    "align_to_scales",
    "build_histogram",
    "descriptor_add",
    "descriptor_sub",
    "execute",
    "make_grid",
    "__version__",
]
