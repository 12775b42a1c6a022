"""Dataset index: the frozen partition tree, its tables and the hash layer.

`DatasetIndex.build` runs the progressive construction over a chunk stream,
hashes the finished leaf boxes into the lookup buckets and records build
statistics. The object is immutable afterwards; queries go through
`engine.execute`, persistence through `store`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rtree
from .lsh import LshBuckets, LshConfig, LshFamily, index_subspaces
from .model import DescriptorConfig, Schema, bin_indices_clipped
from .rtree import BuildConfig, BuiltTree, Node, build_progressive, intersects


@dataclass
class IndexStats:
    records: int = 0
    skeleton_points: int = 0
    malformed_rows: int = 0
    build_seconds: float = 0.0
    tree_height: int = 0
    subspace_count: int = 0
    descriptor_bins: int = 1
    storage_bytes: int = 0

    def as_dict(self) -> dict:
        return {
            "records": self.records,
            "skeleton_points": self.skeleton_points,
            "malformed_rows": self.malformed_rows,
            "build_seconds": self.build_seconds,
            "tree_height": self.tree_height,
            "subspace_count": self.subspace_count,
            "descriptor_bins": self.descriptor_bins,
            "storage_bytes": self.storage_bytes,
        }


class DatasetIndex:
    """Immutable queryable index over one dataset."""

    def __init__(
        self,
        schema: Schema,
        descriptor: DescriptorConfig,
        build_cfg: BuildConfig,
        lsh_cfg: LshConfig,
        root: Node,
        leaf_nodes: list[Node],
        lsh_family: LshFamily,
        lsh_buckets: LshBuckets,
        stats: IndexStats,
    ):
        self.schema = schema
        self.descriptor = descriptor
        self.build_cfg = build_cfg
        self.lsh_cfg = lsh_cfg
        self.root = root
        self.leaf_nodes = leaf_nodes  # ascending id order; position = ordinal
        self.lsh_family = lsh_family
        self.lsh_buckets = lsh_buckets
        self.stats = stats
        self._rebin: dict[int, np.ndarray] = {}
        self._node_totals: dict[int, np.ndarray] = {}
        self.global_hist_edges: Optional[np.ndarray] = None
        if descriptor.kind == "histogram":
            ranges = [leaf.ih.local_range for leaf in leaf_nodes if leaf.ih is not None]
            if ranges:
                lo = min(r[0] for r in ranges)
                hi = max(r[1] for r in ranges)
            else:
                lo, hi = 0.0, 1.0
            self.global_hist_edges = np.linspace(lo, hi if hi > lo else lo + 1.0,
                                                 descriptor.bins + 1)

    # -- construction --------------------------------------------------------

    @classmethod
    def build(
        cls,
        chunk_source,
        schema: Schema,
        build_cfg: Optional[BuildConfig] = None,
        descriptor: Optional[DescriptorConfig] = None,
        lsh_cfg: Optional[LshConfig] = None,
        malformed_rows: int = 0,
    ) -> "DatasetIndex":
        build_cfg = build_cfg or BuildConfig()
        descriptor = descriptor or DescriptorConfig()
        lsh_cfg = lsh_cfg or LshConfig()
        t0 = time.perf_counter()
        built: BuiltTree = build_progressive(chunk_source, schema, build_cfg, descriptor)
        family = LshFamily(schema, lsh_cfg)
        los = np.array([n.mbr[0] for n in built.leaf_nodes])
        his = np.array([n.mbr[1] for n in built.leaf_nodes])
        buckets = index_subspaces(family, los, his)
        elapsed = time.perf_counter() - t0
        stats = IndexStats(
            records=built.records,
            skeleton_points=built.skeleton_points,
            malformed_rows=malformed_rows,
            build_seconds=elapsed,
            tree_height=built.root.level,
            subspace_count=len(built.leaf_nodes),
            descriptor_bins=descriptor.bins,
        )
        idx = cls(schema, descriptor, build_cfg, lsh_cfg,
                  built.root, built.leaf_nodes, family, buckets, stats)
        idx.stats.storage_bytes = idx.estimated_bytes()
        return idx

    def with_lsh(self, lsh_cfg: LshConfig) -> "DatasetIndex":
        """Same tree and tables, hash layer rebuilt with new parameters."""
        family = LshFamily(self.schema, lsh_cfg)
        los = np.array([n.mbr[0] for n in self.leaf_nodes])
        his = np.array([n.mbr[1] for n in self.leaf_nodes])
        buckets = index_subspaces(family, los, his)
        stats = IndexStats(**self.stats.as_dict())
        return DatasetIndex(self.schema, self.descriptor, self.build_cfg, lsh_cfg,
                            self.root, self.leaf_nodes, family, buckets, stats)

    def estimated_bytes(self) -> int:
        tables = sum(leaf.ih.nbytes for leaf in self.leaf_nodes if leaf.ih is not None)
        nodes = self._node_count(self.root) * (16 + 16 * self.schema.d)
        keys = self.lsh_buckets.keys.nbytes
        return int(tables + nodes + keys)

    def _node_count(self, node: Node) -> int:
        return 1 + sum(self._node_count(c) for c in node.children)

    # -- candidate retrieval ---------------------------------------------------

    def candidates_tree(self, lo, hi) -> list[Node]:
        """Exact search: every leaf whose box intersects [lo, hi]."""
        return rtree.leaves_for_range(self.root, np.asarray(lo, np.float64),
                                      np.asarray(hi, np.float64))

    def candidates_lsh_raw(self, lo, hi) -> np.ndarray:
        """Unvalidated hash collisions, as leaf ordinals."""
        return self.lsh_buckets.candidates(np.asarray(lo, np.float64),
                                           np.asarray(hi, np.float64))

    def candidates_lsh(self, lo, hi) -> list[Node]:
        """Hash candidates filtered by the exact box-intersection test."""
        lo = np.asarray(lo, np.float64)
        hi = np.asarray(hi, np.float64)
        out = [self.leaf_nodes[i] for i in self.candidates_lsh_raw(lo, hi)]
        return [n for n in out if intersects(n.mbr, lo, hi)]

    def node_total(self, node: Node) -> np.ndarray:
        """Total descriptor of a node, in the shared measure-bin space.

        Aggregate descriptors have no bin space so the stored total is
        returned as-is. Histogram totals are rebinned per leaf and summed
        bottom-up; results are cached by node id.
        """
        if self.descriptor.kind != "histogram":
            if node.total is not None:
                return node.total
            return np.zeros(self.descriptor.bins)
        got = self._node_totals.get(node.id)
        if got is not None:
            return got
        if node.is_leaf:
            if node.ih is None:
                out = np.zeros(self.descriptor.bins)
            else:
                out = node.ih.total() @ self.rebin_matrix(node)
        else:
            out = np.zeros(self.descriptor.bins)
            for c in node.children:
                out = out + self.node_total(c)
        out.flags.writeable = False
        self._node_totals[node.id] = out
        return out

    # -- shared measure-bin space ----------------------------------------------

    def rebin_matrix(self, leaf: Node) -> np.ndarray:
        """(B, B) map from this leaf's measure bins onto the global bins.

        Rows split each local bin over the global bins it overlaps, so the
        transform conserves mass. A degenerate local range maps everything
        into the global bin containing its single value.
        """
        m = self._rebin.get(leaf.id)
        if m is not None:
            return m
        b = self.descriptor.bins
        g = self.global_hist_edges
        lr = leaf.ih.local_range
        if lr[1] > lr[0]:
            le = leaf.ih.hist_edges
            width = le[1:] - le[:-1]
            ov = (np.minimum(le[1:, None], g[None, 1:])
                  - np.maximum(le[:-1, None], g[None, :-1]))
            m = np.clip(ov, 0.0, None) / width[:, None]
            # Mass exactly on the global top edge belongs to the last bin.
            m[:, -1] += 1.0 - m.sum(axis=1)
        else:
            m = np.zeros((b, b))
            j = int(bin_indices_clipped(np.array([lr[0]]), g)[0])
            m[:, j] = 1.0
        m.flags.writeable = False
        self._rebin[leaf.id] = m
        return m
