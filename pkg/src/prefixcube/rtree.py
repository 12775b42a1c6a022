"""Distribution-adaptive partitioner.

An R*-tree over data points, with the insertion objective replaced by a
density-seeking ratio: a child is charged (area_new / area) x (area_new -
area) for absorbing a point, so branches that are already large and would
grow little win over small branches that would balloon. Ties break to the
smaller area, then the smaller node id. Geometry (areas, margins,
distances) is computed in lattice units so dimensions with wildly different
physical scales contribute evenly.

Construction is progressive: an exact tree is built over a bounded uniform
sample of the stream (the skeleton), its structure is then frozen, and the
full stream is routed through the frozen leaves, accumulating descriptors
into per-leaf integral histograms. A point no leaf contains routes to the
leaf with the smallest enlargement objective, whose box (and table) is
grown in place; splits never happen after the freeze.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .histogram import IntegralHistogram
from .model import DescriptorConfig, Schema


@dataclass(frozen=True)
class BuildConfig:
    """Partitioner knobs.

    m_max / m_min bound entries per node (points in leaves, children in
    internal nodes). The skeleton holds at most max_skeleton_points drawn
    uniformly (reservoir) from the sample_rate-thinned stream; sample_rate=1
    with a cap above the row count is an exact build. Leaf tables get one
    cell per spanned scale unit, reduced proportionally if the total would
    exceed max_cells_per_leaf.
    """

    m_max: int = 64
    m_min: Optional[int] = None
    reinsert_fraction: float = 0.3
    sample_rate: float = 1.0
    max_skeleton_points: int = 100_000
    max_cells_per_leaf: int = 65_536
    chunk_rows: int = 200_000
    rng_seed: int = 0

    def __post_init__(self):
        if self.m_max < 4:
            raise ValueError("m_max must be >= 4")
        mm = self.resolved_m_min
        if not 1 <= mm <= (self.m_max + 1) // 2:
            raise ValueError("m_min must be in [1, (m_max+1)//2]")
        if not 0.0 < self.sample_rate <= 1.0:
            raise ValueError("sample_rate must be in (0, 1]")
        if not 0.0 < self.reinsert_fraction < 1.0:
            raise ValueError("reinsert_fraction must be in (0, 1)")

    @property
    def resolved_m_min(self) -> int:
        return self.m_min if self.m_min is not None else math.ceil(0.4 * self.m_max)


class Node:
    """Tree node. Leaves hold point rows until the freeze, then an IH."""

    __slots__ = ("id", "level", "mbr", "parent", "children",
                 "pts", "meas", "ih", "total")

    def __init__(self, nid: int, level: int, d: int):
        self.id = nid
        self.level = level
        self.mbr = np.array([[np.inf] * d, [-np.inf] * d])
        self.parent: Optional["Node"] = None
        self.children: list["Node"] = []
        self.pts: list[np.ndarray] = []
        self.meas: list[np.ndarray] = []
        self.ih: Optional[IntegralHistogram] = None
        self.total: Optional[np.ndarray] = None

    @property
    def is_leaf(self) -> bool:
        return self.level == 0

    def entry_count(self) -> int:
        return len(self.pts) if self.is_leaf else len(self.children)


def _mbr_of_points(rows: list[np.ndarray]) -> np.ndarray:
    arr = np.vstack(rows)
    return np.array([arr.min(axis=0), arr.max(axis=0)])


def _mbr_of_nodes(nodes: list[Node]) -> np.ndarray:
    lo = np.min([n.mbr[0] for n in nodes], axis=0)
    hi = np.max([n.mbr[1] for n in nodes], axis=0)
    return np.array([lo, hi])


class RTree:
    """Exact-phase R*-variant tree; all geometry in lattice units (`norm`)."""

    def __init__(self, d: int, cfg: BuildConfig, norm: np.ndarray):
        self.d = d
        self.cfg = cfg
        self.norm = np.asarray(norm, dtype=np.float64)
        self._next_id = 0
        self.root = self._new_node(level=0)
        self._reinserted_levels: set[int] = set()

    def _new_node(self, level: int) -> Node:
        node = Node(self._next_id, level, self.d)
        self._next_id += 1
        return node

    # -- insertion ---------------------------------------------------------

    def insert(self, coords: np.ndarray, measures: np.ndarray) -> None:
        self._reinserted_levels = set()
        self._insert_point(coords, measures)

    def _insert_point(self, coords: np.ndarray, measures: np.ndarray) -> None:
        leaf = self._choose_path(coords, coords, target_level=0)
        leaf.pts.append(np.asarray(coords, dtype=np.float64))
        leaf.meas.append(np.asarray(measures, dtype=np.float64))
        self._grow_upward(leaf, coords, coords)
        if leaf.entry_count() > self.cfg.m_max:
            self._handle_overflow(leaf)

    def _insert_node(self, entry: Node) -> None:
        target = self._choose_path(entry.mbr[0], entry.mbr[1],
                                   target_level=entry.level + 1)
        target.children.append(entry)
        entry.parent = target
        self._grow_upward(target, entry.mbr[0], entry.mbr[1])
        if target.entry_count() > self.cfg.m_max:
            self._handle_overflow(target)

    def _choose_path(self, elo, ehi, target_level: int) -> Node:
        node = self.root
        while node.level > target_level:
            node = self._choose_subtree(node, elo, ehi)
        return node

    def _choose_subtree(self, node: Node, elo, ehi) -> Node:
        los = np.array([c.mbr[0] for c in node.children])
        his = np.array([c.mbr[1] for c in node.children])
        area = np.prod((his - los) * self.norm, axis=1)
        new_ext = (np.maximum(his, ehi) - np.minimum(los, elo)) * self.norm
        area_new = np.prod(new_ext, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            obj = np.where(area > 0, area_new / area * (area_new - area), area_new)
        ids = np.array([c.id for c in node.children])
        best = np.lexsort((ids, area, obj))[0]
        return node.children[best]

    def _grow_upward(self, node: Node, elo, ehi) -> None:
        cur: Optional[Node] = node
        while cur is not None:
            np.minimum(cur.mbr[0], elo, out=cur.mbr[0])
            np.maximum(cur.mbr[1], ehi, out=cur.mbr[1])
            cur = cur.parent

    # -- overflow treatment --------------------------------------------------

    def _handle_overflow(self, node: Node) -> None:
        while node is not None and node.entry_count() > self.cfg.m_max:
            if node.parent is not None and node.level not in self._reinserted_levels:
                self._reinserted_levels.add(node.level)
                self._reinsert(node)
                return
            node = self._split(node)

    def _reinsert(self, node: Node) -> None:
        # Remove the fraction farthest from the node center, reinsert starting
        # with the closest of the removed.
        center = (node.mbr[0] + node.mbr[1]) / 2.0
        if node.is_leaf:
            centers = np.vstack(node.pts)
        else:
            centers = np.array([(c.mbr[0] + c.mbr[1]) / 2.0 for c in node.children])
        dist = np.sum(((centers - center) * self.norm) ** 2, axis=1)
        order = np.argsort(-dist, kind="stable")
        p = max(1, int(round(self.cfg.reinsert_fraction * len(order))))
        removed, kept = order[:p], order[p:]
        if node.is_leaf:
            rem = [(node.pts[i], node.meas[i]) for i in removed]
            node.pts = [node.pts[i] for i in kept]
            node.meas = [node.meas[i] for i in kept]
            node.mbr = _mbr_of_points(node.pts)
        else:
            rem = [node.children[i] for i in removed]
            node.children = [node.children[i] for i in kept]
            node.mbr = _mbr_of_nodes(node.children)
        self._shrink_upward(node.parent)
        for entry in reversed(rem):
            if node.is_leaf:
                self._insert_point(entry[0], entry[1])
            else:
                entry.parent = None
                self._insert_node(entry)

    def _shrink_upward(self, node: Optional[Node]) -> None:
        while node is not None:
            node.mbr = _mbr_of_nodes(node.children)
            node = node.parent

    # -- split ---------------------------------------------------------------

    def _split(self, node: Node) -> Optional[Node]:
        if node.is_leaf:
            los = his = np.vstack(node.pts)
        else:
            los = np.array([c.mbr[0] for c in node.children])
            his = np.array([c.mbr[1] for c in node.children])
        axis, order = self._choose_split(los, his)
        k = self._choose_split_index(los[order], his[order])

        sibling = self._new_node(node.level)
        first, second = order[:k], order[k:]
        if node.is_leaf:
            sibling.pts = [node.pts[i] for i in second]
            sibling.meas = [node.meas[i] for i in second]
            node.pts = [node.pts[i] for i in first]
            node.meas = [node.meas[i] for i in first]
            node.mbr = _mbr_of_points(node.pts)
            sibling.mbr = _mbr_of_points(sibling.pts)
        else:
            sibling.children = [node.children[i] for i in second]
            node.children = [node.children[i] for i in first]
            for c in sibling.children:
                c.parent = sibling
            node.mbr = _mbr_of_nodes(node.children)
            sibling.mbr = _mbr_of_nodes(sibling.children)

        parent = node.parent
        if parent is None:
            parent = self._new_node(node.level + 1)
            parent.children = [node, sibling]
            node.parent = sibling.parent = parent
            parent.mbr = _mbr_of_nodes(parent.children)
            self.root = parent
            return None
        sibling.parent = parent
        parent.children.append(sibling)
        self._shrink_upward(parent)
        return parent

    def _choose_split(self, los: np.ndarray, his: np.ndarray):
        """Pick the split axis by minimal margin sum; return (axis, ordering)."""
        m_min, n = self.cfg.resolved_m_min, len(los)
        best_axis, best_margin, best_orders = 0, np.inf, None
        for ax in range(self.d):
            orders = [np.lexsort((his[:, ax], los[:, ax])),
                      np.lexsort((los[:, ax], his[:, ax]))]
            margin = 0.0
            for order in orders:
                for bb_lo, bb_hi in self._distribution_boxes(los[order], his[order], m_min, n):
                    margin += np.sum((bb_hi - bb_lo) * self.norm)
            if margin < best_margin:
                best_axis, best_margin, best_orders = ax, margin, orders
        # Between the two orderings of the best axis, pick by the same
        # overlap-then-area rule used for the split index.
        scored = []
        for oi, order in enumerate(best_orders):
            k, score = self._best_index_for_order(los[order], his[order], m_min, n)
            scored.append((score, oi, order))
        scored.sort(key=lambda t: (t[0], t[1]))
        return best_axis, scored[0][2]

    def _distribution_boxes(self, los, his, m_min, n):
        pre_lo = np.minimum.accumulate(los, axis=0)
        pre_hi = np.maximum.accumulate(his, axis=0)
        suf_lo = np.minimum.accumulate(los[::-1], axis=0)[::-1]
        suf_hi = np.maximum.accumulate(his[::-1], axis=0)[::-1]
        for k in range(m_min, n - m_min + 1):
            yield pre_lo[k - 1], pre_hi[k - 1]
            yield suf_lo[k], suf_hi[k]

    def _best_index_for_order(self, los, his, m_min, n):
        pre_lo = np.minimum.accumulate(los, axis=0)
        pre_hi = np.maximum.accumulate(his, axis=0)
        suf_lo = np.minimum.accumulate(los[::-1], axis=0)[::-1]
        suf_hi = np.maximum.accumulate(his[::-1], axis=0)[::-1]
        best_k, best_score = m_min, (np.inf, np.inf)
        for k in range(m_min, n - m_min + 1):
            lo1, hi1 = pre_lo[k - 1], pre_hi[k - 1]
            lo2, hi2 = suf_lo[k], suf_hi[k]
            inter = np.minimum(hi1, hi2) - np.maximum(lo1, lo2)
            overlap = float(np.prod(np.maximum(inter, 0.0) * self.norm))
            areas = float(np.prod((hi1 - lo1) * self.norm)
                          + np.prod((hi2 - lo2) * self.norm))
            if (overlap, areas) < best_score:
                best_k, best_score = k, (overlap, areas)
        return best_k, best_score

    def _choose_split_index(self, los, his) -> int:
        k, _ = self._best_index_for_order(los, his, self.cfg.resolved_m_min, len(los))
        return k

    # -- search --------------------------------------------------------------

    def leaves(self) -> list[Node]:
        out = []
        stack = [self.root]
        while stack:
            n = stack.pop()
            if n.is_leaf:
                out.append(n)
            else:
                stack.extend(n.children)
        out.sort(key=lambda n: n.id)
        return out


def intersects(mbr: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> bool:
    return bool(np.all(mbr[0] <= hi) and np.all(mbr[1] >= lo))


def leaves_for_range(root: Node, lo: np.ndarray, hi: np.ndarray) -> list[Node]:
    """Exact tree search: every leaf whose box touches [lo, hi] (closed)."""
    out = []
    stack = [root]
    while stack:
        n = stack.pop()
        if not intersects(n.mbr, lo, hi):
            continue
        if n.is_leaf:
            out.append(n)
        else:
            stack.extend(n.children)
    out.sort(key=lambda n: n.id)
    return out


def nodes_at_level(root: Node, level: int, lo: np.ndarray, hi: np.ndarray) -> list[Node]:
    """Nodes at a given level whose boxes touch [lo, hi]."""
    out = []
    stack = [root]
    while stack:
        n = stack.pop()
        if not intersects(n.mbr, lo, hi):
            continue
        if n.level == level:
            out.append(n)
        elif n.level > level:
            stack.extend(n.children)
    out.sort(key=lambda n: n.id)
    return out


def descendant_leaves(node: Node) -> list[Node]:
    stack, out = [node], []
    while stack:
        n = stack.pop()
        if n.is_leaf:
            out.append(n)
        else:
            stack.extend(n.children)
    out.sort(key=lambda n: n.id)
    return out


@dataclass
class BuiltTree:
    """Frozen tree plus everything the index layer needs."""

    root: Node
    leaf_nodes: list[Node]
    records: int
    skeleton_points: int
    schema: Schema
    cfg: BuildConfig
    descriptor: DescriptorConfig

    @property
    def height(self) -> int:
        return self.root.level


ChunkSource = Callable[[], Iterable[tuple[np.ndarray, np.ndarray]]]


def _norm_of(schema: Schema) -> np.ndarray:
    return np.array([d.scale_count / (d.domain_max - d.domain_min)
                     for d in schema.dims])


def _leaf_edges(schema: Schema, mbr: np.ndarray, max_cells: int) -> list[np.ndarray]:
    """Scale-aligned cell edges covering the box: one cell per spanned unit,
    proportionally thinned if the full-resolution table would exceed the
    cell budget."""
    d = schema.d
    spans = []
    for ax, dim in enumerate(schema.dims):
        k_lo = int(dim.unit_floor(mbr[0, ax]))
        k_hi = int(dim.unit_ceil(mbr[1, ax]))
        if k_hi <= k_lo:  # degenerate box: give it one unit cell
            k_hi = k_lo + 1
            if k_hi > dim.scale_count:
                k_lo, k_hi = dim.scale_count - 1, dim.scale_count
        spans.append((k_lo, k_hi))
    sizes = np.array([hi - lo for lo, hi in spans], dtype=np.float64)
    total = float(np.prod(sizes))
    if total > max_cells:
        factor = (max_cells / total) ** (1.0 / d)
        cells = np.maximum(1, np.floor(sizes * factor)).astype(int)
    else:
        cells = sizes.astype(int)
    edges = []
    for ax, dim in enumerate(schema.dims):
        k_lo, k_hi = spans[ax]
        pos = k_lo + np.rint(np.arange(cells[ax] + 1) * (k_hi - k_lo) / cells[ax]).astype(np.int64)
        edges.append(dim.lattice_value(pos))
    return edges


def _extend_leaf_edges(schema: Schema, leaf: Node, new_mbr: np.ndarray) -> None:
    """Grow a frozen leaf's table along any axis its box expanded past."""
    for ax, dim in enumerate(schema.dims):
        e = leaf.ih.edges[ax]
        k_old_lo = int(dim.unit_round(e[0]))
        k_old_hi = int(dim.unit_round(e[-1]))
        k_lo = min(int(dim.unit_floor(new_mbr[0, ax])), k_old_lo)
        k_hi = max(int(dim.unit_ceil(new_mbr[1, ax])), k_old_hi)
        if k_lo == k_old_lo and k_hi == k_old_hi:
            continue
        step = max(1, int(round((k_old_hi - k_old_lo) / (len(e) - 1))))
        before = np.arange(k_old_lo, k_lo, -step)[::-1]
        before = np.concatenate(([k_lo], before)) if (len(before) == 0 or before[0] != k_lo) else before
        after = np.arange(k_old_hi, k_hi, step)[1:] if k_hi > k_old_hi else np.array([], dtype=np.int64)
        if k_hi > k_old_hi and (len(after) == 0 or after[-1] != k_hi):
            after = np.concatenate((after, [k_hi]))
        old_pos = np.rint(dim.to_units(e)).astype(np.int64)
        pos = np.concatenate((before[:-1] if k_lo < k_old_lo else [],
                              old_pos,
                              after)).astype(np.int64)
        leaf.ih.extend(ax, dim.lattice_value(pos))


def build_progressive(
    chunk_source: ChunkSource | list,
    schema: Schema,
    cfg: BuildConfig,
    descriptor: DescriptorConfig,
) -> BuiltTree:
    """Two-pass progressive construction.

    Pass 1 draws the skeleton sample (and counts rows); the exact tree is
    built from it and frozen. Pass 2 re-streams every row, routes it to the
    first containing leaf (in id order) or, failing that, to the leaf with
    the smallest enlargement objective — expanding that leaf's box and table
    — and accumulates its descriptor. When the skeleton covered the entire
    stream the second pass is skipped and leaves accumulate their own points.
    """
    chunks: ChunkSource = chunk_source if callable(chunk_source) else (lambda: iter(chunk_source))
    d = schema.d
    norm = _norm_of(schema)
    rng = np.random.default_rng(cfg.rng_seed)
    cap = cfg.max_skeleton_points

    res_coords = np.empty((cap, d))
    res_meas: Optional[np.ndarray] = None
    seen = 0  # survivors of the rate-thinning seen so far
    records = 0
    meas_width = 0
    for coords, measures in chunks():
        coords = np.asarray(coords, dtype=np.float64)
        measures = np.asarray(measures, dtype=np.float64)
        if measures.ndim == 1:
            measures = measures[:, None]
        records += len(coords)
        if res_meas is None:
            meas_width = measures.shape[1] if measures.size else 0
            res_meas = np.empty((cap, meas_width))
        if cfg.sample_rate < 1.0:
            keep = rng.random(len(coords)) < cfg.sample_rate
            coords, measures = coords[keep], measures[keep]
        n = len(coords)
        take = min(n, max(0, cap - seen))
        if take:
            res_coords[seen:seen + take] = coords[:take]
            res_meas[seen:seen + take] = measures[:take]
        for i in range(take, n):
            t = seen + i
            j = int(rng.integers(0, t + 1))
            if j < cap:
                res_coords[j] = coords[i]
                res_meas[j] = measures[i]
        seen += n
    skeleton = min(seen, cap)
    res_coords = res_coords[:skeleton]
    res_meas = res_meas[:skeleton] if res_meas is not None else np.empty((0, 0))

    tree = RTree(d, cfg, norm)
    for i in range(skeleton):
        tree.insert(res_coords[i], res_meas[i])

    leaf_nodes = tree.leaves()
    m_idx = schema.measure_index(descriptor.measure) if descriptor.measure else None
    # Global sampled measure range backs up degenerate per-leaf ranges.
    if m_idx is not None and skeleton > 0:
        g_lo = float(res_meas[:, m_idx].min())
        g_hi = float(res_meas[:, m_idx].max())
    else:
        g_lo, g_hi = 0.0, 1.0

    exact = records == skeleton
    for leaf in leaf_nodes:
        local_range = None
        if descriptor.kind == "histogram":
            vals = np.array([m[m_idx] for m in leaf.meas]) if leaf.meas else np.array([g_lo])
            lo, hi = float(vals.min()), float(vals.max())
            if not exact:
                pad = 0.05 * (hi - lo)
                lo, hi = lo - pad, hi + pad
                if hi <= lo:
                    lo, hi = min(lo, g_lo), max(hi, g_hi)
            local_range = (lo, hi)
        leaf.ih = IntegralHistogram(
            _leaf_edges(schema, leaf.mbr, cfg.max_cells_per_leaf),
            descriptor, local_range=local_range)
        if exact and leaf.pts:
            coords = np.vstack(leaf.pts)
            mcol = np.array([m[m_idx] for m in leaf.meas]) if m_idx is not None else None
            leaf.ih.accumulate(coords, mcol)
        leaf.pts, leaf.meas = [], []

    if not exact:
        _route_and_accumulate(chunks, schema, cfg, tree, leaf_nodes, m_idx, norm)

    for leaf in leaf_nodes:
        leaf.ih.finalize()
    _fill_totals(tree.root)
    return BuiltTree(tree.root, leaf_nodes, records, skeleton, schema, cfg, descriptor)


def _route_and_accumulate(chunks, schema, cfg, tree, leaf_nodes, m_idx, norm):
    nleaf = len(leaf_nodes)
    if nleaf == 0:
        return
    LO = np.array([n.mbr[0] for n in leaf_nodes])
    HI = np.array([n.mbr[1] for n in leaf_nodes])
    d = schema.d
    block = max(1024, int(4e7) // max(nleaf, 1))
    for coords, measures in chunks():
        coords = np.asarray(coords, dtype=np.float64)
        measures = np.asarray(measures, dtype=np.float64)
        if measures.ndim == 1:
            measures = measures[:, None]
        mcol = measures[:, m_idx] if m_idx is not None else None
        for start in range(0, len(coords), block):
            c = coords[start:start + block]
            mc = mcol[start:start + block] if mcol is not None else None
            ok = np.ones((len(c), nleaf), dtype=bool)
            for ax in range(d):
                ok &= c[:, ax, None] >= LO[None, :, ax]
                ok &= c[:, ax, None] <= HI[None, :, ax]
            assign = ok.argmax(axis=1)
            hit = ok[np.arange(len(c)), assign]
            for i in np.flatnonzero(~hit):
                assign[i] = _route_miss(c[i], tree, leaf_nodes, LO, HI, schema, norm)
            order = np.argsort(assign, kind="stable")
            sorted_assign = assign[order]
            bounds = np.searchsorted(sorted_assign, np.arange(nleaf + 1))
            for li in np.unique(sorted_assign):
                sl = order[bounds[li]:bounds[li + 1]]
                leaf_nodes[li].ih.accumulate(c[sl], mc[sl] if mc is not None else None)


def _route_miss(p, tree, leaf_nodes, LO, HI, schema, norm) -> int:
    ext = (HI - LO) * norm
    area = np.prod(ext, axis=1)
    new_ext = (np.maximum(HI, p) - np.minimum(LO, p)) * norm
    area_new = np.prod(new_ext, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        obj = np.where(area > 0, area_new / area * (area_new - area), area_new)
    li = int(np.lexsort((np.arange(len(leaf_nodes)), area, obj))[0])
    leaf = leaf_nodes[li]
    grew = bool(np.any(p < leaf.mbr[0]) or np.any(p > leaf.mbr[1]))
    if grew:
        np.minimum(leaf.mbr[0], p, out=leaf.mbr[0])
        np.maximum(leaf.mbr[1], p, out=leaf.mbr[1])
        LO[li], HI[li] = leaf.mbr[0], leaf.mbr[1]
        parent = leaf.parent
        while parent is not None:
            np.minimum(parent.mbr[0], p, out=parent.mbr[0])
            np.maximum(parent.mbr[1], p, out=parent.mbr[1])
            parent = parent.parent
        _extend_leaf_edges(schema, leaf, leaf.mbr)
    return li


def _fill_totals(root: Node) -> None:
    if root.is_leaf:
        root.total = root.ih.total().copy() if root.ih is not None else None
        return
    for c in root.children:
        _fill_totals(c)
    root.total = np.sum([c.total for c in root.children], axis=0)
