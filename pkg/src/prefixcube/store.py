"""Index persistence: a versioned little-endian binary container.

Layout:

    magic "PXCUBE01" | u32 section count | sections...
    section: 16-byte zero-padded name | u64 payload length | u32 crc32 | payload

The "meta" section is canonical JSON (sorted keys) holding the schema,
configs, stats and a manifest describing every array packed into the other
sections (name, dtype, shape, in order). All numeric payloads use explicit
little-endian dtypes, so files are bit-exact across platforms. Loading
verifies magic, version and every checksum and fails closed: a corrupted
file never yields a partial index.

Hash buckets are not stored; they are rebuilt from the persisted sample
keys at load, which is cheaper than serializing dict-of-list maps and
guarantees the same buckets bit for bit.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from typing import Optional

import numpy as np

from .histogram import IntegralHistogram
from .index import DatasetIndex, IndexStats
from .lsh import LshBuckets, LshConfig, LshFamily
from .model import DescriptorConfig, DimensionSpec, Schema
from .rtree import BuildConfig, Node

MAGIC = b"PXCUBE01"
FORMAT_VERSION = 1


class IndexFormatError(Exception):
    """Unreadable, corrupted, or version-incompatible index file."""


# -- low-level section packing -------------------------------------------------


def _pack_arrays(arrays: list[tuple[str, np.ndarray]]):
    manifest = []
    parts = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        le = arr.dtype.newbyteorder("<")
        arr = arr.astype(le, copy=False)
        manifest.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        parts.append(arr.tobytes())
    return b"".join(parts), manifest


def _unpack_arrays(payload: bytes, manifest: list[dict]) -> dict[str, np.ndarray]:
    out = {}
    offset = 0
    for item in manifest:
        dtype = np.dtype(item["dtype"])
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(payload):
            raise IndexFormatError("array data truncated")
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
        out[item["name"]] = arr.reshape(shape)
        offset += nbytes
    return out


def _write_section(f, name: str, payload: bytes) -> None:
    raw = name.encode("utf-8")
    if len(raw) > 16:
        raise ValueError("section name too long")
    f.write(raw.ljust(16, b"\0"))
    f.write(struct.pack("<Q", len(payload)))
    f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    f.write(payload)


def _read_sections(f) -> dict[str, bytes]:
    head = f.read(len(MAGIC))
    if head != MAGIC:
        raise IndexFormatError("not an index file (bad magic)")
    raw = f.read(4)
    if len(raw) < 4:
        raise IndexFormatError("truncated header")
    (count,) = struct.unpack("<I", raw)
    sections = {}
    for _ in range(count):
        header = f.read(16 + 8 + 4)
        if len(header) < 28:
            raise IndexFormatError("truncated section header")
        name = header[:16].rstrip(b"\0").decode("utf-8")
        (length,) = struct.unpack("<Q", header[16:24])
        (crc,) = struct.unpack("<I", header[24:28])
        payload = f.read(length)
        if len(payload) < length:
            raise IndexFormatError(f"section {name!r} truncated")
        if (zlib.crc32(payload) & 0xFFFFFFFF) != crc:
            raise IndexFormatError(f"checksum mismatch in section {name!r}")
        sections[name] = payload
    return sections


# -- schema / config (de)serialization ------------------------------------------


def _schema_doc(schema: Schema) -> dict:
    return {
        "dims": [
            {
                "name": d.name,
                "kind": d.kind,
                "domain_min": d.domain_min,
                "domain_max": d.domain_max,
                "scale_count": d.scale_count,
                "category_labels": list(d.category_labels) if d.category_labels else None,
            }
            for d in schema.dims
        ],
        "measures": list(schema.measure_names),
    }


def _schema_from(doc: dict) -> Schema:
    dims = []
    for d in doc["dims"]:
        if d["kind"] == "categorical":
            dims.append(DimensionSpec(name=d["name"], kind="categorical",
                                      category_labels=tuple(d["category_labels"])))
        else:
            dims.append(DimensionSpec(name=d["name"], domain_min=d["domain_min"],
                                      domain_max=d["domain_max"],
                                      scale_count=d["scale_count"]))
    return Schema(tuple(dims), tuple(doc["measures"]))


def _collect_nodes(root: Node) -> list[Node]:
    out, stack = [], [root]
    while stack:
        n = stack.pop()
        out.append(n)
        stack.extend(n.children)
    out.sort(key=lambda n: n.id)
    return out


# -- public API ------------------------------------------------------------------


def save_index(index: DatasetIndex, path: str) -> int:
    """Write the index to `path`; returns bytes written (also set in stats)."""
    nodes = _collect_nodes(index.root)
    d = index.schema.d
    b = index.descriptor.bins

    ids = np.array([n.id for n in nodes], dtype=np.int64)
    levels = np.array([n.level for n in nodes], dtype=np.int64)
    parents = np.array([n.parent.id if n.parent else -1 for n in nodes], dtype=np.int64)
    mbrs = np.stack([n.mbr for n in nodes]) if nodes else np.zeros((0, 2, d))
    totals = np.stack([n.total for n in nodes]) if nodes else np.zeros((0, b))
    node_arrays, node_manifest = _pack_arrays([
        ("ids", ids), ("levels", levels), ("parents", parents),
        ("mbrs", mbrs), ("totals", totals),
    ])

    leaves = index.leaf_nodes
    edge_counts = np.array([[len(leaf.ih.edges[ax]) for ax in range(d)]
                            for leaf in leaves], dtype=np.int64).reshape(len(leaves), d)
    edge_values = (np.concatenate([e for leaf in leaves for e in leaf.ih.edges])
                   if leaves else np.zeros(0))
    local_ranges = np.full((len(leaves), 2), np.nan)
    for i, leaf in enumerate(leaves):
        if leaf.ih.local_range is not None:
            local_ranges[i] = leaf.ih.local_range
    tables = (np.concatenate([leaf.ih.table.reshape(-1) for leaf in leaves])
              if leaves else np.zeros(0))
    leaf_ids = np.array([leaf.id for leaf in leaves], dtype=np.int64)
    leaf_arrays, leaf_manifest = _pack_arrays([
        ("leaf_ids", leaf_ids), ("edge_counts", edge_counts),
        ("edge_values", edge_values), ("local_ranges", local_ranges),
        ("tables", tables),
    ])

    lsh_arrays, lsh_manifest = _pack_arrays([
        ("a", index.lsh_family.a), ("b", index.lsh_family.b),
        ("keys", index.lsh_buckets.keys.astype(np.int64)),
    ])

    meta = {
        "format": FORMAT_VERSION,
        "schema": _schema_doc(index.schema),
        "descriptor": {"kind": index.descriptor.kind, "bins": index.descriptor.bins,
                       "measure": index.descriptor.measure},
        "build": {
            "m_max": index.build_cfg.m_max,
            "m_min": index.build_cfg.m_min,
            "reinsert_fraction": index.build_cfg.reinsert_fraction,
            "sample_rate": index.build_cfg.sample_rate,
            "max_skeleton_points": index.build_cfg.max_skeleton_points,
            "max_cells_per_leaf": index.build_cfg.max_cells_per_leaf,
            "chunk_rows": index.build_cfg.chunk_rows,
            "rng_seed": index.build_cfg.rng_seed,
        },
        "lsh": {
            "projections": index.lsh_cfg.projections,
            "tables": index.lsh_cfg.tables,
            "width_factor": index.lsh_cfg.width_factor,
            "rng_seed": index.lsh_cfg.rng_seed,
            "r": index.lsh_family.r,
        },
        "stats": index.stats.as_dict(),
        "arrays": {"nodes": node_manifest, "leaves": leaf_manifest, "lsh": lsh_manifest},
    }
    meta_payload = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", 4))
        _write_section(f, "meta", meta_payload)
        _write_section(f, "nodes", node_arrays)
        _write_section(f, "leaves", leaf_arrays)
        _write_section(f, "lsh", lsh_arrays)
    size = os.path.getsize(path)
    index.stats.storage_bytes = size
    return size


def load_index(path: str) -> DatasetIndex:
    with open(path, "rb") as f:
        sections = _read_sections(f)
    if "meta" not in sections:
        raise IndexFormatError("missing meta section")
    try:
        meta = json.loads(sections["meta"].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IndexFormatError(f"unreadable meta section: {exc}") from exc
    if meta.get("format") != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported format version {meta.get('format')!r}")
    for name in ("nodes", "leaves", "lsh"):
        if name not in sections:
            raise IndexFormatError(f"missing section {name!r}")

    schema = _schema_from(meta["schema"])
    descriptor = DescriptorConfig(**meta["descriptor"])
    build_cfg = BuildConfig(**meta["build"])
    lsh_doc = dict(meta["lsh"])
    stored_r = lsh_doc.pop("r")
    lsh_cfg = LshConfig(**lsh_doc)
    d = schema.d

    nd = _unpack_arrays(sections["nodes"], meta["arrays"]["nodes"])
    ld = _unpack_arrays(sections["leaves"], meta["arrays"]["leaves"])
    hd = _unpack_arrays(sections["lsh"], meta["arrays"]["lsh"])

    by_id: dict[int, Node] = {}
    for i, nid in enumerate(nd["ids"]):
        node = Node(int(nid), int(nd["levels"][i]), d)
        node.mbr = np.array(nd["mbrs"][i], dtype=np.float64)
        node.total = np.array(nd["totals"][i], dtype=np.float64)
        by_id[int(nid)] = node
    root: Optional[Node] = None
    for i, nid in enumerate(nd["ids"]):  # ascending id: children stay id-ordered
        node = by_id[int(nid)]
        pid = int(nd["parents"][i])
        if pid < 0:
            if root is not None:
                raise IndexFormatError("multiple root nodes")
            root = node
        else:
            if pid not in by_id:
                raise IndexFormatError("dangling parent reference")
            node.parent = by_id[pid]
            by_id[pid].children.append(node)
    if root is None:
        raise IndexFormatError("no root node")

    leaf_nodes = []
    edge_counts = ld["edge_counts"].reshape(-1, d) if d else ld["edge_counts"]
    pos = 0
    tab_pos = 0
    edge_values = ld["edge_values"]
    tables = ld["tables"]
    for i, lid in enumerate(ld["leaf_ids"]):
        leaf = by_id.get(int(lid))
        if leaf is None or not leaf.is_leaf:
            raise IndexFormatError("leaf record does not match tree topology")
        edges = []
        for ax in range(d):
            cnt = int(edge_counts[i, ax])
            edges.append(np.array(edge_values[pos:pos + cnt], dtype=np.float64))
            pos += cnt
        lr = ld["local_ranges"][i]
        local_range = None if np.isnan(lr).any() else (float(lr[0]), float(lr[1]))
        shape = tuple(len(e) for e in edges) + (descriptor.bins,)
        count = int(np.prod(shape))
        table = np.array(tables[tab_pos:tab_pos + count], dtype=np.float64).reshape(shape)
        tab_pos += count
        leaf.ih = IntegralHistogram.from_table(edges, descriptor, table, local_range)
        leaf_nodes.append(leaf)

    family = LshFamily.from_arrays(schema, lsh_cfg,
                                   np.array(hd["a"], dtype=np.float64),
                                   np.array(hd["b"], dtype=np.float64),
                                   float(stored_r))
    buckets = LshBuckets(family, np.array(hd["keys"], dtype=np.int64))

    stats = IndexStats(**meta["stats"])
    idx = DatasetIndex(schema, descriptor, build_cfg, lsh_cfg,
                       root, leaf_nodes, family, buckets, stats)
    idx.stats.storage_bytes = os.path.getsize(path)
    return idx
