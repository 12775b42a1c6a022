"""HTTP surface: status codes, canonical bodies, timing header, validation."""

import asyncio
import json
import os

import httpx
import numpy as np
import pytest

from prefixcube.engine import GroupBy, QuerySpec, execute, make_grid
from prefixcube.index import DatasetIndex
from prefixcube.model import (DescriptorConfig, DimensionSpec, Measure, Range,
                              Schema)
from prefixcube.rtree import BuildConfig
from prefixcube.server import create_app
from prefixcube.store import save_index


def _request(app, method, path, body=None, lifespan=False):
    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://test") as client:
            if method == "GET":
                return await client.get(path)
            return await client.post(path, json=body)

    async def with_lifespan():
        async with app.router.lifespan_context(app):
            return await go()

    return asyncio.run(with_lifespan() if lifespan else go())


def _uniform_index(descriptor, half=False):
    pts, vals = [], []
    for i in range(8):
        for j in range(8):
            if half and i >= 4:
                continue
            pts.append(np.tile([(i + 0.5) / 8, (j + 0.5) / 8], (5, 1)))
            vals.append(np.full(5, 10 * i + j, dtype=np.float64))
    coords = np.vstack(pts)
    measures = np.concatenate(vals)[:, None]
    dims = (DimensionSpec("x", scale_count=8), DimensionSpec("y", scale_count=8))
    schema = Schema(dims, measure_names=("value",))
    return DatasetIndex.build(lambda: iter([(coords, measures)]), schema,
                              BuildConfig(m_max=8, rng_seed=1), descriptor, None)


@pytest.fixture(scope="module")
def index():
    return _uniform_index(DescriptorConfig("aggregate", 2, measure="value"))


@pytest.fixture(scope="module")
def app(index):
    return create_app(index=index)


@pytest.fixture(scope="module")
def cat_app():
    rng = np.random.default_rng(2)
    n = 700
    coords = np.column_stack([rng.random(n), (np.arange(n) % 7) + 0.5])
    dims = (DimensionSpec("x", scale_count=16),
            DimensionSpec("grade", kind="categorical",
                          category_labels=tuple("abcdefg")))
    schema = Schema(dims)
    idx = DatasetIndex.build(lambda: iter([(coords, np.empty((n, 0)))]), schema,
                             BuildConfig(m_max=8, rng_seed=1),
                             DescriptorConfig("aggregate", 1), None)
    return create_app(index=idx), idx


def test_everything_503_before_load():
    app = create_app()
    assert _request(app, "GET", "/schema").status_code == 503
    assert _request(app, "GET", "/stats").status_code == 503
    assert _request(app, "POST", "/query", {}).status_code == 503


def test_lazy_load_from_path(index, tmp_path):
    path = str(tmp_path / "idx.pxc")
    save_index(index, path)
    app = create_app(index_path=path)
    resp = _request(app, "GET", "/stats", lifespan=True)
    assert resp.status_code == 200
    assert resp.json()["records"] == index.stats.records
    assert resp.json()["storage_bytes"] == os.path.getsize(path)


def test_schema_document(app, index):
    resp = _request(app, "GET", "/schema")
    assert resp.status_code == 200
    doc = resp.json()
    assert [d["name"] for d in doc["dimensions"]] == ["x", "y"]
    for d in doc["dimensions"]:
        assert d["kind"] == "numeric"
        assert d["domain"] == [0.0, 1.0]
        assert d["scale_count"] == 8
        assert d["categories"] is None
    assert doc["measures"] == ["value"]
    assert doc["descriptor"] == {"kind": "aggregate", "bins": 2, "measure": "value"}


def test_query_values_flat_row_major(app, index):
    body = {
        "group_by": [{"dim": "x", "strategy": "equi_width", "bins": 4},
                     {"dim": "y", "strategy": "equi_width", "bins": 2}],
        "measure": {"kind": "count"},
    }
    resp = _request(app, "POST", "/query", body)
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["shape"] == [4, 2]
    assert len(doc["values"]) == 8

    grid = make_grid(index, Range({}),
                     [GroupBy(0, "equi_width", 4), GroupBy(1, "equi_width", 2)])
    res = execute(index, QuerySpec(grid=grid, measure=Measure("count")))
    assert doc["values"] == list(res.values.reshape(-1))
    assert doc["group_dims"] == ["x", "y"]
    assert doc["edges"] == [list(e) for e in res.edges]
    assert doc["meta"]["aligned"] is True


def test_identical_requests_are_byte_identical(app):
    body = {
        "filter": {"x": [0.1, 0.8]},
        "group_by": [{"dim": "y", "bins": 5}],
        "measure": {"kind": "mean", "dim": "value"},
        "want_error_bounds": True,
    }
    first = _request(app, "POST", "/query", body)
    second = _request(app, "POST", "/query", body)
    assert first.status_code == 200
    assert first.content == second.content
    assert "X-Elapsed-Us" in first.headers
    assert int(first.headers["X-Elapsed-Us"]) >= 0
    assert "elapsed" not in json.loads(first.content)["meta"]


def test_empty_cells_serialize_as_null():
    idx = _uniform_index(DescriptorConfig("aggregate", 2, measure="value"), half=True)
    app = create_app(index=idx)
    body = {"group_by": [{"dim": "x", "bins": 8}],
            "measure": {"kind": "mean", "dim": "value"}}
    doc = _request(app, "POST", "/query", body).json()
    assert doc["values"][:4] == [3.5, 13.5, 23.5, 33.5]
    assert doc["values"][4:] == [None] * 4


def test_unknown_dimension_is_400(app):
    resp = _request(app, "POST", "/query", {"filter": {"zzz": [0.0, 1.0]}})
    assert resp.status_code == 400
    assert "zzz" in resp.json()["detail"]


def test_malformed_body_reports_field_paths(app):
    resp = _request(app, "POST", "/query",
                    {"group_by": [{"dim": "x", "bins": "many"}]})
    assert resp.status_code == 400
    detail = resp.json()["detail"]
    assert isinstance(detail, list)
    assert any(e["field"] == "body.group_by.0.bins" for e in detail)
    assert all({"field", "message"} <= set(e) for e in detail)


def test_unknown_top_level_key_is_400(app):
    resp = _request(app, "POST", "/query", {"measure": {"kind": "count"}, "zap": 1})
    assert resp.status_code == 400
    assert any(e["field"] == "body.zap" for e in resp.json()["detail"])


def test_backwards_filter_is_400(app):
    resp = _request(app, "POST", "/query", {"filter": {"x": [0.9, 0.1]}})
    assert resp.status_code == 400
    assert "lower bound exceeds upper" in resp.json()["detail"]


def test_bad_accuracy_mode_is_400(app):
    resp = _request(app, "POST", "/query", {"accuracy_mode": "warp"})
    assert resp.status_code == 400
    assert "accuracy mode" in resp.json()["detail"]


def test_unsupported_combinations_are_422(app):
    resp = _request(app, "POST", "/query",
                    {"measure": {"kind": "median", "dim": "value"}})
    assert resp.status_code == 422
    resp = _request(app, "POST", "/query",
                    {"accuracy_mode": "tree@1", "want_error_bounds": True})
    assert resp.status_code == 422
    assert "full-height" in resp.json()["detail"]


def test_category_filter_roundtrip(cat_app):
    app, idx = cat_app
    body = {"filter": {"grade": {"categories": ["a", "b"]}},
            "group_by": [{"dim": "x", "bins": 4}]}
    doc = _request(app, "POST", "/query", body).json()
    grid = make_grid(idx, Range({}), [GroupBy(0, "equi_width", 4)])
    res = execute(idx, QuerySpec(grid=grid, measure=Measure("count"),
                                 category_filter={1: (0, 1)}))
    assert doc["values"] == list(res.values.reshape(-1))


def test_unknown_category_label_is_400(cat_app):
    app, _ = cat_app
    resp = _request(app, "POST", "/query",
                    {"filter": {"grade": {"categories": ["zebra"]}}})
    assert resp.status_code == 400
    assert "zebra" in resp.json()["detail"]


def test_interval_filter_on_categorical_is_400(cat_app):
    app, _ = cat_app
    resp = _request(app, "POST", "/query", {"filter": {"x": {"categories": ["a"]}}})
    assert resp.status_code == 400


def test_categorical_group_defaults_to_label_count(cat_app):
    app, _ = cat_app
    doc = _request(app, "POST", "/query",
                   {"group_by": [{"dim": "grade"}]}).json()
    assert doc["shape"] == [7]
    assert sum(doc["values"]) == 700


def test_stats_document_matches_index(app, index):
    doc = _request(app, "GET", "/stats").json()
    assert doc == index.stats.as_dict()
    assert doc["records"] == 320
    assert doc["subspace_count"] >= 1
