"""HTTP service over a loaded index.

Three endpoints: GET /schema, GET /stats, POST /query. Responses are pure
functions of (index, request): value grids are serialized as flat row-major
lists plus a shape, undefined cells as JSON null, and bodies are canonical
JSON (sorted keys, no whitespace) so identical requests produce
byte-identical bytes. Wall-clock timing is reported in the X-Elapsed-Us
response header, never in the body, to keep bodies deterministic.

Validation failures (unknown names, malformed ranges, bad modes) map to
400; combinations the index genuinely cannot answer (median bounds, wrong
accumulated measure, reduced-height bounds) map to 422. Before an index is
loaded every endpoint answers 503.
"""

from __future__ import annotations

import json
import time
from contextlib import asynccontextmanager
from typing import Optional, Union

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from .engine import GroupBy, QuerySpec, execute, make_grid
from .index import DatasetIndex
from .model import Measure, Range, UnsupportedMeasureError


class CategorySelection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    categories: list[str]


class GroupByModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dim: str
    strategy: Optional[str] = None
    bins: Optional[int] = None
    edges: Optional[list[float]] = None


class MeasureModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: str = "count"
    dim: Optional[str] = None


class QueryModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    filter: dict[str, Union[tuple[float, float], CategorySelection]] = {}
    group_by: list[GroupByModel] = []
    measure: MeasureModel = MeasureModel()
    accuracy_mode: str = "tree"
    want_error_bounds: bool = False
    align_scales: bool = True


def _canonical(document) -> bytes:
    return json.dumps(document, sort_keys=True, separators=(",", ":"),
                      allow_nan=False).encode("utf-8")


def _grid_list(arr: Optional[np.ndarray]):
    """Flat row-major list with NaN as null; None passes through."""
    if arr is None:
        return None
    flat = np.asarray(arr, dtype=np.float64).reshape(-1)
    return [None if np.isnan(v) else float(v) for v in flat]


def _build_spec(index: DatasetIndex, body: QueryModel) -> QuerySpec:
    schema = index.schema
    intervals: dict[int, tuple[float, float]] = {}
    category_filter: dict[int, tuple[int, ...]] = {}
    for name, value in body.filter.items():
        di = schema.dim_index(name)
        dim = schema.dims[di]
        if isinstance(value, CategorySelection):
            if dim.kind != "categorical":
                raise ValueError(f"dimension {name!r} is numeric; "
                                 "use an interval filter")
            category_filter[di] = tuple(dim.label_index(lab) for lab in value.categories)
        else:
            lo, hi = float(value[0]), float(value[1])
            if not lo <= hi:
                raise ValueError(f"filter on {name!r}: lower bound exceeds upper")
            intervals[di] = (lo, hi)

    groups = []
    for g in body.group_by:
        di = schema.dim_index(g.dim)
        dim = schema.dims[di]
        if g.edges is not None:
            groups.append(GroupBy(di, "explicit", edges=tuple(g.edges)))
            continue
        strategy = g.strategy or "equi_width"
        bins = g.bins if g.bins is not None else (
            dim.scale_count if dim.kind == "categorical" else 10)
        groups.append(GroupBy(di, strategy, bins=bins))

    measure = Measure(body.measure.kind, body.measure.dim)
    grid = make_grid(index, Range(intervals), groups)
    return QuerySpec(
        grid=grid,
        measure=measure,
        mode=body.accuracy_mode,
        error_bounds=body.want_error_bounds,
        align_scales=body.align_scales,
        category_filter=category_filter,
    )


def result_document(index: DatasetIndex, result) -> dict:
    """Response body for one executed query; shared by HTTP and CLI."""
    schema = index.schema
    return {
        "shape": list(result.values.shape),
        "values": _grid_list(result.values),
        "group_dims": [schema.dims[g].name for g in result.group_dims],
        "edges": [[float(v) for v in e] for e in result.edges],
        "v_min": _grid_list(result.v_min),
        "v_max": _grid_list(result.v_max),
        "error": _grid_list(result.error),
        "meta": {
            "mode": result.meta.mode,
            "candidates": result.meta.candidates,
            "coincident_fraction": result.meta.coincident_fraction,
            "aligned": result.meta.aligned,
        },
    }


def create_app(index: Optional[DatasetIndex] = None,
               index_path: Optional[str] = None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if app.state.index is None and index_path is not None:
            from .store import load_index
            app.state.index = load_index(index_path)
        yield

    app = FastAPI(title="prefixcube", lifespan=lifespan)
    app.state.index = index

    def current_index() -> DatasetIndex:
        idx = app.state.index
        if idx is None:
            raise HTTPException(status_code=503, detail="index not loaded yet")
        return idx

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        detail = [
            {"field": ".".join(str(p) for p in err.get("loc", [])),
             "message": err.get("msg", "invalid")}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.get("/schema")
    def get_schema():
        idx = current_index()
        body = {
            "dimensions": [
                {
                    "name": d.name,
                    "kind": d.kind,
                    "domain": [d.domain_min, d.domain_max],
                    "scale_count": d.scale_count,
                    "categories": list(d.category_labels) if d.category_labels else None,
                }
                for d in idx.schema.dims
            ],
            "measures": list(idx.schema.measure_names),
            "descriptor": {
                "kind": idx.descriptor.kind,
                "bins": idx.descriptor.bins,
                "measure": idx.descriptor.measure,
            },
        }
        return Response(content=_canonical(body), media_type="application/json")

    @app.get("/stats")
    def get_stats():
        idx = current_index()
        return Response(content=_canonical(idx.stats.as_dict()),
                        media_type="application/json")

    @app.post("/query")
    def post_query(body: QueryModel):
        idx = current_index()
        t0 = time.perf_counter_ns()
        try:
            spec = _build_spec(idx, body)
            result = execute(idx, spec)
        except UnsupportedMeasureError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except (KeyError, ValueError) as exc:
            detail = exc.args[0] if exc.args else str(exc)
            raise HTTPException(status_code=400, detail=str(detail))
        payload = _canonical(result_document(idx, result))
        elapsed_us = (time.perf_counter_ns() - t0) // 1000
        return Response(content=payload, media_type="application/json",
                        headers={"X-Elapsed-Us": str(elapsed_us)})

    return app
