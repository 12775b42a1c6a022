"""Command line entry points.

Everything the harness and the web client need is reachable from here:
synthetic dataset generation, index construction from CSV, one-off queries,
the HTTP server, canned experiments, and stored-index stats.
"""

from __future__ import annotations

import json
import sys

import click

from . import bench as bench_mod
from . import store, synth


@click.group()
def main():
    """Approximate aggregate queries over multidimensional data."""


@main.command("gen-splom")
@click.option("--rows", type=int, default=100_000, show_default=True)
@click.option("--dims", type=int, default=5, show_default=True)
@click.option("--clusters", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen_splom(rows, dims, clusters, seed, out):
    """Write a clustered scatter-matrix benchmark dataset as CSV."""
    spec = synth.SplomSpec(rows=rows, dims=dims, clusters=clusters, seed=seed)
    n = synth.write_csv(synth.splom_schema(spec), synth.splom_source(spec), out)
    click.echo(f"wrote {n} rows to {out}")


@main.command("gen-skewed")
@click.option("--rows", type=int, default=1_000_000, show_default=True)
@click.option("--seed", type=int, default=11, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen_skewed(rows, seed, out):
    """Write the heavily nonuniform 2-d benchmark dataset as CSV."""
    schema = synth.skewed_schema()
    n = synth.write_csv(schema, synth.skewed_source(rows, seed=seed), out)
    click.echo(f"wrote {n} rows to {out}")


@main.command("build")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Dataset config (JSON).")
@click.option("--data", "csv_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Input CSV.")
@click.option("--out", "index_path", type=click.Path(dir_okay=False), required=True,
              help="Index file to write.")
def build(config_path, csv_path, index_path):
    """Ingest a CSV and write a finalized index file."""
    from .index import DatasetIndex
    from .ingest import load_config, prepare

    cfg, source, report = prepare(csv_path, load_config(config_path))
    index = DatasetIndex.build(source, cfg.schema, cfg.build, cfg.descriptor,
                               cfg.lsh)
    index.stats.malformed_rows = report.malformed_rows
    size = store.save_index(index, index_path)
    click.echo(json.dumps(index.stats.as_dict(), indent=2))
    click.echo(f"wrote {size} bytes to {index_path}")


@main.command("query")
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--query", "query_path", type=click.Path(exists=True, dir_okay=False),
              help="Query JSON file; omit to read stdin.")
def query(index_path, query_path):
    """Run one query against a stored index, print the response JSON."""
    from .engine import execute
    from .server import QueryModel, _build_spec, result_document

    if query_path:
        with open(query_path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    else:
        doc = json.load(sys.stdin)
    index = store.load_index(index_path)
    body = QueryModel.model_validate(doc)
    result = execute(index, _build_spec(index, body))
    click.echo(json.dumps(result_document(index, result), sort_keys=True))


@main.command("serve")
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
def serve(index_path, host, port):
    """Serve a stored index over HTTP."""
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(index_path=index_path), host=host, port=port)


@main.command("bench")
@click.argument("experiment",
                type=click.Choice(sorted(bench_mod._EXPERIMENTS)))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Experiment overrides (JSON).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              help="Directory for JSON, text, and CSV reports.")
def bench(experiment, config_path, out_dir):
    """Run a canned experiment and print its report."""
    config = None
    if config_path:
        with open(config_path, "r", encoding="utf-8") as f:
            config = json.load(f)
    report = bench_mod.run_experiment(experiment, config, out_dir)
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@main.command("stats")
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
def stats(index_path):
    """Print build statistics of a stored index."""
    index = store.load_index(index_path)
    click.echo(json.dumps(index.stats.as_dict(), indent=2))


if __name__ == "__main__":
    main()
