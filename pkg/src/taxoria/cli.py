"""Command line entry points: validate, stats, enrich, merge, serve.

Thin shells over the library. Exit codes are a stable contract: 0 on
success, 1 on domain failures (invalid taxonomy, failed run, root
mismatch), 2 on usage and configuration errors. Logs go to stderr; data
goes to files or stdout.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .embeddings import EMBEDDING_MODES, build_embedder
from .errors import ConfigError, FormatError, TaxoriaError
from .filters import DEFAULT_KG_ENDPOINT, FilterConfig, KgClient
from .generation import HttpLlmClient, RecordingLlmClient, ReplayLlmClient
from .merge import merge_taxonomies
from .orchestrator import RunConfig, enrich
from .taxonomy import Taxonomy, parse_taxonomy, serialize_taxonomy


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(path: str, strict: bool = True) -> Taxonomy:
    try:
        document = Path(path).read_text("utf-8")
    except OSError as e:
        _fail(str(e), 2)
    try:
        return parse_taxonomy(document, strict=strict)
    except TaxoriaError as e:
        _fail(f"{path}: {e}", 1)


@click.group()
@click.option("--verbose", is_flag=True, help="Log at debug level.")
def cli(verbose: bool):
    """Taxonomy enrichment, merging, and inspection."""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--lenient", is_flag=True, help="Preserve unknown keys instead of rejecting them.")
def validate(file: str, lenient: bool):
    """Check FILE against the canonical taxonomy format."""
    taxonomy = _load(file, strict=not lenient)
    click.echo(
        f"ok: {taxonomy.class_count} classes, max depth {taxonomy.max_depth}", err=True
    )


@cli.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def stats(file: str):
    """Print class count and max depth of FILE as JSON."""
    taxonomy = _load(file)
    click.echo(
        json.dumps(
            {"classes": taxonomy.class_count, "max_depth": taxonomy.max_depth},
            separators=(",", ":"),
        )
    )


@cli.command(name="enrich")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", required=True, help="Model id on the inference server.")
@click.option("--strategy", type=click.Choice(["bfs", "dfs"]), default="bfs", show_default=True)
@click.option("--rho", type=float, default=0.9, show_default=True, help="Similarity threshold.")
@click.option("--max-extra-depth", type=int, default=1, show_default=True)
@click.option("--llm-url", default=None, help="Inference server base URL.")
@click.option("--embeddings", default=None, type=click.Path(dir_okay=False),
              help="Static word-vector file.")
@click.option("--embedding-mode", type=click.Choice(list(EMBEDDING_MODES)), default=None,
              help="Backend combination; defaults to static-only when --embeddings is given.")
@click.option("--enable-judge", is_flag=True)
@click.option("--enable-kg-check", is_flag=True)
@click.option("--kg-endpoint", default=DEFAULT_KG_ENDPOINT, show_default=True)
@click.option("--frontier-limit", type=int, default=None, help="Cap on prompted nodes.")
@click.option("--parallelism", type=int, default=4, show_default=True)
@click.option("--replay-dir", default=None, type=click.Path(file_okay=False),
              help="Serve recorded responses instead of calling the LLM.")
@click.option("--record-dir", default=None, type=click.Path(file_okay=False),
              help="Record live responses as replay fixtures.")
@click.option("--run-dir", default=None, type=click.Path(file_okay=False),
              help="Checkpoint directory (enables resume after failure).")
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--decisions", "decisions_path", required=True, type=click.Path(dir_okay=False))
def enrich_cmd(
    input_path, model, strategy, rho, max_extra_depth, llm_url, embeddings,
    embedding_mode, enable_judge, enable_kg_check, kg_endpoint, frontier_limit,
    parallelism, replay_dir, record_dir, run_dir, output, decisions_path,
):
    """Enrich a seed taxonomy and write the result plus its decision log."""
    if not llm_url and not replay_dir:
        _fail("one of --llm-url or --replay-dir is required", 2)
    seed = _load(input_path)

    if embedding_mode is None:
        embedding_mode = "static-only" if embeddings else "contextual-only"
    try:
        filter_cfg = FilterConfig(
            rho=rho,
            max_extra_depth=max_extra_depth,
            judge_enabled=enable_judge,
            kg_check_enabled=enable_kg_check,
            kg_endpoint=kg_endpoint,
        )
        cfg = RunConfig(
            model_id=model,
            strategy=strategy,
            filter=filter_cfg,
            parallelism=parallelism,
            frontier_limit=frontier_limit,
        )
        embedder = build_embedder(
            embedding_mode, vectors_path=embeddings, endpoint_url=llm_url, model_id=model
        )
    except (ConfigError, FormatError, FileNotFoundError) as e:
        _fail(str(e), 2)

    client = ReplayLlmClient(replay_dir, model_id=model) if replay_dir \
        else HttpLlmClient(llm_url, model)
    if record_dir:
        client = RecordingLlmClient(client, record_dir)
    judge_client = client if enable_judge else None
    kg_client = KgClient(kg_endpoint) if enable_kg_check else None

    try:
        result = enrich(
            seed, cfg, client, embedder,
            judge_client=judge_client, kg_client=kg_client, run_dir=run_dir,
        )
    except TaxoriaError as e:
        if run_dir:
            click.echo(f"run failed; last checkpoint kept under {run_dir}", err=True)
        _fail(str(e), 1)

    Path(output).write_text(serialize_taxonomy(result.taxonomy) + "\n", encoding="utf-8")
    Path(decisions_path).write_text(
        "".join(d.to_json_line() + "\n" for d in result.decisions), encoding="utf-8"
    )
    click.echo(json.dumps(result.report.to_dict(), ensure_ascii=False, indent=2))


@cli.command()
@click.argument("left", type=click.Path(exists=True, dir_okay=False))
@click.argument("right", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
def merge(left, right, output, report_path):
    """Merge RIGHT into LEFT and write the union plus a color report."""
    left_taxonomy = _load(left)
    right_taxonomy = _load(right)
    try:
        merged, entries = merge_taxonomies(left_taxonomy, right_taxonomy)
    except TaxoriaError as e:
        _fail(str(e), 1)

    counts = {"common": 0, "only-left": 0, "only-right": 0}
    for entry in entries:
        counts[entry.color.value] += 1
    Path(output).write_text(serialize_taxonomy(merged) + "\n", encoding="utf-8")
    Path(report_path).write_text(
        json.dumps(
            {"entries": [e.to_dict() for e in entries], "counts": counts},
            ensure_ascii=False, indent=2,
        ) + "\n",
        encoding="utf-8",
    )
    click.echo(json.dumps({"classes": merged.class_count, "max_depth": merged.max_depth,
                           **counts}, separators=(",", ":")))


@cli.command()
@click.option("--bind", default=None, help="host:port (default from TAXORIA_BIND_ADDR).")
@click.option("--data-dir", default=None, type=click.Path(file_okay=False))
@click.option("--llm-url", default=None)
@click.option("--replay-dir", default=None, type=click.Path(file_okay=False))
@click.option("--embeddings", default=None, type=click.Path(dir_okay=False))
@click.option("--embedding-mode", type=click.Choice(list(EMBEDDING_MODES)), default=None)
@click.option("--kg-endpoint", default=None)
@click.option("--static-dir", default=None, type=click.Path(file_okay=False),
              help="Directory of console assets to serve at /.")
def serve(bind, data_dir, llm_url, replay_dir, embeddings, embedding_mode,
          kg_endpoint, static_dir):
    """Run the HTTP service until interrupted."""
    from .service import ServiceSettings, serve as run_server

    settings = ServiceSettings.from_env()
    if bind:
        settings.bind_addr = bind
    if data_dir:
        settings.data_dir = Path(data_dir)
    if llm_url:
        settings.llm_url = llm_url
    if replay_dir:
        settings.replay_dir = replay_dir
    if embeddings:
        settings.embeddings_path = embeddings
        if embedding_mode is None and settings.embedding_mode == "contextual-only":
            settings.embedding_mode = "static-only"
    if embedding_mode:
        settings.embedding_mode = embedding_mode
    if kg_endpoint:
        settings.kg_endpoint = kg_endpoint
    if static_dir:
        settings.static_dir = Path(static_dir)
    try:
        run_server(settings)
    except ConfigError as e:
        _fail(str(e), 2)


def main():
    cli()


if __name__ == "__main__":
    main()
