"""HTTP service: taxonomy upload, run lifecycle, live status, decision tail.

Filesystem-backed (a data directory holds uploaded taxonomies and run
checkpoints, no database); clients poll for status and page through the
decision log by line offset. One enrichment runs at a time by default.
All errors share the shape {"error": {"code": ..., "message": ...}}.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from .embeddings import EMBEDDING_MODES, build_embedder
from .errors import ConfigError, FormatError, LlmUnreachable, RootMismatch, TaxoriaError
from .filters import DEFAULT_KG_ENDPOINT, FilterConfig, KgClient
from .generation import HttpLlmClient, ReplayLlmClient
from .merge import merge_taxonomies
from .orchestrator import EnrichmentEngine, RunConfig, RunState
from .taxonomy import Taxonomy, parse_taxonomy, serialize_taxonomy

logger = logging.getLogger(__name__)

DEFAULT_MAX_UPLOAD_BYTES = 20 * 1024 * 1024
DEFAULT_BIND_ADDR = "127.0.0.1:8032"

FINISHED_PHASES = ("completed", "cancelled", "failed")


@dataclass
class ServiceSettings:
    """Runtime configuration, normally taken from TAXORIA_* environment vars."""

    data_dir: Path = Path("taxoria-data")
    llm_url: str | None = None
    replay_dir: str | None = None
    embeddings_path: str | None = None
    embedding_mode: str | None = None
    kg_endpoint: str = DEFAULT_KG_ENDPOINT
    bind_addr: str = DEFAULT_BIND_ADDR
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES
    max_concurrent_runs: int = 1
    static_dir: Path | None = None

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        if self.embedding_mode is None:
            self.embedding_mode = "static-only" if self.embeddings_path else "contextual-only"
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ConfigError(f"unknown embedding mode {self.embedding_mode!r}")

    @classmethod
    def from_env(cls, environ=None) -> ServiceSettings:
        import os

        env = environ if environ is not None else os.environ
        static = env.get("TAXORIA_STATIC_DIR")
        return cls(
            data_dir=Path(env.get("TAXORIA_DATA_DIR", "taxoria-data")),
            llm_url=env.get("TAXORIA_LLM_URL", "http://127.0.0.1:11434"),
            replay_dir=env.get("TAXORIA_REPLAY_DIR"),
            embeddings_path=env.get("TAXORIA_EMBEDDINGS"),
            embedding_mode=env.get("TAXORIA_EMBEDDING_MODE"),
            kg_endpoint=env.get("TAXORIA_KG_ENDPOINT", DEFAULT_KG_ENDPOINT),
            bind_addr=env.get("TAXORIA_BIND_ADDR", DEFAULT_BIND_ADDR),
            static_dir=Path(static) if static else None,
        )


@dataclass
class StoredTaxonomy:
    taxonomy_id: str
    name: str
    document: str
    class_count: int
    max_depth: int
    uploaded_at: str

    def meta(self) -> dict:
        return {
            "taxonomy_id": self.taxonomy_id,
            "name": self.name,
            "stats": {"class_count": self.class_count, "max_depth": self.max_depth},
            "uploaded_at": self.uploaded_at,
        }


class FileStore:
    """Taxonomy documents and metadata under <data_dir>/taxonomies."""

    def __init__(self, root: Path):
        self.root = Path(root) / "taxonomies"
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def save(self, document: str, name: str, stats: tuple[int, int]) -> StoredTaxonomy:
        stored = StoredTaxonomy(
            taxonomy_id=uuid.uuid4().hex[:12],
            name=name,
            document=document,
            class_count=stats[0],
            max_depth=stats[1],
            uploaded_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        )
        with self._lock:
            (self.root / f"{stored.taxonomy_id}.json").write_text(document, encoding="utf-8")
            (self.root / f"{stored.taxonomy_id}.meta.json").write_text(
                json.dumps(stored.meta(), ensure_ascii=False, indent=2), encoding="utf-8"
            )
        return stored

    def get(self, taxonomy_id: str) -> StoredTaxonomy | None:
        doc_path = self.root / f"{taxonomy_id}.json"
        meta_path = self.root / f"{taxonomy_id}.meta.json"
        if not doc_path.is_file() or not meta_path.is_file():
            return None
        meta = json.loads(meta_path.read_text("utf-8"))
        return StoredTaxonomy(
            taxonomy_id=taxonomy_id,
            name=meta["name"],
            document=doc_path.read_text("utf-8"),
            class_count=meta["stats"]["class_count"],
            max_depth=meta["stats"]["max_depth"],
            uploaded_at=meta["uploaded_at"],
        )

    def list(self) -> list[dict]:
        metas = []
        for meta_path in sorted(self.root.glob("*.meta.json")):
            metas.append(json.loads(meta_path.read_text("utf-8")))
        metas.sort(key=lambda m: m["uploaded_at"])
        return metas


def api_error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"error": {"code": code, "message": message}})


@dataclass
class RunHandle:
    run_id: str
    taxonomy_id: str
    cfg: RunConfig
    engine: EnrichmentEngine
    state: RunState
    seed: Taxonomy
    run_dir: Path
    cancel_event: threading.Event
    thread: threading.Thread | None = None
    created_at: str = field(
        default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    )


class RunManager:
    """Creates engines, runs them on worker threads, enforces the run limit."""

    def __init__(self, settings: ServiceSettings, store: FileStore):
        self.settings = settings
        self.store = store
        self.runs_dir = settings.data_dir / "runs"
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._runs: dict[str, RunHandle] = {}

    def _build_client(self, model_id: str):
        if self.settings.replay_dir:
            return ReplayLlmClient(self.settings.replay_dir, model_id=model_id)
        if self.settings.llm_url:
            return HttpLlmClient(self.settings.llm_url, model_id)
        raise ConfigError("no LLM backend configured: set an LLM URL or a replay directory")

    def _build_embedder(self, model_id: str):
        return build_embedder(
            self.settings.embedding_mode,
            vectors_path=self.settings.embeddings_path,
            endpoint_url=self.settings.llm_url,
            model_id=model_id,
        )

    def list_models(self) -> list[str]:
        client = self._build_client("probe")
        return client.list_models()

    def create(self, body: dict) -> RunHandle:
        taxonomy_id = body.get("taxonomy_id", "")
        stored = self.store.get(taxonomy_id)
        if stored is None:
            raise api_error(404, "NotFound", f"unknown taxonomy_id {taxonomy_id!r}")
        model_id = body.get("model_id", "")
        if not model_id:
            raise api_error(422, "ConfigError", "model_id is required")

        try:
            filter_cfg = FilterConfig(
                rho=float(body.get("rho", 0.9)),
                max_extra_depth=int(body.get("max_extra_depth", 1)),
                judge_enabled=bool(body.get("judge_enabled", False)),
                kg_check_enabled=bool(body.get("kg_check_enabled", False)),
                kg_endpoint=self.settings.kg_endpoint,
            )
            cfg = RunConfig(
                model_id=model_id,
                strategy=body.get("strategy", "bfs"),
                filter=filter_cfg,
                parallelism=int(body.get("parallelism", 4)),
                seed_taxonomy_id=taxonomy_id,
                frontier_limit=body.get("frontier_limit"),
            )
        except (ConfigError, TypeError, ValueError) as e:
            raise api_error(422, "ConfigError", str(e))

        with self._lock:
            active = sum(
                1 for h in self._runs.values() if h.state.phase not in FINISHED_PHASES
            )
            if active >= self.settings.max_concurrent_runs:
                raise api_error(
                    409,
                    "TooManyRuns",
                    f"concurrent-run limit ({self.settings.max_concurrent_runs}) reached",
                )
            try:
                seed = parse_taxonomy(stored.document)
                client = self._build_client(model_id)
                embedder = self._build_embedder(model_id)
                judge_client = client if filter_cfg.judge_enabled else None
                kg_client = (
                    KgClient(self.settings.kg_endpoint) if filter_cfg.kg_check_enabled else None
                )
                state = RunState()
                run_dir = self.runs_dir / state.run_id
                cancel_event = threading.Event()
                engine = EnrichmentEngine(
                    seed,
                    cfg,
                    client,
                    embedder,
                    judge_client=judge_client,
                    kg_client=kg_client,
                    run_dir=run_dir,
                    cancel_event=cancel_event,
                    state=state,
                )
            except (ConfigError, FormatError, FileNotFoundError) as e:
                raise api_error(422, "ConfigError", str(e))
            engine.checkpoint()  # seed snapshot so exports work before the first cadence hit
            handle = RunHandle(
                run_id=state.run_id,
                taxonomy_id=taxonomy_id,
                cfg=cfg,
                engine=engine,
                state=state,
                seed=seed,
                run_dir=run_dir,
                cancel_event=cancel_event,
            )
            self._runs[state.run_id] = handle

        thread = threading.Thread(target=self._execute, args=(handle,), daemon=True)
        handle.thread = thread
        thread.start()
        return handle

    @staticmethod
    def _execute(handle: RunHandle) -> None:
        try:
            handle.engine.run()
        except Exception:
            logger.exception("run %s failed", handle.run_id)

    def get(self, run_id: str) -> RunHandle:
        handle = self._runs.get(run_id)
        if handle is None:
            raise api_error(404, "NotFound", f"unknown run_id {run_id!r}")
        return handle

    def list(self) -> list[RunHandle]:
        return sorted(self._runs.values(), key=lambda h: h.created_at)

    def cancel(self, run_id: str) -> RunHandle:
        handle = self.get(run_id)
        if handle.state.phase in FINISHED_PHASES:
            raise api_error(409, "AlreadyFinished", f"run is {handle.state.phase}")
        handle.cancel_event.set()
        return handle


def _run_payload(handle: RunHandle) -> dict:
    snap = handle.state.snapshot()
    snap["taxonomy_id"] = handle.taxonomy_id
    snap["model_id"] = handle.cfg.model_id
    snap["strategy"] = handle.cfg.strategy
    snap["created_at"] = handle.created_at
    snap["report"] = {
        "original_class_count": handle.engine.original_class_count,
        "original_max_depth": handle.engine.original_max_depth,
        "new_class_count": snap["added_nodes"],
        "new_max_depth": snap["current_max_depth"],
        "per_model": {handle.cfg.model_id: snap["added_nodes"]},
    }
    return snap


def _read_decisions(path: Path, after: int) -> tuple[list[dict], int]:
    """Decision page starting at line offset `after`; stops at any torn tail line."""
    if after < 0:
        raise api_error(422, "ConfigError", "after must be >= 0")
    if not path.is_file():
        return [], after
    lines = path.read_text("utf-8").split("\n")
    page = []
    cursor = after
    for line in lines[after:]:
        if not line.strip():
            break
        try:
            page.append(json.loads(line))
        except json.JSONDecodeError:
            break
        cursor += 1
    return page, cursor


def _merge_report_payload(entries) -> dict:
    counts = {"common": 0, "only-left": 0, "only-right": 0}
    for entry in entries:
        counts[entry.color.value] += 1
    return {"entries": [e.to_dict() for e in entries], "counts": counts}


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings.from_env()
    settings.data_dir.mkdir(parents=True, exist_ok=True)
    store = FileStore(settings.data_dir)
    manager = RunManager(settings, store)

    app = FastAPI(title="taxoria", docs_url=None, redoc_url=None)
    app.state.settings = settings
    app.state.store = store
    app.state.manager = manager

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        detail = exc.detail
        if not (isinstance(detail, dict) and "error" in detail):
            detail = {"error": {"code": "Error", "message": str(detail)}}
        return JSONResponse(detail, status_code=exc.status_code)

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            {"error": {"code": "ValidationError", "message": str(exc.errors())}},
            status_code=422,
        )

    @app.post("/api/taxonomies", status_code=201)
    async def upload_taxonomy(request: Request):
        declared = request.headers.get("content-length")
        if declared and declared.isdigit() and int(declared) > settings.max_upload_bytes:
            raise api_error(413, "PayloadTooLarge", "document exceeds the upload size limit")
        body = await request.body()
        if len(body) > settings.max_upload_bytes:
            raise api_error(413, "PayloadTooLarge", "document exceeds the upload size limit")
        try:
            document = body.decode("utf-8")
            taxonomy = parse_taxonomy(document)
        except (UnicodeDecodeError, TaxoriaError) as e:
            raise api_error(400, type(e).__name__, str(e))
        stored = store.save(
            serialize_taxonomy(taxonomy),
            taxonomy.root.name,
            (taxonomy.class_count, taxonomy.max_depth),
        )
        return stored.meta()

    @app.get("/api/taxonomies")
    def list_taxonomies():
        return {"taxonomies": store.list()}

    @app.get("/api/taxonomies/{taxonomy_id}")
    def get_taxonomy(taxonomy_id: str):
        stored = store.get(taxonomy_id)
        if stored is None:
            raise api_error(404, "NotFound", f"unknown taxonomy_id {taxonomy_id!r}")
        payload = stored.meta()
        payload["taxonomy"] = json.loads(stored.document)
        return payload

    @app.get("/api/models")
    def list_models():
        try:
            return {"models": manager.list_models()}
        except (LlmUnreachable, ConfigError) as e:
            raise api_error(502, "LlmUnreachable", str(e))

    @app.post("/api/runs", status_code=202)
    async def create_run(request: Request):
        try:
            body = json.loads(await request.body() or b"{}")
        except json.JSONDecodeError as e:
            raise api_error(400, "MalformedDocument", str(e))
        if not isinstance(body, dict):
            raise api_error(422, "ConfigError", "request body must be a JSON object")
        handle = manager.create(body)
        return {"run_id": handle.run_id, "phase": handle.state.phase}

    @app.get("/api/runs")
    def list_runs():
        return {"runs": [_run_payload(h) for h in manager.list()]}

    @app.get("/api/runs/{run_id}")
    def run_status(run_id: str):
        return _run_payload(manager.get(run_id))

    @app.get("/api/runs/{run_id}/decisions")
    def run_decisions(run_id: str, after: int = 0):
        handle = manager.get(run_id)
        page, cursor = _read_decisions(handle.run_dir / "decisions.jsonl", after)
        return {"decisions": page, "after": after, "next": cursor}

    @app.get("/api/runs/{run_id}/taxonomy")
    def run_taxonomy(run_id: str):
        handle = manager.get(run_id)
        path = handle.run_dir / "taxonomy.json"
        if not path.is_file():
            raise api_error(404, "NotFound", "no snapshot written yet")
        return Response(content=path.read_text("utf-8"), media_type="application/json")

    @app.get("/api/runs/{run_id}/merge-report")
    def run_merge_report(run_id: str):
        handle = manager.get(run_id)
        path = handle.run_dir / "taxonomy.json"
        if not path.is_file():
            raise api_error(404, "NotFound", "no snapshot written yet")
        enriched = parse_taxonomy(path.read_text("utf-8"))
        _, entries = merge_taxonomies(handle.seed, enriched)
        return _merge_report_payload(entries)

    @app.post("/api/runs/{run_id}/cancel", status_code=202)
    def cancel_run(run_id: str):
        handle = manager.cancel(run_id)
        return {"run_id": handle.run_id, "phase": handle.state.phase}

    @app.post("/api/merge")
    async def merge_stored(request: Request):
        try:
            body = json.loads(await request.body() or b"{}")
        except json.JSONDecodeError as e:
            raise api_error(400, "MalformedDocument", str(e))
        left_stored = store.get(body.get("left_id", ""))
        right_stored = store.get(body.get("right_id", ""))
        if left_stored is None or right_stored is None:
            raise api_error(404, "NotFound", "unknown taxonomy_id in merge request")
        left = parse_taxonomy(left_stored.document)
        right = parse_taxonomy(right_stored.document)
        try:
            merged, entries = merge_taxonomies(left, right)
        except RootMismatch as e:
            raise api_error(422, "RootMismatch", str(e))
        return {
            "taxonomy": merged.root.to_dict(),
            "stats": {"class_count": merged.class_count, "max_depth": merged.max_depth},
            "report": _merge_report_payload(entries),
        }

    if settings.static_dir and Path(settings.static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(settings.static_dir), html=True), name="console")

    return app


def serve(settings: ServiceSettings | None = None) -> None:
    """Blocking uvicorn server, bound per settings.bind_addr."""
    import uvicorn

    settings = settings or ServiceSettings.from_env()
    host, _, port = settings.bind_addr.rpartition(":")
    uvicorn.run(create_app(settings), host=host or "127.0.0.1", port=int(port))
