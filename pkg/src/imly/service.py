"""HTTP interface for the interactive loop.

Audio is submitted as a job and processed by a bounded worker pool; the
acoustic analysis is cached so the decoder knobs can be re-run on a
finished job without touching the recognizer. Jobs live in memory under
an LRU bound; evicted ids simply become not-found.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from fastapi import FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.responses import HTMLResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import pipeline
from .audio_io import AudioBuffer, decode_wav
from .errors import CacheMissError, ConfigError, DataError, ImlyError

MAX_PAYLOAD_BYTES = 50 * 1024 * 1024
JOB_CAPACITY = 100

UI_DIR_ENV = "IMLY_UI_DIR"

#: keys accepted in the submit-time config part
SUBMIT_KEYS = pipeline.OVERRIDE_KEYS + ("use_separation", "seed")

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>imly</title></head>
<body><h1>imly service</h1>
<p>No UI bundle found. POST a WAV to <code>/jobs</code> and poll
<code>/jobs/{id}</code>; see the package README for the API.</p>
</body></html>
"""


@dataclass
class Job:
    id: str
    overrides: dict
    state: str = "queued"
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)
    error: str | None = None
    result: pipeline.LyricResult | None = None
    cache_key: str | None = None
    history: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def set_state(self, state: str) -> None:
        self.state = state
        self.updated_at = time.time()

    def snapshot(self) -> dict:
        with self.lock:
            return {
                "id": self.id,
                "state": self.state,
                "created_at": self.created_at,
                "updated_at": self.updated_at,
                "error": self.error,
                "overrides": dict(self.overrides),
                "history": [dict(h) for h in self.history],
                "result": self.result.as_dict() if self.result else None,
            }


class JobStore:
    """LRU-bounded in-memory job table."""

    def __init__(self, capacity: int = JOB_CAPACITY):
        self._jobs: OrderedDict[str, Job] = OrderedDict()
        self._capacity = capacity
        self._lock = threading.Lock()

    def create(self, overrides: dict) -> Job:
        job = Job(id=uuid.uuid4().hex, overrides=overrides)
        with self._lock:
            self._jobs[job.id] = job
            while len(self._jobs) > self._capacity:
                self._jobs.popitem(last=False)
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is not None:
                self._jobs.move_to_end(job_id)
            return job


def _decoder_overrides(overrides: dict) -> dict:
    return {k: overrides[k] for k in pipeline.OVERRIDE_KEYS if k in overrides}


def _job_config(base: pipeline.PipelineConfig, overrides: dict) -> pipeline.PipelineConfig:
    cfg = base
    if "use_separation" in overrides:
        cfg = replace(cfg, use_separation=bool(overrides["use_separation"]))
    if "seed" in overrides:
        cfg = replace(cfg, seed=int(overrides["seed"]))
    return cfg


def _top_lines(result: pipeline.LyricResult) -> list[str | None]:
    return [
        seg["candidates"][0]["text"] if seg["candidates"] else None
        for seg in result.segments
    ]


def create_app(
    cfg: pipeline.PipelineConfig,
    models: pipeline.Models | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    """Build the service around one pipeline configuration."""
    if models is None:
        models = pipeline.load_models(cfg)
    cache = pipeline.AnalysisCache()
    store = JobStore()
    pool = ThreadPoolExecutor(max_workers=os.cpu_count() or 2)
    app = FastAPI(title="imly", docs_url=None, redoc_url=None)

    def process(job: Job, buf: AudioBuffer) -> None:
        job_cfg = _job_config(cfg, job.overrides)
        try:
            work = pipeline.prepare_input(buf)
            key = f"{pipeline.audio_hash(work)}:{pipeline.stage_hash(job_cfg, models)}"
            analysis = cache.get(key)
            if analysis is None:
                with job.lock:
                    job.set_state("separating")
                fg = pipeline.separate_stage(work, job_cfg)
                with job.lock:
                    job.set_state("recognizing")
                analysis = pipeline.recognize_stage(work, fg, job_cfg, models)
                cache.put(analysis)
            with job.lock:
                job.cache_key = analysis.key
                job.set_state("decoding")
            result = pipeline.decode_stage(
                analysis, job_cfg, models, _decoder_overrides(job.overrides)
            )
            with job.lock:
                job.result = result
                job.set_state("done")
        except Exception as exc:  # failure is a terminal job state, not a crash
            with job.lock:
                job.error = str(exc)
                job.set_state("failed")

    @app.get("/healthz")
    def healthz() -> PlainTextResponse:
        return PlainTextResponse("ok")

    @app.post("/jobs", status_code=202)
    async def create_job(
        audio: UploadFile = File(...), config: str | None = Form(None)
    ) -> dict:
        payload = await audio.read()
        if len(payload) > MAX_PAYLOAD_BYTES:
            raise HTTPException(413, "payload exceeds 50 MB")
        try:
            buf = decode_wav(payload)
        except DataError as exc:
            raise HTTPException(400, f"bad audio: {exc}")
        overrides = {}
        if config:
            try:
                overrides = json.loads(config)
            except json.JSONDecodeError as exc:
                raise HTTPException(400, f"config part is not valid JSON: {exc}")
            if not isinstance(overrides, dict):
                raise HTTPException(400, "config part must be a JSON object")
            unknown = set(overrides) - set(SUBMIT_KEYS)
            if unknown:
                raise HTTPException(400, f"unknown config keys: {sorted(unknown)}")
        job = store.create(overrides)
        pool.submit(process, job, buf)
        return {"id": job.id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        job = store.get(job_id)
        if job is None:
            raise HTTPException(404, "unknown job id")
        return job.snapshot()

    @app.post("/jobs/{job_id}/redecode")
    async def redecode_job(job_id: str, request: Request) -> dict:
        job = store.get(job_id)
        if job is None:
            raise HTTPException(404, "unknown job id")
        try:
            overrides = await request.json()
        except json.JSONDecodeError as exc:
            raise HTTPException(400, f"body is not valid JSON: {exc}")
        if not isinstance(overrides, dict):
            raise HTTPException(400, "body must be a JSON object")
        unknown = set(overrides) - set(pipeline.OVERRIDE_KEYS)
        if unknown:
            raise HTTPException(400, f"unknown override keys: {sorted(unknown)}")
        with job.lock:
            if job.state != "done":
                raise HTTPException(409, f"job is {job.state}, not done")
            if job.cache_key is None:
                raise HTTPException(409, "job has no cached analysis; resubmit")
            job.set_state("decoding")
            merged = {**_decoder_overrides(job.overrides), **overrides}
            job_cfg = _job_config(cfg, job.overrides)
            try:
                result = pipeline.redecode(job.cache_key, job_cfg, models, cache, merged)
            except CacheMissError:
                job.set_state("done")
                raise HTTPException(409, "cached analysis was evicted; resubmit")
            except (ConfigError, DataError) as exc:
                job.set_state("done")
                raise HTTPException(400, str(exc))
            job.overrides = {**job.overrides, **overrides}
            job.result = result
            job.history.append({"overrides": dict(overrides), "top_1": _top_lines(result)})
            job.set_state("done")
        return job.snapshot()

    ui_path = ui_dir or os.environ.get(UI_DIR_ENV) or _default_ui_dir()
    if ui_path and os.path.isdir(ui_path):
        app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")
    else:

        @app.get("/")
        def index() -> HTMLResponse:
            return HTMLResponse(_FALLBACK_PAGE)

    return app


def _default_ui_dir() -> str | None:
    here = os.path.dirname(os.path.abspath(__file__))
    candidate = os.path.normpath(os.path.join(here, "..", "..", "frontend", "dist"))
    return candidate if os.path.isdir(candidate) else None
