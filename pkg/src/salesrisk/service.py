"""HTTP/JSON service: training jobs, sampling, and risk-curve scoring.

Clients speak field names; covariates are encoded server-side against the
model's persisted schema, so one-hot layouts never cross the wire.  Training
runs asynchronously (job id + poll) except for small linear fits, which
complete within the request.  Every response carries enough provenance
(model id, seed, estimator) to reproduce it.
"""

from __future__ import annotations

import io
import logging
import threading
import time
import uuid

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import __version__, datagen, deepfm, quantreg, risk
from .artifacts import ModelRegistry, model_id
from .errors import DataError, DomainError, SalesRiskError, SchemaError, UnseenLevelError
from .generator import ConditionalSampler, PRNG_NAME

SYNC_LINEAR_ROW_LIMIT = 20_000


class TrainRequest(BaseModel):
    kind: str = "linear"
    csv: str
    response_column: str
    fields: list = Field(default_factory=list)  # [{name, kind, levels?}]
    m: int | None = None
    seed: int = 0
    config: dict = Field(default_factory=dict)


class SampleRequest(BaseModel):
    covariates: dict
    K: int = 1000
    seed: int = 0


class RiskCurveRequest(BaseModel):
    covariates: dict
    r: float = 1.0
    l_bar: float | None = None
    l_min: float = 0.0
    points: int = 100
    xi: float | None = None
    estimator: str = "closed"
    K: int = 10_000
    seed: int = 0
    loss_plugin: str | None = None  # one of risk.LOSS_PLUGINS


class JobBoard:
    """In-process training jobs; one live job per dataset digest."""

    def __init__(self):
        self.jobs = {}
        self.by_digest = {}
        self.lock = threading.Lock()

    def start(self, digest):
        with self.lock:
            live = self.by_digest.get(digest)
            if live is not None and self.jobs[live]["status"] == "running":
                return None
            job_id = uuid.uuid4().hex[:12]
            self.jobs[job_id] = {"status": "running", "model_id": None, "error": None}
            self.by_digest[digest] = job_id
            return job_id

    def finish(self, job_id, model_id=None, error=None):
        with self.lock:
            job = self.jobs[job_id]
            job["status"] = "failed" if error else "done"
            job["model_id"] = model_id
            job["error"] = error


def _fit(req: TrainRequest, registry: ModelRegistry):
    buf = io.StringIO(req.csv)
    schema = datagen.infer_levels(buf, req.fields)
    buf.seek(0)
    data = datagen.csv_ingest(buf, schema, req.response_column)
    m = req.m or quantreg.default_m(data.n)
    grid = quantreg.QuantileGrid(m)
    if req.kind == "linear":
        model = quantreg.fit_grid(data, grid)
    elif req.kind == "deepfm":
        cfg = deepfm.DeepFmConfig(seed=req.seed, **req.config)
        model = deepfm.train(data, grid, cfg)
    else:
        raise DomainError(f"unknown model kind {req.kind!r}")
    return registry.insert(model, created_at=time.time())


def create_app(registry_dir, static_dir=None):
    app = FastAPI(title="salesrisk", version=__version__)
    registry = ModelRegistry(registry_dir)
    jobs = JobBoard()
    samplers = {}

    def sampler_for(mid):
        if mid not in samplers:
            samplers[mid] = ConditionalSampler(registry.get(mid))
        return samplers[mid]

    log = logging.getLogger("salesrisk.service")

    @app.middleware("http")
    async def correlation(request: Request, call_next):
        cid = uuid.uuid4().hex[:12]
        request.state.correlation_id = cid
        start = time.perf_counter()
        try:
            response = await call_next(request)
        except Exception as exc:  # noqa: BLE001 - boundary handler
            log.error("cid=%s method=%s path=%s status=500 error=%r",
                      cid, request.method, request.url.path, exc)
            return JSONResponse(status_code=500, content={
                "error": str(exc), "correlation_id": cid})
        response.headers["x-correlation-id"] = cid
        log.info("cid=%s method=%s path=%s status=%d elapsed_ms=%.1f",
                 cid, request.method, request.url.path, response.status_code,
                 1000 * (time.perf_counter() - start))
        return response

    @app.exception_handler(SalesRiskError)
    async def domain_errors(request: Request, exc: SalesRiskError):
        cid = getattr(request.state, "correlation_id", "")
        if isinstance(exc, UnseenLevelError):
            status = 422
        elif isinstance(exc, (SchemaError, DataError, DomainError)):
            status = 400
        else:
            status = 500
        return JSONResponse(status_code=status, content={
            "error": str(exc), "correlation_id": cid})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__, "prng": PRNG_NAME}

    @app.post("/models", status_code=202)
    def train_model(req: TrainRequest):
        import hashlib

        digest = hashlib.sha256(req.csv.encode()).hexdigest()
        sync = req.kind == "linear" and req.csv.count("\n") <= SYNC_LINEAR_ROW_LIMIT
        job_id = jobs.start(digest)
        if job_id is None:
            return JSONResponse(status_code=409, content={
                "error": "training already running for this dataset"})
        if sync:
            try:
                mid = _fit(req, registry)
            except SalesRiskError as exc:
                jobs.finish(job_id, error=str(exc))
                raise
            jobs.finish(job_id, model_id=mid)
            return {"job_id": job_id, "status": "done", "model_id": mid}

        def work():
            try:
                jobs.finish(job_id, model_id=_fit(req, registry))
            except Exception as exc:  # noqa: BLE001 - job boundary
                jobs.finish(job_id, error=str(exc))

        threading.Thread(target=work, daemon=True).start()
        return {"job_id": job_id, "status": "running"}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        if job_id not in jobs.jobs:
            return JSONResponse(status_code=404, content={"error": "unknown job"})
        return {"job_id": job_id, **jobs.jobs[job_id]}

    @app.get("/models")
    def list_models():
        return registry.list()

    @app.get("/models/{mid}")
    def model_meta(mid: str):
        try:
            entry = registry.entry(mid)
        except KeyError:
            return JSONResponse(status_code=404, content={"error": "unknown model"})
        model = registry.get(mid)
        fields = [{"name": f.name, "kind": f.kind,
                   "levels": list(f.levels) if f.kind == datagen.KIND_CATEGORICAL else None}
                  for f in model.schema.fields]
        return {"model_id": mid, **entry, "fields": fields}

    @app.post("/models/{mid}/samples")
    def draw_samples(mid: str, req: SampleRequest):
        try:
            sampler = sampler_for(mid)
        except KeyError:
            return JSONResponse(status_code=404, content={"error": "unknown model"})
        x = sampler.model.schema.encode_row(req.covariates)
        draws = sampler.sample(x, req.K, req.seed)
        return {"model_id": mid, "seed": req.seed, "K": req.K, "prng": PRNG_NAME,
                "draws": [float(v) for v in draws]}

    @app.post("/models/{mid}/risk-curve")
    def risk_curve_endpoint(mid: str, req: RiskCurveRequest):
        try:
            sampler = sampler_for(mid)
        except KeyError:
            return JSONResponse(status_code=404, content={"error": "unknown model"})
        x = sampler.model.schema.encode_row(req.covariates)
        cdf = sampler.cdf(x)
        spec = risk.RiskSpec(r=req.r, l_bar=req.l_bar, l_min=req.l_min,
                             n_grid=req.points, xi=req.xi)
        gl = None
        if req.loss_plugin:
            if req.loss_plugin not in risk.LOSS_PLUGINS:
                raise DomainError(f"unknown loss plugin {req.loss_plugin!r}")
            gl = risk.LOSS_PLUGINS[req.loss_plugin](spec)
        curve = risk.risk_curve(cdf, spec, estimator=req.estimator, gl=gl,
                                K=req.K, seed=req.seed)
        body = curve.to_dict()
        if req.xi is not None:
            exceed = []
            excess = []
            for l in curve.levels:
                if 0.0 < req.xi < l:
                    pe, ee = risk.threshold_measures(cdf, spec, float(l), req.xi)
                else:
                    pe, ee = None, None  # xi outside (0, l) at this grid point
                exceed.append(pe)
                excess.append(ee)
            body["exceed_prob"] = exceed
            body["expected_excess"] = excess
        body.update({"model_id": mid, "r": req.r, "prng": PRNG_NAME,
                     "covariates": req.covariates})
        return body

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
