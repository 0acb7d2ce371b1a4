"""FastAPI application exposing the estimation pipeline as jobs."""

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response

from .. import __version__
from ..errors import WidthProbeError
from ..formula import parse_formula, render_formula
from ..nn import Network
from ..report import render_summary, render_sweep_tsv, report_from_dict
from .jobs import JobRegistry
from .schemas import (
    FormulaParseRequest,
    FormulaParseResponse,
    HealthResponse,
    LayerModel,
    RenderRequest,
    RunCreated,
    RunRequest,
    RunStatus,
)


def _status(job):
    outcome = job.outcome
    return RunStatus(
        run_id=job.run_id,
        command=job.request.command,
        state=job.state,
        error=job.error,
        created_unix=job.created_unix,
        finished_unix=job.finished_unix,
        has_report=outcome is not None,
        has_sweep=outcome is not None and outcome.sweep is not None,
        network_count=len(outcome.networks) if outcome else 0,
    )


def create_app(registry=None):
    app = FastAPI(title="widthprobe", version=__version__)
    app.state.registry = registry if registry is not None else JobRegistry()

    @app.exception_handler(WidthProbeError)
    async def _domain_error(request: Request, exc: WidthProbeError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/formula/parse", response_model=FormulaParseResponse)
    def formula_parse(body: FormulaParseRequest):
        layers = parse_formula(body.formula)
        net = Network(layers)
        return FormulaParseResponse(
            layers=[LayerModel(**layer.config()) for layer in layers],
            rendered=render_formula(layers),
            hidden_layer_indices=net.hidden_dense_indices(),
        )

    @app.post("/runs", response_model=RunCreated, status_code=202)
    def create_run(body: RunRequest):
        job = app.state.registry.create(body)
        return RunCreated(run_id=job.run_id, status_url=f"/runs/{job.run_id}")

    @app.get("/runs", response_model=list[RunStatus])
    def list_runs():
        return [_status(job) for job in app.state.registry.list()]

    def _get_job(run_id):
        job = app.state.registry.get(run_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}")
        return job

    def _get_outcome(run_id):
        job = _get_job(run_id)
        if job.state == "error":
            raise HTTPException(
                status_code=409, detail=f"run failed: {job.error}"
            )
        if job.outcome is None:
            raise HTTPException(
                status_code=409, detail=f"run is {job.state}, try again later"
            )
        return job.outcome

    @app.get("/runs/{run_id}", response_model=RunStatus)
    def run_status(run_id: str):
        return _status(_get_job(run_id))

    @app.get("/runs/{run_id}/report")
    def run_report(run_id: str):
        return JSONResponse(content=_get_outcome(run_id).report.to_dict())

    @app.get("/runs/{run_id}/summary", response_class=PlainTextResponse)
    def run_summary(run_id: str):
        return _get_outcome(run_id).summary

    @app.get("/runs/{run_id}/sweep", response_class=PlainTextResponse)
    def run_sweep(run_id: str):
        outcome = _get_outcome(run_id)
        if outcome.sweep is None:
            raise HTTPException(
                status_code=404, detail="this run kind has no sweep"
            )
        return outcome.sweep

    @app.get("/runs/{run_id}/networks/{index}")
    def run_network(run_id: str, index: int):
        outcome = _get_outcome(run_id)
        if not 0 <= index < len(outcome.networks):
            raise HTTPException(
                status_code=404,
                detail=f"run has {len(outcome.networks)} stored networks",
            )
        return Response(
            content=outcome.networks[index],
            media_type="application/octet-stream",
        )

    @app.post("/render/summary", response_class=PlainTextResponse)
    def render_summary_endpoint(body: RenderRequest):
        return render_summary(report_from_dict(body.report))

    @app.post("/render/sweep", response_class=PlainTextResponse)
    def render_sweep_endpoint(body: RenderRequest):
        return render_sweep_tsv(report_from_dict(body.report))

    return app


app = create_app()
