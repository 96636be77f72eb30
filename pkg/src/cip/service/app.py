"""FastAPI service wrapping the toolkit.

The CLI is a thin client of these endpoints; everything it can do goes
through the request models here. Paths in requests are resolved on the
service host (the CLI's default transport is in-process, so they share a
filesystem).
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import BackendError, CipError, ConfigError
from ..pipeline import (
    PipelineConfig,
    SweepSpec,
    apply_overrides,
    config_from_dict,
    load_config,
    render_report_file,
    run_pipeline,
    run_sweep,
)
from ..pipeline.refdata import reference_lookup
from ..pipeline import worldlab
from ..synthworld import (
    load_world,
    make_polysemy_world,
    make_sweep_world,
    save_world,
)
from ..theory import verify_bound_suite
from ..trainer import TrainConfig
from .models import (
    BoundVerifyRequest,
    BoundVerifyResponse,
    HealthResponse,
    ReferenceLookupRequest,
    ReferenceLookupResponse,
    ReportRenderRequest,
    ReportRenderResponse,
    RunRequest,
    RunResponse,
    SweepRequest,
    SweepResponse,
    WorldExperimentRequest,
    WorldExperimentResponse,
)

_STATUS_BY_KIND = {"config-error": 400, "backend-error": 502}


def _error_response(exc: CipError) -> JSONResponse:
    if isinstance(exc, ConfigError):
        status = 400
    elif isinstance(exc, BackendError):
        status = 502
    else:
        status = 422
    return JSONResponse(status_code=status,
                        content={"error": {"kind": exc.kind, "message": str(exc)}})


def _resolve_config(req) -> PipelineConfig:
    overrides = req.overrides.model_dump()
    if req.config_path:
        return load_config(req.config_path, overrides)
    if req.config is not None:
        return config_from_dict(apply_overrides(req.config, overrides))
    raise ConfigError("request needs config_path or an inline config")


def create_app() -> FastAPI:
    app = FastAPI(title="cip-service", version=__version__)

    @app.exception_handler(CipError)
    async def handle_cip_error(request, exc: CipError):
        return _error_response(exc)

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(status="ok", version=__version__)

    def _run(req: RunRequest, stop_after: str | None) -> RunResponse:
        config = _resolve_config(req)
        result = run_pipeline(config, resume=req.resume,
                              stop_after=stop_after or req.stop_after)
        return RunResponse(out_dir=result.out_dir,
                           manifest_path=result.manifest_path,
                           report=result.report, stages_run=result.stages_run)

    @app.post("/v1/runs", response_model=RunResponse)
    def run(req: RunRequest):
        return _run(req, None)

    for _stage, _route in (
        ("caption", "caption"), ("prompts", "prompts"), ("rewrite", "rewrite"),
        ("generate", "generate"), ("train", "train"), ("eval", "eval"),
    ):
        def _make(stage: str):
            def endpoint(req: RunRequest):
                return _run(req, stage)
            return endpoint

        app.post(f"/v1/stages/{_route}", response_model=RunResponse,
                 name=f"stage_{_stage}")(_make(_stage))

    @app.post("/v1/sweeps", response_model=SweepResponse)
    def sweep(req: SweepRequest):
        base = _resolve_config(req)
        kwargs = {}
        if req.guidance:
            kwargs["guidance"] = tuple(float(g) for g in req.guidance)
        if req.strategies:
            kwargs["strategies"] = tuple(req.strategies)
        spec = SweepSpec(repeats=req.repeats, **kwargs)
        report = run_sweep(spec, base)
        return SweepResponse(report=report,
                             report_path=str(base.output_dir) + "/sweep_report.json")

    @app.post("/v1/bounds/verify", response_model=BoundVerifyResponse)
    def verify_bound(req: BoundVerifyRequest):
        train_config = TrainConfig(epochs=req.train_epochs, batch_size=64)
        if req.world_path:
            from ..synthworld import GuidanceKnob, world_prompt_set
            from ..theory import check_bound

            world = load_world(req.world_path)
            prompt_set = world_prompt_set(world, req.template, req.per_class,
                                          req.quality, req.seed)
            report = check_bound(world, prompt_set, GuidanceKnob(req.guidance),
                                 train_config, req.n_mc, req.seed)
            return BoundVerifyResponse(report={
                "report_version": 1, "kind": "bound", "report": report.to_dict(),
            })
        suite = verify_bound_suite(req.n_configs, req.seed, req.n_mc,
                                   train_config, req.n_sigmas)
        suite_report = {"report_version": 1, "kind": "bound-suite", **suite}
        return BoundVerifyResponse(report=suite_report)

    @app.post("/v1/worlds/experiment", response_model=WorldExperimentResponse)
    def world_experiment(req: WorldExperimentRequest):
        if req.world_path:
            world = load_world(req.world_path)
        elif req.preset == "polysemy":
            world = make_polysemy_world()
        elif req.preset == "sweep":
            world = make_sweep_world(req.preset_seed)
        else:
            raise ConfigError("world experiment needs world_path or a preset")
        world_path = None
        if req.save_world_to:
            save_world(world, req.save_world_to)
            world_path = req.save_world_to
        table = worldlab.strategy_table(
            world, list(req.strategies), list(req.seeds), guidance=req.guidance,
            per_class=req.per_class, eval_n=req.eval_n, quality=req.quality,
        )
        means = {s: float(np.mean(v)) for s, v in table.items()}
        return WorldExperimentResponse(table=table, means=means,
                                       world_path=world_path)

    @app.post("/v1/reports/render", response_model=ReportRenderResponse)
    def report_render(req: ReportRenderRequest):
        import json
        from pathlib import Path

        text = render_report_file(req.path, req.dataset)
        report = json.loads(Path(req.path).read_text(encoding="utf-8"))
        return ReportRenderResponse(text=text, report=report)

    @app.post("/v1/reference/lookup", response_model=ReferenceLookupResponse)
    def reference(req: ReferenceLookupRequest):
        return ReferenceLookupResponse(
            accuracy=reference_lookup(req.dataset, req.strategy, req.guidance)
        )

    return app


app = create_app()
