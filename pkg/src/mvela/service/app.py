"""FastAPI application wrapping the pipeline and one-shot computations.

The service owns no state beyond the filesystem: pipeline endpoints operate
on an output directory and are safe to re-invoke (completed stages are
no-ops). Ad-hoc endpoints (suite, evaluate, encode, features) compute
directly on the request payload.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..design import Column, Design, NumericDesign, normalize
from ..ela import compute_feature_vector
from ..encoding import EncoderConfig, encode
from ..errors import MvelaError, StageError
from ..pipeline import PipelineConfig, run_pipeline, stage_status
from ..problem import evaluate_relaxed, load_suite_manifest
from ..problem import SuiteConfig, generate_synthetic_suite, suite_manifest
from ..seeding import derive_seed
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(title="mvela service", version=__version__)

    @app.exception_handler(StageError)
    async def stage_error(request: Request, exc: StageError):
        return JSONResponse(status_code=409, content={"detail": str(exc), "stage": exc.stage})

    @app.exception_handler(MvelaError)
    async def package_error(request: Request, exc: MvelaError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/pipeline/run", response_model=schemas.PipelineRunResponse)
    def pipeline_run(request: schemas.PipelineRunRequest):
        config = PipelineConfig.from_dict(request.config)
        stages = tuple(request.stages) if request.stages else None
        result = run_pipeline(config, request.out_dir, stages=stages, jobs=request.jobs)
        return schemas.PipelineRunResponse(
            executed=result["executed"],
            skipped=result["skipped"],
            config_hash=config.config_hash(),
            out_dir=request.out_dir,
        )

    @app.post("/pipeline/status", response_model=schemas.PipelineStatusResponse)
    def pipeline_status(request: schemas.PipelineStatusRequest):
        config = PipelineConfig.from_dict(request.config)
        return schemas.PipelineStatusResponse(
            stages=stage_status(config, request.out_dir),
            config_hash=config.config_hash(),
        )

    @app.post("/suite", response_model=schemas.SuiteResponse)
    def suite(request: schemas.SuiteRequest):
        config = SuiteConfig.from_dict(request.suite)
        problems = generate_synthetic_suite(config, request.seed)
        return schemas.SuiteResponse(manifest=suite_manifest(config, request.seed, problems))

    @app.post("/problems/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(request: schemas.EvaluateRequest):
        problem = load_suite_manifest({"problems": [request.manifest_entry]})[0]
        return schemas.EvaluateResponse(
            instance_id=problem.instance_id,
            value=evaluate_relaxed(problem, request.point),
        )

    @app.post("/encode", response_model=schemas.EncodeResponse)
    def encode_design(request: schemas.EncodeRequest):
        design = _design_from_request(request)
        config = (
            EncoderConfig.from_dict(request.encoder) if request.encoder else EncoderConfig()
        )
        encoded = encode(design, request.method, config)
        if request.normalize:
            numeric = normalize(encoded)
            rows, objective = numeric.Xn, numeric.Yn
            names = numeric.feature_names
        else:
            rows, objective = encoded.X, encoded.Y
            names = encoded.feature_names
        return schemas.EncodeResponse(
            problem_id=design.problem_id,
            encoding_tag=encoded.encoding_tag,
            feature_names=list(names),
            rows=[[float(v) for v in row] for row in rows],
            objective=[float(v) for v in objective],
            normalized=request.normalize,
            max_efficiency_gap=encoded.max_efficiency_gap,
        )

    @app.post("/features", response_model=schemas.FeaturesResponse)
    def features(request: schemas.FeaturesRequest):
        numeric = NumericDesign(
            problem_id=request.problem_id,
            feature_names=tuple(request.feature_names),
            Xn=np.asarray(request.rows, dtype=float),
            Yn=np.asarray(request.objective, dtype=float),
            encoding_tag=request.encoding_tag,
        )
        fv = compute_feature_vector(numeric, seed=request.seed, repetition=request.repetition)
        return schemas.FeaturesResponse(
            problem_id=fv.problem_id,
            encoding_tag=fv.encoding_tag,
            names=list(fv.names),
            values=[float(v) for v in fv.values],
            flags=list(fv.flags),
        )

    return app


def _design_from_request(request: schemas.EncodeRequest) -> Design:
    columns = tuple(
        Column(c.name, c.kind, tuple(c.levels) if c.levels else None) for c in request.columns
    )
    n = len(request.rows)
    X = np.empty((n, len(columns)), dtype=object)
    for i, row in enumerate(request.rows):
        for j, col in enumerate(columns):
            if col.kind == "continuous":
                X[i, j] = float(row[j])
            elif col.kind == "integer":
                X[i, j] = int(row[j])
            else:
                X[i, j] = str(row[j])
    return Design(
        problem_id=request.problem_id,
        columns=columns,
        X=X,
        Y=np.asarray(request.objective, dtype=float),
        seed=derive_seed("adhoc", request.problem_id),
    )
