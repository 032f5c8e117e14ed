"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field

Cell = int | float | str


class HealthResponse(BaseModel):
    status: str
    version: str


class PipelineRunRequest(BaseModel):
    config: dict
    out_dir: str
    stages: list[str] | None = None
    jobs: int = 1


class PipelineRunResponse(BaseModel):
    executed: list[str]
    skipped: list[str]
    config_hash: str
    out_dir: str


class PipelineStatusRequest(BaseModel):
    config: dict
    out_dir: str


class PipelineStatusResponse(BaseModel):
    stages: dict[str, str]
    config_hash: str


class SuiteRequest(BaseModel):
    suite: dict
    seed: int = 0


class SuiteResponse(BaseModel):
    manifest: dict


class EvaluateRequest(BaseModel):
    manifest_entry: dict = Field(description="One entry of a suite manifest's 'problems' list")
    point: dict[str, Cell]


class EvaluateResponse(BaseModel):
    instance_id: str
    value: float


class ColumnSchema(BaseModel):
    name: str
    kind: str
    levels: list[str] | None = None


class EncodeRequest(BaseModel):
    problem_id: str = "adhoc"
    columns: list[ColumnSchema]
    rows: list[list[Cell]]
    objective: list[float]
    method: str
    normalize: bool = True
    encoder: dict | None = None


class EncodeResponse(BaseModel):
    problem_id: str
    encoding_tag: str
    feature_names: list[str]
    rows: list[list[float]]
    objective: list[float]
    normalized: bool
    max_efficiency_gap: float


class FeaturesRequest(BaseModel):
    problem_id: str = "adhoc"
    feature_names: list[str]
    rows: list[list[float]]
    objective: list[float]
    encoding_tag: str = "target"
    seed: int = 0
    repetition: int = 0


class FeaturesResponse(BaseModel):
    problem_id: str
    encoding_tag: str
    names: list[str]
    values: list[float]
    flags: list[str]
