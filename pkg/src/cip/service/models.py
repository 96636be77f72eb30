"""Pydantic request/response models for the toolkit service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class Overrides(BaseModel):
    seed: Optional[int] = None
    mode: Optional[str] = None
    strategy: Optional[str] = None
    guidance: Optional[float] = None
    replay: Optional[str] = None
    out: Optional[str] = None


class RunRequest(BaseModel):
    config_path: Optional[str] = None
    config: Optional[dict] = None
    overrides: Overrides = Field(default_factory=Overrides)
    resume: bool = False
    stop_after: Optional[str] = None


class RunResponse(BaseModel):
    out_dir: str
    manifest_path: Optional[str]
    report: Optional[dict]
    stages_run: list[str]


class SweepRequest(BaseModel):
    config_path: Optional[str] = None
    config: Optional[dict] = None
    overrides: Overrides = Field(default_factory=Overrides)
    guidance: Optional[list[float]] = None
    strategies: Optional[list[str]] = None
    repeats: int = 1


class SweepResponse(BaseModel):
    report: dict
    report_path: str


class BoundVerifyRequest(BaseModel):
    n_configs: int = 20
    seed: int = 0
    n_mc: int = 50_000
    n_sigmas: float = 3.0
    world_path: Optional[str] = None
    template: str = "cip"
    quality: str = "fine"
    per_class: int = 20
    guidance: float = 1.5
    train_epochs: int = 60


class BoundVerifyResponse(BaseModel):
    report: dict


class WorldExperimentRequest(BaseModel):
    world_path: Optional[str] = None
    preset: Optional[str] = None  # "polysemy" | "sweep"
    preset_seed: int = 0
    strategies: list[str] = Field(default_factory=lambda: ["basic", "cip"])
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    guidance: float = 1.5
    per_class: int = 20
    eval_n: int = 20_000
    quality: str = "fine"
    save_world_to: Optional[str] = None


class WorldExperimentResponse(BaseModel):
    table: dict[str, list[float]]
    means: dict[str, float]
    world_path: Optional[str] = None


class ReportRenderRequest(BaseModel):
    path: str
    dataset: Optional[str] = None


class ReportRenderResponse(BaseModel):
    text: str
    report: dict


class ReferenceLookupRequest(BaseModel):
    dataset: str
    strategy: str
    guidance: float


class ReferenceLookupResponse(BaseModel):
    accuracy: Optional[float]


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    kind: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorBody


AnyResponse = Any
