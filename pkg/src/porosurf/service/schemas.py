"""Pydantic request/response models of the porosurf service API."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class BenchmarkShorthand(BaseModel):
    """Benchmark selector expanded server-side into a full spec."""

    kind: Literal["consolidation", "subsidence"]
    sigma: float = Field(ge=0)
    l_x: float = Field(gt=0)
    l_z: Optional[float] = Field(default=None, gt=0)
    profile: Literal["full", "desk"] = "desk"
    overrides: dict = Field(default_factory=dict)


class SpecPayload(BaseModel):
    """A benchmark spec, given either as shorthand or as a full spec dict."""

    benchmark: Optional[BenchmarkShorthand] = None
    spec: Optional[dict] = None


class SpecResponse(BaseModel):
    spec: dict
    spec_sha256: str
    m_y: int
    kl_points: int


class GenDataRequest(SpecPayload):
    out_dir: str
    seed: Optional[int] = None
    workers: int = Field(default=1, ge=1, le=64)


class GenDataResponse(BaseModel):
    dataset_dir: str
    spec_sha256: str
    seed: int
    n_train: int
    n_test: int
    variables: list[str]
    fem_seconds: float


class TrainRequest(BaseModel):
    dataset_dir: str
    variable: Literal["u_x", "u_z", "p"]
    m_modes: int = Field(ge=1)
    k_multiplier: Optional[float] = Field(default=None, ge=1.0, le=2.0)
    seed: Optional[int] = None
    out_dir: Optional[str] = None
    optimizer_overrides: dict = Field(default_factory=dict)


class TrainResponse(BaseModel):
    checkpoint_dir: str
    variable: str
    M: int
    K: int
    trunk_final_loss: float
    train_seconds: float


class EvalRequest(BaseModel):
    checkpoint_dir: str
    dataset_dir: str
    split: Literal["train", "test"] = "test"
    baseline: Optional[Literal["zero", "mean"]] = None


class EvalResponse(BaseModel):
    variable: str
    M: int
    K: int
    split: str
    baseline: Optional[str]
    n_samples: int
    error: float
    root_error: float
    extrapolation_fraction: float


class PredictRequest(BaseModel):
    checkpoint_dir: str
    xi: list[list[float]]
    points: list[list[float]]


class PredictResponse(BaseModel):
    values: list[list[float]]
    extrapolation_fraction: float


class ExportRequest(BaseModel):
    checkpoint_dir: str
    out_dir: str
    times: list[float]
    dataset_dir: Optional[str] = None
    row: int = 0
    xi: Optional[list[float]] = None
    xs: Optional[list[float]] = None
    zs: Optional[list[float]] = None
    svg: bool = False


class ExportResponse(BaseModel):
    files: list[str]


class PipelineRequest(SpecPayload):
    out_dir: str
    seed: Optional[int] = None
    train_seed: Optional[int] = None
    workers: int = Field(default=1, ge=1, le=64)


class PipelineResponse(BaseModel):
    run_dir: str
    report: dict


class ReportRequest(BaseModel):
    run_dirs: list[str]


class ReportResponse(BaseModel):
    csv: str
    reports: list[dict]


class ErrorBody(BaseModel):
    kind: str
    message: str
