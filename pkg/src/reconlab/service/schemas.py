"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator


class TemporalSpec(BaseModel):
    period: int
    levels: list[int]


class StructuralAggregate(BaseModel):
    label: str
    members: list[str]


class StructuralSpec(BaseModel):
    bottom: list[str]
    aggregates: list[StructuralAggregate]


class HierarchySpec(BaseModel):
    temporal: Optional[TemporalSpec] = None
    structural: Optional[StructuralSpec] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.temporal is None) == (self.structural is None):
            raise ValueError("provide exactly one of 'temporal' or 'structural'")
        return self

    def to_dict(self) -> dict:
        return self.model_dump(exclude_none=True)


class PanelPayload(BaseModel):
    """Observations (T x m) and base forecasts (T x n) as nested lists."""

    obs: list[list[float]]
    base: list[list[float]]
    times: Optional[list[str]] = None


LambdaSpec = Union[float, Literal["auto"]]


class FitRequest(BaseModel):
    hierarchy: HierarchySpec
    panel: PanelPayload
    lam: LambdaSpec = Field(default="auto", alias="lambda")
    variances: list[str] = ["reml", "shrink", "sreml"]

    model_config = {"populate_by_name": True}


class FTestPayload(BaseModel):
    statistic: float
    df1: int
    df2: int
    nominal: bool


class FitResponse(BaseModel):
    lam: float = Field(alias="lambda")
    labels: list[str]
    dims: dict[str, int]
    weights: list[list[float]]
    weights_se: list[list[float]]
    sigmas: dict[str, list[list[float]]]
    f_test: FTestPayload
    coherency_gap: float
    par_row: Optional[int] = None

    model_config = {"populate_by_name": True}


class AnovaRequest(BaseModel):
    hierarchy: HierarchySpec
    panel: PanelPayload
    lam: LambdaSpec = Field(default="auto", alias="lambda")

    model_config = {"populate_by_name": True}


class AnovaRow(BaseModel):
    label: str
    sse_base: float
    sse_recon: float
    sse_proj: float
    f_stat: float
    sse_recon_shrunk: float
    sse_proj_shrunk: float
    cross_term: float


class AnovaResponse(BaseModel):
    lam: float = Field(alias="lambda")
    df1: int
    df2: int
    rows: list[AnovaRow]

    model_config = {"populate_by_name": True}


class ScoreRequest(BaseModel):
    hierarchy: HierarchySpec
    train: PanelPayload
    test: PanelPayload
    lam: LambdaSpec = Field(default="auto", alias="lambda")
    variances: list[str] = ["reml", "shrink", "sreml"]

    model_config = {"populate_by_name": True}


class ScoreResponse(BaseModel):
    n_obs: int
    nodes: list[str]
    rmse_base: list[float]
    rmse_recon: list[float]
    rrmse: list[float]
    log_score_base: float
    log_scores: dict[str, float]
    rel_log_scores: dict[str, float]
    vs_base: float
    vs_scores: dict[str, float]
    rel_vs_scores: dict[str, float]


class SimulateRequest(BaseModel):
    m: int = 4
    a_diag: float = 0.6
    a_offdiag: float = 0.1
    t_grid: list[int] = [120]
    t_test: Optional[int] = None
    reps: int = 50
    seed: int = 0
    estimators: list[str] = ["SHRINK", "SREML", "PAR", "BASE"]


class StudyCell(BaseModel):
    t_train: int
    rep: int
    estimator: str
    log_score: float


class StudyAggregate(BaseModel):
    t_train: int
    estimator: str
    mean_log_score: float
    mean_rel_log_score: Optional[float] = None


class SimulateResponse(BaseModel):
    records: list[StudyCell]
    aggregated: list[StudyAggregate]
