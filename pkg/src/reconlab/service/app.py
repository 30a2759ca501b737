"""FastAPI application wrapping the core reconciliation package."""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, HTTPException

from ..glm import ConvergenceError, RankDeficientError
from ..hierarchy import from_spec
from ..matops import NotPositiveDefiniteError
from ..panel import ForecastPanel
from ..runner import run_anova, run_fit, run_score, run_simulate
from . import schemas

app = FastAPI(
    title="reconlab",
    description="Hierarchical forecast reconciliation with uncertainty quantification.",
    version="0.1.0",
)

_CLIENT_ERRORS = (
    ValueError,
    KeyError,
    RankDeficientError,
    ConvergenceError,
    NotPositiveDefiniteError,
)


def _build_panel(payload: schemas.PanelPayload) -> ForecastPanel:
    return ForecastPanel(
        Y=np.asarray(payload.obs, dtype=float),
        Yhat=np.asarray(payload.base, dtype=float),
        times=tuple(payload.times or ()),
    )


def _clean(x: float) -> float:
    return x if math.isfinite(x) else float("nan")


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/fit", response_model=schemas.FitResponse)
def fit(req: schemas.FitRequest) -> schemas.FitResponse:
    try:
        h = from_spec(req.hierarchy.to_dict())
        panel = _build_panel(req.panel)
        result = run_fit(h, panel, lam=req.lam, kinds=req.variances)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return schemas.FitResponse(
        lam=result.lam,
        labels=list(h.labels),
        dims={"t": panel.t_obs, "n": h.n, "m": h.m},
        weights=result.weights.P.tolist(),
        weights_se=result.weights_se.tolist(),
        sigmas={k: s.value.tolist() for k, s in result.sigmas.items()},
        f_test=schemas.FTestPayload(
            statistic=result.f_overall.statistic,
            df1=result.f_overall.df1,
            df2=result.f_overall.df2,
            nominal=result.f_overall.nominal,
        ),
        coherency_gap=result.diagnostics["coherency_gap"],
        par_row=result.par_row,
    )


@app.post("/anova", response_model=schemas.AnovaResponse)
def anova(req: schemas.AnovaRequest) -> schemas.AnovaResponse:
    try:
        h = from_spec(req.hierarchy.to_dict())
        panel = _build_panel(req.panel)
        table = run_anova(h, panel, lam=req.lam)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return schemas.AnovaResponse(
        lam=table.lam,
        df1=table.df1,
        df2=table.df2,
        rows=[schemas.AnovaRow(**r.__dict__) for r in table.rows],
    )


@app.post("/score", response_model=schemas.ScoreResponse)
def score(req: schemas.ScoreRequest) -> schemas.ScoreResponse:
    try:
        h = from_spec(req.hierarchy.to_dict())
        train = _build_panel(req.train)
        test = _build_panel(req.test)
        report = run_score(h, train, test, lam=req.lam, kinds=req.variances)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    d = report.to_dict()
    d["rrmse"] = [_clean(v) for v in d["rrmse"]]
    return schemas.ScoreResponse(**d)


@app.post("/simulate", response_model=schemas.SimulateResponse)
def simulate(req: schemas.SimulateRequest) -> schemas.SimulateResponse:
    try:
        result = run_simulate(
            m=req.m,
            a_diag=req.a_diag,
            a_offdiag=req.a_offdiag,
            t_grid=req.t_grid,
            t_test=req.t_test,
            reps=req.reps,
            seed=req.seed,
            estimators=req.estimators,
        )
    except _CLIENT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    agg = result.aggregated()
    return schemas.SimulateResponse(
        records=[schemas.StudyCell(**r) for r in result.records],
        aggregated=[
            schemas.StudyAggregate(
                t_train=int(row.t_train),
                estimator=str(row.estimator),
                mean_log_score=float(row.mean_log_score),
                mean_rel_log_score=None
                if math.isnan(row.mean_rel_log_score)
                else float(row.mean_rel_log_score),
            )
            for row in agg.itertuples(index=False)
        ],
    )
