"""Simulation laboratory: VAR(1) ground truth, AR(1) base models, estimator race.

Replicates the synthetic study design end to end: simulate a stationary
vector AR(1) bottom level, aggregate it through a small structural
hierarchy, produce deliberately mis-specified univariate AR(1) base
forecasts per node, reconcile with the data-driven shrinkage intensity, and
compare forecast-variance estimators by out-of-sample log-score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .hierarchy import Hierarchy, build_structural
from .panel import ForecastPanel
from .reconcile import (
    fit_map,
    lambda_opt,
    map_priors,
    sample_cov_base,
    sigma_recon,
)
from .glm import build_design_shared
from .scoring import GaussianForecast, log_score
from .uncertainty import beta_cov_map, beta_cov_shared, forecast_cov

__all__ = [
    "Var1Config",
    "StudyResult",
    "study_hierarchy",
    "var1_simulate",
    "ar1_base_forecasts",
    "run_study",
    "ESTIMATORS",
]

ESTIMATORS = ("SHRINK", "SREML", "PAR", "BASE")
BURN_IN = 500


@dataclass(frozen=True)
class Var1Config:
    """Data-generating process and study dimensions.

    ``t_test=None`` means "same length as the training window", which is how
    the study grid is usually run.
    """

    A: np.ndarray
    sigma_eps: np.ndarray
    t_train: int = 120
    t_test: int | None = None
    seed: int = 0
    reps: int = 50

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float)
        s = np.asarray(self.sigma_eps, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("A must be square")
        if s.shape != a.shape:
            raise ValueError("sigma_eps must match A")
        rho = float(np.max(np.abs(np.linalg.eigvals(a))))
        if rho >= 1.0:
            raise ValueError(f"A is not stationary (spectral radius {rho:.3f})")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.t_train < 8:
            raise ValueError("training window too short")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "sigma_eps", s)

    @property
    def m(self) -> int:
        return self.A.shape[0]


def section5_config(
    m: int = 4,
    diag: float = 0.6,
    offdiag: float = 0.1,
    t_train: int = 120,
    t_test: int | None = None,
    seed: int = 0,
    reps: int = 50,
) -> Var1Config:
    """The standard study process: A_ii = 0.6, A_ij = 0.1, unit noise."""
    a = np.full((m, m), offdiag)
    np.fill_diagonal(a, diag)
    return Var1Config(
        A=a, sigma_eps=np.eye(m), t_train=t_train, t_test=t_test, seed=seed, reps=reps
    )


def study_hierarchy(m: int = 4) -> Hierarchy:
    """Total / two halves / bottom structural tree over ``m`` bottom series."""
    if m % 2 != 0 or m < 4:
        raise ValueError("study hierarchy needs an even bottom count >= 4")
    half = m // 2
    aggs = [range(m), range(half), range(half, m)]
    labels = [f"B{i + 1}" for i in range(m)]
    return build_structural(aggs, labels, aggregate_labels=["total", "half1", "half2"])


def var1_simulate(
    cfg: Var1Config,
    rep=0,
    n_steps: int | None = None,
    burn_in: int = BURN_IN,
) -> np.ndarray:
    """Simulate the bottom-level process; deterministic per (seed, rep).

    ``rep`` may be an int or a tuple of ints; either way the random stream
    is keyed by ``(seed, *rep)``, so replicates are independent and the grid
    is safe to evaluate in any order.  The first ``burn_in`` steps are
    discarded so the retained path starts from (approximately) the
    stationary distribution.
    """
    if n_steps is None:
        n_steps = cfg.t_train + (cfg.t_test or cfg.t_train)
    stream = (rep,) if np.isscalar(rep) else tuple(int(r) for r in rep)
    rng = np.random.default_rng([cfg.seed, *stream])
    m = cfg.m
    chol = np.linalg.cholesky(cfg.sigma_eps)
    eps = rng.standard_normal((burn_in + n_steps, m)) @ chol.T
    out = np.zeros((burn_in + n_steps, m))
    prev = np.zeros(m)
    for t in range(burn_in + n_steps):
        prev = cfg.A @ prev + eps[t]
        out[t] = prev
    return out[burn_in:]


def ar1_base_forecasts(
    series, fit_rows: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Univariate AR(1) fits per column and their one-step predictions.

    Coefficients (intercept, slope) come from least squares on the first
    ``fit_rows`` rows (all rows when omitted); predictions ``preds[t]``
    target ``series[t + 1]`` and always condition on the realized value at
    ``t``, so rows past the fit window are genuine out-of-sample one-step
    forecasts.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    t_total = x.shape[0]
    fit_rows = t_total if fit_rows is None else int(fit_rows)
    if fit_rows < 3 or fit_rows > t_total:
        raise ValueError("need at least 3 rows inside the fit window")
    coef = np.empty((x.shape[1], 2))
    for j in range(x.shape[1]):
        lag = x[: fit_rows - 1, j]
        if np.ptp(lag) == 0.0:
            raise ValueError(f"column {j} is constant over the fit window")
        design = np.column_stack([np.ones(fit_rows - 1), lag])
        coef[j], *_ = np.linalg.lstsq(design, x[1:fit_rows, j], rcond=None)
    preds = coef[:, 0][None, :] + x[:-1] * coef[:, 1][None, :]
    return coef, preds


def _replicate_scores(
    cfg: Var1Config,
    h: Hierarchy,
    t_train: int,
    t_test: int,
    rep,
    estimators,
) -> dict[str, float]:
    bottom = var1_simulate(cfg, rep=rep, n_steps=t_train + t_test)
    nodes = bottom @ h.S.T
    _, preds = ar1_base_forecasts(nodes, fit_rows=t_train)
    # preds[t] targets nodes[t + 1]; the first usable row is t = 0.
    t_eff = t_train - 1
    panel = ForecastPanel(Y=bottom[1:t_train], Yhat=preds[:t_eff])
    errors = nodes[1:t_train] - preds[:t_eff]
    lam = float(np.clip(lambda_opt(errors), 0.0, 1.0 - 1e-9))
    weights = fit_map(panel, h, lam)
    sigma_h = sample_cov_base(panel, h)
    shrink = sigma_recon(panel, h, weights, "SHRINK")
    sreml = sigma_recon(panel, h, weights, "SREML")
    x1 = build_design_shared(panel, h).X1
    if lam > 0.0:
        prior = map_priors(h, np.diag(sigma_h), lam, t_eff)
        bcov = beta_cov_map(x1, sreml, prior)
    else:
        bcov = beta_cov_shared(x1, sreml)

    yhat_test = preds[t_eff : t_eff + t_test]
    y_test = bottom[t_train : t_train + t_test]
    ytilde_test = yhat_test @ weights.P.T
    top = h.n - h.m
    x_rows = yhat_test[:, :top] - yhat_test[:, top:] @ h.S_T.T

    out = {}
    for est in estimators:
        if est == "BASE":
            # Reference benchmark: base forecasts scored with the observed
            # base-error covariance on the evaluation window, so the
            # reference carries no covariance estimation error.
            if t_test <= h.m:
                raise ValueError(
                    f"test window ({t_test}) too short for the observed base covariance"
                )
            base_err = y_test - yhat_test[:, top:]
            cov = base_err.T @ base_err / t_test
            fcs = [GaussianForecast(yhat_test[t, top:], cov) for t in range(t_test)]
            out[est] = log_score(fcs, y_test)
        elif est in ("SHRINK", "SREML"):
            cov = (shrink if est == "SHRINK" else sreml).value
            fcs = [GaussianForecast(ytilde_test[t], cov) for t in range(t_test)]
            out[est] = log_score(fcs, y_test)
        elif est == "PAR":
            fcs = [
                GaussianForecast(ytilde_test[t], forecast_cov(x_rows[t], bcov, sreml))
                for t in range(t_test)
            ]
            out[est] = log_score(fcs, y_test)
        else:
            raise ValueError(f"unknown estimator {est!r}")
    return out


@dataclass(frozen=True)
class StudyResult:
    """Per-replicate log-scores on a complete (T, rep, estimator) grid."""

    records: tuple[dict, ...]
    baseline: str = "SHRINK"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(list(self.records))

    def aggregated(self) -> pd.DataFrame:
        """Mean log-score and mean relative log-score (vs the baseline) per cell."""
        df = self.to_frame()
        if self.baseline in set(df["estimator"]):
            base = df[df["estimator"] == self.baseline][
                ["t_train", "rep", "log_score"]
            ].rename(columns={"log_score": "baseline_score"})
            df = df.merge(base, on=["t_train", "rep"], how="left")
            df["rel_log_score"] = df["log_score"] - df["baseline_score"]
        else:
            df["rel_log_score"] = np.nan
        agg = (
            df.groupby(["t_train", "estimator"], as_index=False)
            .agg(
                mean_log_score=("log_score", "mean"),
                mean_rel_log_score=("rel_log_score", "mean"),
            )
            .sort_values(["t_train", "estimator"], ignore_index=True)
        )
        return agg

    def to_csv(self, raw_path, aggregated_path=None) -> None:
        """Write the raw grid (columns T,rep,estimator,logscore) and the curves."""
        raw = self.to_frame().rename(columns={"t_train": "T", "log_score": "logscore"})
        raw.to_csv(raw_path, index=False, float_format="%.17g")
        if aggregated_path is not None:
            agg = self.aggregated().rename(
                columns={
                    "t_train": "T",
                    "mean_log_score": "mean_logscore",
                    "mean_rel_log_score": "mean_rel_logscore",
                }
            )
            agg.to_csv(aggregated_path, index=False, float_format="%.17g")


def run_study(
    cfg: Var1Config,
    t_grid,
    estimators=ESTIMATORS,
    hierarchy: Hierarchy | None = None,
) -> StudyResult:
    """Run the full estimator comparison over a grid of training lengths.

    Each replicate draws its own random stream keyed by ``(seed, T, rep)``,
    so the grid can be evaluated in any order (or in parallel) with
    unchanged results.
    """
    t_grid = [int(t) for t in t_grid]
    if not t_grid:
        raise ValueError("empty training-length grid")
    estimators = tuple(estimators)
    for est in estimators:
        if est not in ESTIMATORS:
            raise ValueError(f"unknown estimator {est!r}; choose from {ESTIMATORS}")
    h = hierarchy if hierarchy is not None else study_hierarchy(cfg.m)
    records = []
    for t_train in t_grid:
        t_test = cfg.t_test if cfg.t_test is not None else t_train
        for rep in range(cfg.reps):
            scores = _replicate_scores(
                cfg, h, t_train, t_test, rep=(t_train, rep), estimators=estimators
            )
            for est, val in scores.items():
                records.append(
                    {
                        "t_train": t_train,
                        "rep": rep,
                        "estimator": est,
                        "log_score": float(val),
                    }
                )
    return StudyResult(records=tuple(records))
