"""Orchestration shared by the CLI and the HTTP service.

Each ``run_*`` function takes plain domain objects and returns a result
object that knows how to serialize itself; the CLI maps files onto these
calls and the service maps request models onto them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .glm import SigmaR, build_design_shared
from .hierarchy import Hierarchy, coherency_gap
from .panel import ForecastPanel
from .reconcile import (
    VARIANCE_KINDS,
    ReconWeights,
    fit_glm_recon,
    fit_map,
    lambda_opt,
    map_priors,
    sample_cov_base,
    sigma_recon,
)
from .scoring import GaussianForecast, ScoreReport, log_score, rel_vs, variogram_score
from .simlab import StudyResult, Var1Config, run_study, section5_config
from .uncertainty import (
    FTestResult,
    SeparationTable,
    beta_cov_map,
    beta_cov_shared,
    f_test,
    forecast_cov,
    separation_table,
    weight_cov,
)

__all__ = [
    "FitResult",
    "resolve_lambda",
    "run_fit",
    "run_anova",
    "run_score",
    "run_simulate",
    "REQUESTABLE_KINDS",
]

#: Variance kinds a caller may request; PAR is the forecast covariance with
#: the parameter-uncertainty term evaluated at a design row.
REQUESTABLE_KINDS = VARIANCE_KINDS + ("PAR",)
DEFAULT_KINDS = ("REML", "SHRINK", "SREML")
LAMBDA_CAP = 1.0 - 1e-9


def resolve_lambda(panel: ForecastPanel, h: Hierarchy, lam) -> float:
    """Turn a lambda request ('auto' or a number) into a usable intensity."""
    if isinstance(lam, str):
        if lam != "auto":
            raise ValueError(f"lambda must be a number or 'auto', got {lam!r}")
        return float(np.clip(lambda_opt(panel.base_errors(h)), 0.0, LAMBDA_CAP))
    lam = float(lam)
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must be in [0, 1), got {lam}")
    return lam


def _normalize_kinds(kinds) -> tuple[str, ...]:
    out = []
    for k in kinds:
        ku = str(k).upper()
        if ku not in REQUESTABLE_KINDS:
            raise ValueError(f"unknown variance kind {k!r}; choose from {REQUESTABLE_KINDS}")
        if ku not in out:
            out.append(ku)
    return tuple(out)


def _fit_weights(panel: ForecastPanel, h: Hierarchy, lam: float) -> ReconWeights:
    return fit_map(panel, h, lam) if lam > 0.0 else fit_glm_recon(panel, h)


def _beta_cov(panel, h, lam, sigma: SigmaR):
    x1 = build_design_shared(panel, h).X1
    if lam > 0.0:
        prior = map_priors(h, np.diag(sample_cov_base(panel, h)), lam, panel.t_obs)
        return beta_cov_map(x1, sigma, prior)
    return beta_cov_shared(x1, sigma)


@dataclass(frozen=True)
class FitResult:
    weights: ReconWeights
    weights_se: np.ndarray
    sigmas: dict[str, SigmaR]
    lam: float
    f_overall: FTestResult
    par_row: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        h = self.weights.hierarchy
        return {
            "lambda": self.lam,
            "dims": {"t": self.diagnostics.get("t_obs"), "n": h.n, "m": h.m},
            "labels": list(h.labels),
            "weights": self.weights.P.tolist(),
            "weights_se": self.weights_se.tolist(),
            "sigmas": {k: s.value.tolist() for k, s in self.sigmas.items()},
            "f_test": {
                "statistic": self.f_overall.statistic,
                "df1": self.f_overall.df1,
                "df2": self.f_overall.df2,
                "nominal": self.f_overall.nominal,
            },
            "par_row": self.par_row,
            "diagnostics": self.diagnostics,
        }


def run_fit(
    h: Hierarchy,
    panel: ForecastPanel,
    lam="auto",
    kinds=DEFAULT_KINDS,
    coherency_tol: float = 1e-9,
) -> FitResult:
    """Fit weights, their standard errors and the requested covariances.

    The PAR covariance depends on a forecast design row; in a batch fit it
    is evaluated at the most recent base-forecast row, recorded in the
    result.
    """
    panel.check_against(h)
    lam_val = resolve_lambda(panel, h, lam)
    kinds = _normalize_kinds(kinds)
    weights = _fit_weights(panel, h, lam_val)
    sreml = sigma_recon(panel, h, weights, "SREML")
    bcov = _beta_cov(panel, h, lam_val, sreml)
    se = weight_cov(bcov, h).se
    sigmas: dict[str, SigmaR] = {}
    par_row = None
    for kind in kinds:
        if kind == "PAR":
            par_row = panel.t_obs - 1
            yhat_t = panel.yhat_top(h)[par_row]
            yhat_b = panel.yhat_bottom(h)[par_row]
            value = forecast_cov(yhat_t - h.S_T @ yhat_b, bcov, sreml)
            sigmas[kind] = SigmaR(
                value=value,
                kind="PAR",
                t_obs=panel.t_obs,
                m_bottom=h.m,
                lam=lam_val,
                n_nodes=h.n,
            )
        else:
            sigmas[kind] = sigma_recon(panel, h, weights, kind)
    f_overall = f_test(panel, h, weights)
    gap = coherency_gap(h, weights.P)
    if gap > coherency_tol:
        raise ValueError(f"fitted weights violate coherency by {gap:.3e}")
    return FitResult(
        weights=weights,
        weights_se=se,
        sigmas=sigmas,
        lam=lam_val,
        f_overall=f_overall,
        par_row=par_row,
        diagnostics={"t_obs": panel.t_obs, "coherency_gap": gap},
    )


def run_anova(h: Hierarchy, panel: ForecastPanel, lam="auto") -> SeparationTable:
    """Variance-separation table from the plain fit plus a shrunk fit."""
    panel.check_against(h)
    lam_val = resolve_lambda(panel, h, lam)
    plain = fit_glm_recon(panel, h)
    shrunk = _fit_weights(panel, h, lam_val) if lam_val > 0.0 else plain
    return separation_table(panel, h, plain, shrunk)


def run_score(
    h: Hierarchy,
    train: ForecastPanel,
    test: ForecastPanel,
    lam="auto",
    kinds=DEFAULT_KINDS,
) -> ScoreReport:
    """Fit on the training panel, evaluate base vs reconciled on the test panel."""
    train.check_against(h)
    test.check_against(h)
    lam_val = resolve_lambda(train, h, lam)
    kinds = _normalize_kinds(kinds)
    weights = _fit_weights(train, h, lam_val)
    sreml = sigma_recon(train, h, weights, "SREML")
    bcov = _beta_cov(train, h, lam_val, sreml)
    top = h.n - h.m

    ytilde = test.Yhat @ weights.P.T
    ytilde_full = ytilde @ h.S.T
    actual_full = test.Y @ h.S.T
    base_err = actual_full - test.Yhat
    recon_err = actual_full - ytilde_full
    rmse_base = np.sqrt((base_err**2).mean(axis=0))
    rmse_recon = np.sqrt((recon_err**2).mean(axis=0))
    if np.any(rmse_base == 0.0):
        raise ValueError("a node has zero base RMSE; relative scores undefined")
    rrmse_nodes = (rmse_recon - rmse_base) / rmse_base * 100.0

    # The base model is the reference: its forecasts are scored with the
    # observed base-error covariance on the evaluation window, so the
    # reference carries no covariance estimation error.
    base_err_bottom = test.Y - test.Yhat[:, top:]
    base_cov = base_err_bottom.T @ base_err_bottom / test.t_obs
    base_fc = [GaussianForecast(test.Yhat[t, top:], base_cov) for t in range(test.t_obs)]
    log_base = log_score(base_fc, test.Y)
    vs_base = sum(
        variogram_score(fc, test.Y[t]) for t, fc in enumerate(base_fc)
    )

    covs: dict[str, list[np.ndarray]] = {}
    for kind in kinds:
        if kind == "PAR":
            x_rows = test.yhat_top(h) - test.yhat_bottom(h) @ h.S_T.T
            covs[kind] = [forecast_cov(x_rows[t], bcov, sreml) for t in range(test.t_obs)]
        else:
            value = sigma_recon(train, h, weights, kind).value
            covs[kind] = [value] * test.t_obs

    logs, rels, vss, relvss = {}, {}, {}, {}
    for kind, cov_list in covs.items():
        fcs = [GaussianForecast(ytilde[t], cov_list[t]) for t in range(test.t_obs)]
        logs[kind] = log_score(fcs, test.Y)
        rels[kind] = logs[kind] - log_base
        vss[kind] = sum(variogram_score(fc, test.Y[t]) for t, fc in enumerate(fcs))
        relvss[kind] = rel_vs(vss[kind], vs_base)

    return ScoreReport(
        node_labels=h.labels,
        rmse_base=tuple(float(v) for v in rmse_base),
        rmse_recon=tuple(float(v) for v in rmse_recon),
        rrmse=tuple(float(v) for v in rrmse_nodes),
        log_score_base=float(log_base),
        log_scores={k: float(v) for k, v in logs.items()},
        rel_log_scores={k: float(v) for k, v in rels.items()},
        vs_base=float(vs_base),
        vs_scores={k: float(v) for k, v in vss.items()},
        rel_vs_scores={k: float(v) for k, v in relvss.items()},
        n_obs=test.t_obs,
    )


def run_simulate(
    m: int = 4,
    a_diag: float = 0.6,
    a_offdiag: float = 0.1,
    t_grid=(120,),
    t_test: int | None = None,
    reps: int = 50,
    seed: int = 0,
    estimators=("SHRINK", "SREML", "PAR", "BASE"),
) -> StudyResult:
    """Run the simulation study from plain config values."""
    cfg: Var1Config = section5_config(
        m=m,
        diag=a_diag,
        offdiag=a_offdiag,
        t_train=int(min(t_grid)),
        t_test=t_test,
        seed=seed,
        reps=reps,
    )
    return run_study(cfg, t_grid, estimators=[str(e).upper() for e in estimators])
