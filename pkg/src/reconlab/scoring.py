"""Probabilistic and point scores for base versus reconciled forecasts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from .matops import spd_cholesky

__all__ = [
    "GaussianForecast",
    "ScoreReport",
    "gaussian_logpdf",
    "log_score",
    "expected_sq_diff",
    "variogram_score",
    "rrmse",
    "rel_vs",
]


@dataclass(frozen=True)
class GaussianForecast:
    """Multivariate normal predictive distribution for one time step."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov must be {mean.size}x{mean.size}, got {cov.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def gaussian_logpdf(y, mean, cov) -> float:
    """Log density of the multivariate normal, via the Cholesky factor.

    The log-determinant comes from the factor diagonal; no explicit inverse
    is formed.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    mean = np.asarray(mean, dtype=float).reshape(-1)
    chol = spd_cholesky(np.asarray(cov, dtype=float))
    u = scipy.linalg.solve_triangular(chol, y - mean, lower=True, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (y.size * np.log(2.0 * np.pi) + logdet + float(u @ u))


def log_score(forecasts, obs) -> float:
    """Negative total predictive log density; lower is better.

    ``forecasts`` is a sequence of :class:`GaussianForecast`, one per row of
    ``obs``.  The relative log-score of two models is simply the difference
    of their values here.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    forecasts = list(forecasts)
    if len(forecasts) != obs.shape[0]:
        raise ValueError(
            f"{len(forecasts)} forecasts for {obs.shape[0]} observation rows"
        )
    return -sum(
        gaussian_logpdf(obs[t], f.mean, f.cov) for t, f in enumerate(forecasts)
    )


def expected_sq_diff(mean, cov) -> np.ndarray:
    """Matrix of ``E[(Y_i - Y_j)**2]`` under a Gaussian forecast.

    Closed form ``(mu_i - mu_j)**2 + sigma_ii + sigma_jj - 2 sigma_ij``.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    d = np.diag(cov)
    return (mean[:, None] - mean[None, :]) ** 2 + d[:, None] + d[None, :] - 2.0 * cov


def variogram_score(forecast: GaussianForecast, y, p: float = 2, weights=None) -> float:
    """Variogram score of order 2 against one observation vector.

    Sums ``w_ij * (|y_i - y_j|^2 - E|Y_i - Y_j|^2)^2`` over all ordered
    pairs.  Only ``p = 2`` is supported: that is the order with a Gaussian
    closed form for the expectation; other orders would need sampling.
    """
    if p != 2:
        raise ValueError("only order p = 2 is supported")
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != forecast.dim:
        raise ValueError(f"observation has dim {y.size}, forecast {forecast.dim}")
    if weights is None:
        w = np.ones((y.size, y.size))
    else:
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0.0):
            raise ValueError("variogram weights must be nonnegative")
    observed = (y[:, None] - y[None, :]) ** 2
    expected = expected_sq_diff(forecast.mean, forecast.cov)
    return float((w * (observed - expected) ** 2).sum())


def rrmse(base_errs, recon_errs) -> float:
    """Relative RMSE change in percent; negative means reconciliation helped."""
    base = np.asarray(base_errs, dtype=float)
    recon = np.asarray(recon_errs, dtype=float)
    rmse_base = float(np.sqrt(np.mean(base**2)))
    if rmse_base == 0.0:
        raise ValueError("base RMSE is zero; relative error undefined")
    rmse_recon = float(np.sqrt(np.mean(recon**2)))
    return (rmse_recon - rmse_base) / rmse_base * 100.0


def rel_vs(vs_model: float, vs_base: float) -> float:
    """Relative variogram score change in percent."""
    if vs_base == 0.0:
        raise ValueError("base variogram score is zero; relative score undefined")
    return (vs_model - vs_base) / vs_base * 100.0


@dataclass(frozen=True)
class ScoreReport:
    """Out-of-sample evaluation of base and reconciled forecasts.

    Point accuracy (RMSE, relative RMSE) is reported per node; the
    probabilistic scores evaluate the joint bottom-level distribution, one
    entry per requested variance kind, relative to the base forecasts.
    """

    node_labels: tuple[str, ...]
    rmse_base: tuple[float, ...]
    rmse_recon: tuple[float, ...]
    rrmse: tuple[float, ...]
    log_score_base: float
    log_scores: dict[str, float] = field(default_factory=dict)
    rel_log_scores: dict[str, float] = field(default_factory=dict)
    vs_base: float = float("nan")
    vs_scores: dict[str, float] = field(default_factory=dict)
    rel_vs_scores: dict[str, float] = field(default_factory=dict)
    n_obs: int = 0

    def to_dict(self) -> dict:
        return {
            "n_obs": self.n_obs,
            "nodes": list(self.node_labels),
            "rmse_base": list(self.rmse_base),
            "rmse_recon": list(self.rmse_recon),
            "rrmse": list(self.rrmse),
            "log_score_base": self.log_score_base,
            "log_scores": dict(self.log_scores),
            "rel_log_scores": dict(self.rel_log_scores),
            "vs_base": self.vs_base,
            "vs_scores": dict(self.vs_scores),
            "rel_vs_scores": dict(self.rel_vs_scores),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_frame(self) -> pd.DataFrame:
        """Metrics as rows, nodes as columns; joint scores in column 'bottom'."""
        cols = list(self.node_labels) + ["bottom"]
        rows = {}
        rows["RMSE_base"] = list(self.rmse_base) + [np.nan]
        rows["RMSE_reconciled"] = list(self.rmse_recon) + [np.nan]
        rows["RRMSE"] = list(self.rrmse) + [np.nan]
        blank = [np.nan] * len(self.node_labels)
        rows["LogS_base"] = blank + [self.log_score_base]
        for kind, val in self.rel_log_scores.items():
            rows[f"relLogS_{kind}"] = blank + [val]
        rows["Vs_base"] = blank + [self.vs_base]
        for kind, val in self.rel_vs_scores.items():
            rows[f"relVs_{kind}"] = blank + [val]
        return pd.DataFrame.from_dict(rows, orient="index", columns=cols)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, float_format="%.17g", index_label="metric")
