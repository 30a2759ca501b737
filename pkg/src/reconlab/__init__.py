"""Forecast reconciliation with uncertainty quantification.

Core pieces: hierarchy construction (:mod:`reconlab.hierarchy`), the
regression engine (:mod:`reconlab.glm`), weight estimation in its plain,
shrinkage and posterior-mode guises (:mod:`reconlab.reconcile`), parameter
and forecast covariances with test statistics (:mod:`reconlab.uncertainty`),
probabilistic scoring (:mod:`reconlab.scoring`) and a simulation laboratory
(:mod:`reconlab.simlab`).  A FastAPI service (:mod:`reconlab.service`) and a
CLI (:mod:`reconlab.cli`) wrap the same runner layer.
"""

from .hierarchy import (
    Hierarchy,
    NodeSelection,
    build_structural,
    build_temporal,
    check_coherency,
    select,
)
from .panel import ForecastPanel
from .reconcile import (
    MapPrior,
    ReconWeights,
    fit_glm_recon,
    fit_map,
    lambda_opt,
    map_priors,
    reconcile_points,
    sample_cov_base,
    shrink_cov,
    sigma_recon,
    weights_mint,
)
from .scoring import GaussianForecast, ScoreReport, log_score, rel_vs, rrmse, variogram_score
from .simlab import StudyResult, Var1Config, run_study, var1_simulate
from .uncertainty import (
    BetaCov,
    SeparationTable,
    WeightCov,
    beta_cov_general,
    beta_cov_map,
    beta_cov_shared,
    f_test,
    forecast_cov,
    separation_table,
    wald,
    weight_cov,
)

__version__ = "0.1.0"

__all__ = [
    "Hierarchy",
    "NodeSelection",
    "build_temporal",
    "build_structural",
    "select",
    "check_coherency",
    "ForecastPanel",
    "ReconWeights",
    "MapPrior",
    "sample_cov_base",
    "shrink_cov",
    "lambda_opt",
    "weights_mint",
    "fit_glm_recon",
    "map_priors",
    "fit_map",
    "sigma_recon",
    "reconcile_points",
    "BetaCov",
    "WeightCov",
    "SeparationTable",
    "beta_cov_shared",
    "beta_cov_general",
    "beta_cov_map",
    "weight_cov",
    "forecast_cov",
    "wald",
    "f_test",
    "separation_table",
    "GaussianForecast",
    "ScoreReport",
    "log_score",
    "variogram_score",
    "rrmse",
    "rel_vs",
    "Var1Config",
    "StudyResult",
    "var1_simulate",
    "run_study",
]
