import numpy as np
import pytest

from reconlab.hierarchy import Hierarchy, build_temporal
from reconlab.panel import ForecastPanel


@pytest.fixture(scope="session")
def eq2() -> Hierarchy:
    """Annual / half-year / quarter hierarchy (n=7, m=4)."""
    return build_temporal(4, [4, 2, 1])


def make_panel(h: Hierarchy, t: int, rng: np.random.Generator) -> ForecastPanel:
    """Generic random panel; full-rank design almost surely."""
    return ForecastPanel(
        Y=rng.standard_normal((t, h.m)), Yhat=rng.standard_normal((t, h.n))
    )


def model_true_panel(
    h: Hierarchy,
    t: int,
    rng: np.random.Generator,
    beta: np.ndarray,
    sigma_chol: np.ndarray,
    yhat: np.ndarray | None = None,
) -> ForecastPanel:
    """Panel whose bottom observations follow the regression model exactly.

    ``Y = Yhat_B + X1 beta + E`` with ``E`` drawn with covariance
    ``sigma_chol @ sigma_chol.T``.  Pass ``yhat`` to keep the design fixed
    across replicates.
    """
    if yhat is None:
        yhat = rng.standard_normal((t, h.n))
    top = h.n - h.m
    x1 = yhat[:, :top] - yhat[:, top:] @ h.S_T.T
    noise = rng.standard_normal((t, h.m)) @ sigma_chol.T
    return ForecastPanel(Y=yhat[:, top:] + x1 @ beta + noise, Yhat=yhat)


def exact_p0() -> np.ndarray:
    """Closed-form weights for diag base variances [4,2,2,1,1,1,1] on eq2.

    Derived by eigendecomposition of S' D^-1 S: the all-ones direction has
    eigenvalue 3, the pair-contrast direction 2, the within-pair contrasts 1.
    """
    p = np.empty((4, 7))
    p[:, 0] = 1.0 / 12.0
    p[:, 1] = [5 / 24, 5 / 24, -1 / 24, -1 / 24]
    p[:, 2] = [-1 / 24, -1 / 24, 5 / 24, 5 / 24]
    bottom = np.full((4, 4), -1 / 24)
    bottom[:2, :2] = -7 / 24
    bottom[2:, 2:] = -7 / 24
    np.fill_diagonal(bottom, 17 / 24)
    p[:, 3:] = bottom
    return p


def printed_p0() -> np.ndarray:
    """The two-decimal weight matrix as published for the same setup."""
    return np.array(
        [
            [0.09, 0.20, -0.04, 0.72, -0.28, -0.05, -0.05],
            [0.09, 0.20, -0.04, -0.28, 0.72, -0.05, -0.05],
            [0.09, -0.04, 0.20, -0.05, -0.05, 0.72, -0.28],
            [0.09, -0.04, 0.20, -0.05, -0.05, -0.28, 0.72],
        ]
    )


def exact_sigma_beta_core() -> np.ndarray:
    """(Sigma_hT^d + S_T Sigma_hB^d S_T')^-1 for the same diagonal, by hand."""
    return np.array(
        [
            [1 / 6, -1 / 12, -1 / 12],
            [-1 / 12, 7 / 24, 1 / 24],
            [-1 / 12, 1 / 24, 7 / 24],
        ]
    )


def printed_sigma_beta_core() -> np.ndarray:
    return np.array(
        [[0.16, -0.08, -0.08], [-0.08, 0.28, 0.04], [-0.08, 0.04, 0.28]]
    )


def exact_psi_core() -> np.ndarray:
    """((Sigma_hB^d)^-1 + S_T'(Sigma_hT^d)^-1 S_T)^-1: same pattern as P0's bottom."""
    core = np.full((4, 4), -1 / 24)
    core[:2, :2] = -7 / 24
    core[2:, 2:] = -7 / 24
    np.fill_diagonal(core, 17 / 24)
    return core


def printed_psi() -> np.ndarray:
    return np.array(
        [
            [0.72, -0.28, -0.05, -0.05],
            [-0.28, 0.72, -0.05, -0.05],
            [-0.05, -0.05, 0.72, -0.28],
            [-0.05, -0.05, -0.28, 0.72],
        ]
    )


SECTION5_DIAG = np.array([4.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0])
