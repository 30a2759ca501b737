"""Reconciliation weight estimation and the reconciled-variance family.

The weight matrix ``P`` (m x n) maps base forecasts for all nodes to
reconciled bottom-level forecasts under the constraint ``P S = I``.  It can
be obtained as a trace-minimizing combination for a chosen base-error
covariance, as regression coefficients fitted to the bottom-level errors,
or as a posterior mode under shrinkage priors; the three routes agree, and
the tests lean on that equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .glm import SigmaR, build_design_shared, fit_shared, sigma_reml_shared
from .hierarchy import Hierarchy, coherency_gap
from .matops import inv_spd, solve_spd, symmetrize
from .panel import ForecastPanel

__all__ = [
    "ForecastPanel",
    "ReconWeights",
    "MapPrior",
    "sample_cov_base",
    "shrink_cov",
    "lambda_opt",
    "weights_mint",
    "weights_mint_direct",
    "fit_glm_recon",
    "map_priors",
    "fit_map",
    "sigma_recon",
    "reconcile_points",
]

VARIANCE_KINDS = ("ML", "REML", "MAP", "SHRINK", "SREML")


@dataclass(frozen=True)
class ReconWeights:
    """A fitted weight matrix with its provenance.

    ``beta_T`` is the free (n - m) x m block; the remaining entries of ``P``
    are its exact linear image through the coherency constraints.
    """

    P: np.ndarray
    hierarchy: Hierarchy
    lam: float
    sigma_kind: str
    coherency_tol: float = 1e-9

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        h = self.hierarchy
        if P.shape != (h.m, h.n):
            raise ValueError(f"P must be {h.m}x{h.n}, got {P.shape}")
        gap = coherency_gap(h, P)
        if gap > self.coherency_tol:
            raise ValueError(
                f"weights violate P S = I by {gap:.3e} (tol {self.coherency_tol:.1e})"
            )
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def beta_T(self) -> np.ndarray:
        """Free coefficient block: the top-weight columns of ``P``, transposed."""
        return self.P[:, : self.hierarchy.n - self.hierarchy.m].T

    @property
    def P_T(self) -> np.ndarray:
        return self.P[:, : self.hierarchy.n - self.hierarchy.m]

    @property
    def P_B(self) -> np.ndarray:
        return self.P[:, self.hierarchy.n - self.hierarchy.m :]


@dataclass(frozen=True)
class MapPrior:
    """Gaussian / inverse-Wishart prior parameters matching shrinkage level ``lam``."""

    beta0_T: np.ndarray
    sigma_beta0: np.ndarray
    psi: np.ndarray
    v: float
    lam: float


def sample_cov_base(panel: ForecastPanel, h: Hierarchy) -> np.ndarray:
    """Base-forecast error covariance ``(Y S' - Yhat)'(Y S' - Yhat) / T`` (n x n)."""
    err = panel.base_errors(h)
    return symmetrize(err.T @ err / panel.t_obs)


def shrink_cov(sigma_h, lam: float) -> np.ndarray:
    """Convex combination ``(1 - lam) * sigma + lam * diag(sigma)``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"shrinkage intensity must be in [0, 1], got {lam}")
    s = symmetrize(np.asarray(sigma_h, dtype=float))
    return (1.0 - lam) * s + lam * np.diag(np.diag(s))


def lambda_opt(errors) -> float:
    """Optimal correlation-shrinkage intensity from an error panel.

    Standardizes the columns, then returns
    ``sum_{i != j} var(r_ij) / sum_{i != j} r_ij**2`` clipped to [0, 1],
    with the unbiased small-sample factors of the corpcor estimator.  An
    exactly diagonal empirical correlation yields 1 (full weight on the
    diagonal target).
    """
    x = np.asarray(errors, dtype=float)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("need an error panel with at least 3 rows")
    t, n = x.shape
    xc = x - x.mean(axis=0)
    sd = xc.std(axis=0, ddof=1)
    if np.any(sd == 0.0):
        bad = sorted(int(i) for i in np.flatnonzero(sd == 0.0))
        raise ValueError(f"zero-variance columns {bad} in error panel")
    xs = xc / sd
    s1 = xs.T @ xs
    s2 = (xs**2).T @ (xs**2)
    var_r = t / (t - 1.0) ** 3 * (s2 - s1**2 / t)
    r = s1 / (t - 1.0)
    off = ~np.eye(n, dtype=bool)
    denom = float((r[off] ** 2).sum())
    if denom <= 0.0:
        return 1.0
    return float(np.clip(var_r[off].sum() / denom, 0.0, 1.0))


def _assemble_from_beta(
    h: Hierarchy, beta_t: np.ndarray, lam: float, sigma_kind: str
) -> ReconWeights:
    # P = [beta_T', I - beta_T' S_T]: the coherency constraints fill the bottom block.
    p = np.hstack([beta_t.T, np.eye(h.m) - beta_t.T @ h.S_T])
    return ReconWeights(P=p, hierarchy=h, lam=lam, sigma_kind=sigma_kind)


def weights_mint(
    h: Hierarchy, sigma, lam: float = 0.0, sigma_kind: str = "custom"
) -> ReconWeights:
    """Trace-minimizing weights for a base-error covariance ``sigma``.

    Computed through the constrained form ``J - J sigma U (U' sigma U)^-1 U'``
    which only ever inverts an (n - m) x (n - m) matrix; the direct
    ``(S' sigma^-1 S)^-1 S' sigma^-1`` expression is kept as a test oracle in
    :func:`weights_mint_direct`.
    """
    sigma = symmetrize(np.asarray(sigma, dtype=float))
    if sigma.shape != (h.n, h.n):
        raise ValueError(f"sigma must be {h.n}x{h.n}")
    u = np.vstack([np.eye(h.n - h.m), -h.S_T.T])
    # J sigma U needs only the bottom rows of sigma.
    j_sigma_u = sigma[h.n - h.m :, :] @ u
    ut_sigma_u = u.T @ sigma @ u
    p = np.zeros((h.m, h.n))
    p[:, h.n - h.m :] = np.eye(h.m)
    p -= j_sigma_u @ solve_spd(ut_sigma_u, u.T)
    return ReconWeights(P=p, hierarchy=h, lam=lam, sigma_kind=sigma_kind)


def weights_mint_direct(h: Hierarchy, sigma) -> np.ndarray:
    """Unconstrained-form weights ``(S' sigma^-1 S)^-1 S' sigma^-1`` (oracle path)."""
    sigma = symmetrize(np.asarray(sigma, dtype=float))
    sig_inv_s = solve_spd(sigma, h.S)
    return solve_spd(h.S.T @ sig_inv_s, sig_inv_s.T)


def fit_glm_recon(panel: ForecastPanel, h: Hierarchy) -> ReconWeights:
    """Weights as regression coefficients on the bottom-level base errors.

    Equivalent to :func:`weights_mint` with the sample base-error covariance;
    requires more observations than free coefficients per series.
    """
    panel.check_against(h)
    if panel.t_obs <= h.n - h.m:
        raise ValueError(
            f"need T > n - m for the regression fit, got T={panel.t_obs}, n-m={h.n - h.m}"
        )
    design = build_design_shared(panel, h)
    beta = fit_shared(design, panel.response(h))
    return _assemble_from_beta(h, beta.matrix, lam=0.0, sigma_kind="sample")


def map_priors(h: Hierarchy, sigma_h_diag, lam: float, t_obs: int) -> MapPrior:
    """Prior mean/covariance for the weights and the covariance prior scale.

    Only defined for 0 < lam < 1; at the ends the prior degenerates (no
    shrinkage, or infinite precision).
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"priors are defined for 0 < lam < 1, got {lam}")
    d = np.asarray(sigma_h_diag, dtype=float).reshape(-1)
    if d.size != h.n:
        raise ValueError(f"need {h.n} base-error variances, got {d.size}")
    if np.any(d <= 0.0):
        raise ValueError("base-error variances must be positive")
    d_top, d_bot = d[: h.n - h.m], d[h.n - h.m :]
    a = np.diag(d_top) + (h.S_T * d_bot) @ h.S_T.T
    beta0 = solve_spd(a, h.S_T * d_bot)
    sigma_beta0 = (1.0 - lam) / (lam * t_obs) * inv_spd(a)
    psi_core = inv_spd(np.diag(1.0 / d_bot) + h.S_T.T @ (h.S_T / d_top[:, None]))
    v = lam * t_obs / (1.0 - lam) - (h.n + 1)
    return MapPrior(
        beta0_T=beta0,
        sigma_beta0=sigma_beta0,
        psi=lam * t_obs / (1.0 - lam) * psi_core,
        v=v,
        lam=lam,
    )


def fit_map(panel: ForecastPanel, h: Hierarchy, lam: float) -> ReconWeights:
    """Posterior-mode weights under the shrinkage priors at intensity ``lam``.

    Independent of the error covariance, and identical to trace-minimizing
    weights computed from the shrunk base-error covariance.  ``lam = 0``
    falls back to the plain regression fit.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lam must be in [0, 1), got {lam}")
    if lam == 0.0:
        return fit_glm_recon(panel, h)
    panel.check_against(h)
    t = panel.t_obs
    d = np.diag(sample_cov_base(panel, h))
    d_top, d_bot = d[: h.n - h.m], d[h.n - h.m :]
    a = np.diag(d_top) + (h.S_T * d_bot) @ h.S_T.T
    x1 = build_design_shared(panel, h).X1
    lhs = (1.0 - lam) * (x1.T @ x1) + lam * t * a
    rhs = (1.0 - lam) * (x1.T @ panel.response(h)) + lam * t * (h.S_T * d_bot)
    beta_t = solve_spd(lhs, rhs)
    return _assemble_from_beta(h, beta_t, lam=lam, sigma_kind="shrink")


def sigma_recon(
    panel: ForecastPanel, h: Hierarchy, weights: ReconWeights, kind: str
) -> SigmaR:
    """Reconciled-error covariance estimate of the requested kind.

    ML/REML use the reconciliation residuals directly; SHRINK and SREML are
    the weight-sandwich forms ``P sigma_s P'`` (with the REML scale factor
    ``T / (T - (n - m)(1 - lam))``); MAP is the closed-form posterior mode
    under the weight prior alone.
    """
    kind = kind.upper()
    if kind not in VARIANCE_KINDS:
        raise ValueError(f"kind must be one of {VARIANCE_KINDS}, got {kind}")
    panel.check_against(h)
    t, n, m = panel.t_obs, h.n, h.m
    lam = weights.lam
    if kind in ("ML", "REML"):
        e = panel.Y - panel.Yhat @ weights.P.T
        if kind == "ML":
            return SigmaR(
                value=e.T @ e / t, kind="ML", t_obs=t, m_bottom=m, lam=lam, n_nodes=n
            )
        if t <= n - m:
            raise ValueError(f"REML needs T > n - m, got T={t}, n-m={n - m}")
        s = sigma_reml_shared(e, n - m, lam=lam)
        return SigmaR(
            value=s.value, kind="REML", t_obs=t, m_bottom=m, lam=lam, n_nodes=n
        )
    sigma_s = shrink_cov(sample_cov_base(panel, h), lam)
    sandwich = symmetrize(weights.P @ sigma_s @ weights.P.T)
    if kind == "SHRINK":
        value = sandwich
    elif kind == "SREML":
        denom = t - (n - m) * (1.0 - lam)
        if denom <= 0.0:
            raise ValueError(f"degenerate REML scale: T - (n-m)(1-lam) = {denom}")
        value = t / denom * sandwich
    else:  # MAP
        if lam >= 1.0:
            raise ValueError("MAP covariance is undefined at lam = 1")
        d = np.diag(sigma_s)  # shrinkage preserves the diagonal
        d_top, d_bot = d[: n - m], d[n - m :]
        core = inv_spd(np.diag(1.0 / d_bot) + h.S_T.T @ (h.S_T / d_top[:, None]))
        value = t / (1.0 - lam) / (t + n - m) * (sandwich - lam * core)
    return SigmaR(
        value=value, kind=kind, t_obs=t, m_bottom=m, lam=lam, n_nodes=n
    )


def reconcile_points(weights: ReconWeights, Yhat) -> tuple[np.ndarray, np.ndarray]:
    """Reconciled bottom forecasts ``Yhat P'`` and their full-node aggregation.

    The second return value ``Ytilde S'`` is coherent by construction.
    """
    Yhat = np.asarray(Yhat, dtype=float)
    h = weights.hierarchy
    if Yhat.ndim != 2 or Yhat.shape[1] != h.n:
        raise ValueError(f"Yhat must have {h.n} columns")
    ytilde = Yhat @ weights.P.T
    return ytilde, ytilde @ h.S.T
