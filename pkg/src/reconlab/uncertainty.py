"""Parameter, weight and forecast covariances, plus the test statistics.

Everything here rides on the coefficient covariance: for shared designs it
factors as ``sigma_r (x) (X1'X1)^-1`` and is kept in factored form; the
weight covariance is its exact image through the coherency constraints, and
the forecast covariance adds the parameter term to the residual covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .glm import DesignGeneral, SigmaR, _block_gram, _cross_products
from .hierarchy import Hierarchy, NodeSelection
from .matops import inv_spd, kron, symmetrize
from .panel import ForecastPanel
from .reconcile import MapPrior, ReconWeights, reconcile_points

__all__ = [
    "BetaCov",
    "WeightCov",
    "FTestResult",
    "SeparationRow",
    "SeparationTable",
    "beta_cov_shared",
    "beta_cov_general",
    "beta_cov_map",
    "weight_cov",
    "forecast_cov",
    "wald",
    "f_test",
    "separation_table",
]


@dataclass(frozen=True)
class BetaCov:
    """Covariance of the stacked coefficient vector, column-major layout.

    Shared and MAP flavors carry the Kronecker factors (``sigma_r`` across
    series, ``coef_factor`` across regressors) and materialize the full
    matrix only on demand; the general flavor stores it densely.
    """

    flavor: str
    sigma_r: np.ndarray | None = None
    coef_factor: np.ndarray | None = None
    dense: np.ndarray | None = None

    @property
    def p(self) -> int:
        if self.dense is not None:
            return self.dense.shape[0]
        return self.sigma_r.shape[0] * self.coef_factor.shape[0]

    def full(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        return kron(self.sigma_r, self.coef_factor)

    def diag(self) -> np.ndarray:
        if self.dense is not None:
            return np.diag(self.dense).copy()
        return np.kron(np.diag(self.sigma_r), np.diag(self.coef_factor))


def _sigma_value(sigma) -> np.ndarray:
    return sigma.value if isinstance(sigma, SigmaR) else np.asarray(sigma, dtype=float)


def beta_cov_shared(x1, sigma_r) -> BetaCov:
    """``sigma_r (x) (X1'X1)^-1`` for designs shared across series."""
    x1 = np.asarray(x1, dtype=float)
    return BetaCov(
        flavor="shared",
        sigma_r=_sigma_value(sigma_r),
        coef_factor=inv_spd(x1.T @ x1),
    )


def beta_cov_general(design: DesignGeneral, sigma_r) -> BetaCov:
    """Inverse block Gram matrix for general designs."""
    sigma_inv = inv_spd(_sigma_value(sigma_r))
    gram = _block_gram(design, sigma_inv, _cross_products(design))
    return BetaCov(flavor="general", dense=symmetrize(inv_spd(gram)))


def beta_cov_map(x1, sigma_r, prior: MapPrior, *, literal_sandwich: bool = False) -> BetaCov:
    """Sandwich covariance of the posterior-mode coefficients.

    The inner matrix is ``C (X1'X1) C`` with ``C = (X1'X1 + prior
    precision)^-1``; as the prior precision vanishes this reduces to the
    plain shared form, and as it explodes the covariance collapses to zero.
    ``literal_sandwich`` swaps the prior precision for the prior covariance
    (a published variant that does not have those limits) for comparison.
    """
    x1 = np.asarray(x1, dtype=float)
    gram = x1.T @ x1
    penalty = (
        np.asarray(prior.sigma_beta0, dtype=float)
        if literal_sandwich
        else inv_spd(prior.sigma_beta0)
    )
    c = inv_spd(gram + penalty)
    return BetaCov(
        flavor="map",
        sigma_r=_sigma_value(sigma_r),
        coef_factor=symmetrize(c @ gram @ c),
    )


@dataclass(frozen=True)
class WeightCov:
    """Covariance of ``vec(P')`` with per-entry standard errors.

    Entry ``(i, j)`` of ``P`` sits at flat index ``i * n + j``; constrained
    entries are exact linear images of the free block, so their rows and
    columns carry no extra randomness.
    """

    m: int
    n: int
    sigma_r: np.ndarray | None = None
    node_factor: np.ndarray | None = None
    dense: np.ndarray | None = None

    def full(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        return kron(self.sigma_r, self.node_factor)

    @property
    def se(self) -> np.ndarray:
        """m x n matrix of standard errors aligned with ``P``."""
        if self.dense is not None:
            d = np.diag(self.dense)
        else:
            d = np.kron(np.diag(self.sigma_r), np.diag(self.node_factor))
        return np.sqrt(np.maximum(d, 0.0)).reshape(self.m, self.n)

    def cov(self, i: int, j: int, k: int, l: int) -> float:
        """Covariance between weights ``P[i, j]`` and ``P[k, l]``."""
        if self.dense is not None:
            return float(self.dense[i * self.n + j, k * self.n + l])
        return float(self.sigma_r[i, k] * self.node_factor[j, l])

    def corr(self, i: int, j: int, k: int, l: int) -> float:
        den = np.sqrt(self.cov(i, j, i, j) * self.cov(k, l, k, l))
        if den == 0.0:
            raise ValueError("correlation undefined for a zero-variance weight")
        return self.cov(i, j, k, l) / den


def weight_cov(bcov: BetaCov, h: Hierarchy) -> WeightCov:
    """Push the coefficient covariance through ``P' = [0; I] - [I; S_T'] beta``."""
    r = np.vstack([np.eye(h.n - h.m), h.S_T.T])
    if bcov.dense is not None:
        t = kron(np.eye(h.m), r)
        return WeightCov(m=h.m, n=h.n, dense=symmetrize(t @ bcov.dense @ t.T))
    return WeightCov(
        m=h.m,
        n=h.n,
        sigma_r=bcov.sigma_r,
        node_factor=symmetrize(r @ bcov.coef_factor @ r.T),
    )


def forecast_cov(x_row, bcov: BetaCov, sigma_r) -> np.ndarray:
    """Forecast-error covariance including parameter uncertainty.

    ``x_row`` is the design row of the forecast being issued (1-d for shared
    designs, an m x p block design matrix otherwise); ``sigma_r`` is the
    residual covariance to add, normally the REML-scaled shrinkage estimate.
    The result dominates ``sigma_r`` in the positive-semidefinite order.
    """
    add = _sigma_value(sigma_r)
    x = np.asarray(x_row, dtype=float)
    if x.ndim == 1:
        if bcov.dense is not None:
            raise ValueError("1-d design rows require a Kronecker-form coefficient covariance")
        scale = float(x @ bcov.coef_factor @ x)
        return symmetrize(scale * bcov.sigma_r + add)
    return symmetrize(x @ bcov.full() @ x.T + add)


def wald(beta_t, bcov: BetaCov) -> np.ndarray:
    """Elementwise ``z = beta / se(beta)``, shaped like the coefficient matrix.

    The reference distribution is approximately standard normal; exact
    degrees of freedom are the caller's concern.
    """
    b = np.asarray(beta_t, dtype=float)
    var = bcov.diag()
    if np.any(var <= 0.0):
        raise ValueError("zero variance entries; Wald statistics undefined")
    return b / np.sqrt(var.reshape(b.shape, order="F"))


@dataclass(frozen=True)
class FTestResult:
    statistic: float
    df1: int
    df2: int
    nominal: bool = False


def f_test(
    panel: ForecastPanel,
    h: Hierarchy,
    weights: ReconWeights,
    selection: NodeSelection | None = None,
) -> FTestResult:
    """F statistic for "all free weights are zero" on a node selection.

    The ratio compares the explained sum of squares (reconciled minus base)
    to the residual sum of squares, each totalled over the selection, with
    n - m and T - n + m degrees of freedom.  Under a shrunk fit the
    orthogonality behind the reference distribution is lost and the result
    is flagged ``nominal``.
    """
    panel.check_against(h)
    t, n, m = panel.t_obs, h.n, h.m
    df1, df2 = n - m, t - n + m
    if df2 <= 0:
        raise ValueError(f"non-positive denominator degrees of freedom: {df2}")
    s_i = h.S if selection is None else selection.S_I
    idx = range(n) if selection is None else selection.indices
    ytilde, _ = reconcile_points(weights, panel.Yhat)
    yhat_i = panel.Yhat[:, list(idx)]
    num_rows = (ytilde @ s_i.T - yhat_i).sum(axis=1)
    den_rows = ((panel.Y - ytilde) @ s_i.T).sum(axis=1)
    num = float(num_rows @ num_rows) / df1
    den = float(den_rows @ den_rows) / df2
    if den == 0.0:
        raise ValueError("zero residual sum of squares; F undefined")
    return FTestResult(
        statistic=num / den, df1=df1, df2=df2, nominal=weights.lam != 0.0
    )


@dataclass(frozen=True)
class SeparationRow:
    label: str
    sse_base: float
    sse_recon: float
    sse_proj: float
    f_stat: float
    sse_recon_shrunk: float
    sse_proj_shrunk: float
    cross_term: float


@dataclass(frozen=True)
class SeparationTable:
    """Per-level variance separation with fixed column order.

    At ``lam = 0`` the first quadratic column equals the sum of the next two
    and the cross term vanishes; under shrinkage the cross term reports how
    far from orthogonal the fit is.
    """

    rows: tuple[SeparationRow, ...]
    df1: int
    df2: int
    lam: float

    COLUMNS = (
        "level",
        "sse_base",
        "sse_recon",
        "sse_proj",
        "f_stat",
        "sse_recon_shrunk",
        "sse_proj_shrunk",
        "cross_term",
    )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                (
                    r.label,
                    r.sse_base,
                    r.sse_recon,
                    r.sse_proj,
                    r.f_stat,
                    r.sse_recon_shrunk,
                    r.sse_proj_shrunk,
                    r.cross_term,
                )
                for r in self.rows
            ],
            columns=list(self.COLUMNS),
        )

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def separation_table(
    panel: ForecastPanel,
    h: Hierarchy,
    weights_plain: ReconWeights,
    weights_shrunk: ReconWeights,
    level_groups=None,
) -> SeparationTable:
    """Quadratic decomposition per hierarchy level plus a Total row.

    ``weights_plain`` must be an unshrunk fit (it provides the orthogonal
    projection and the F statistics); ``weights_shrunk`` provides the last
    three columns.
    """
    panel.check_against(h)
    t = panel.t_obs
    groups = list(level_groups if level_groups is not None else h.level_groups)
    groups.append(("Total", tuple(range(h.n))))
    ytilde, _ = reconcile_points(weights_plain, panel.Yhat)
    ytilde_s, _ = reconcile_points(weights_shrunk, panel.Yhat)
    rows = []
    f_all = None
    for label, idx in groups:
        idx = list(idx)
        s_i = h.S[idx]
        yhat_i = panel.Yhat[:, idx]
        actual_i = panel.Y @ s_i.T
        recon_i = ytilde @ s_i.T
        recon_s_i = ytilde_s @ s_i.T
        sel = NodeSelection(
            indices=tuple(idx), S_I=s_i, labels=tuple(h.labels[i] for i in idx)
        )
        f_res = f_test(panel, h, weights_plain, sel)
        if label == "Total":
            f_all = f_res
        rows.append(
            SeparationRow(
                label=label,
                sse_base=float(((actual_i - yhat_i) ** 2).sum()) / t,
                sse_recon=float(((actual_i - recon_i) ** 2).sum()) / t,
                sse_proj=float(((recon_i - yhat_i) ** 2).sum()) / t,
                f_stat=f_res.statistic,
                sse_recon_shrunk=float(((actual_i - recon_s_i) ** 2).sum()) / t,
                sse_proj_shrunk=float(((recon_s_i - yhat_i) ** 2).sum()) / t,
                cross_term=2.0
                * float(((actual_i - recon_s_i) * (recon_s_i - yhat_i)).sum())
                / t,
            )
        )
    return SeparationTable(
        rows=tuple(rows), df1=f_all.df1, df2=f_all.df2, lam=weights_shrunk.lam
    )
