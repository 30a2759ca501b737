"""Mean and covariance estimation for the multivariate regression engine.

The regression couples the m bottom-level responses at each time step through
a shared error covariance.  Two design layouts are supported: the *shared*
layout, where every response uses the same regressor row (ordinary least
squares then solves everything at once and the coefficients do not depend on
the error covariance), and the *general* layout with per-response regressor
blocks, solved through the dense block normal equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .hierarchy import Hierarchy
from .matops import NotPositiveDefiniteError, inv_spd, solve_spd, symmetrize
from .panel import ForecastPanel

__all__ = [
    "DesignShared",
    "DesignGeneral",
    "BetaEstimate",
    "SigmaR",
    "RankDeficientError",
    "ConvergenceError",
    "build_design_shared",
    "fit_shared",
    "fit_general",
    "residuals",
    "sigma_ml",
    "sigma_reml_shared",
    "sigma_reml_general",
    "relaxation_fit",
]


class RankDeficientError(ValueError):
    """Design matrix (or block Gram system) does not have full column rank."""


class ConvergenceError(RuntimeError):
    """Iterative estimation failed to converge; ``last`` holds the final iterate."""

    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True)
class DesignShared:
    """One regressor matrix reused by all m responses.

    Row t of ``X1`` is the top-level base forecast minus the aggregated
    bottom-level base forecast at time t (plus a leading 1 when the bias
    correction is on).
    """

    X1: np.ndarray
    m: int
    intercept: bool = False

    @property
    def t_obs(self) -> int:
        return self.X1.shape[0]

    @property
    def pbar(self) -> int:
        return self.X1.shape[1]

    def as_general(self) -> "DesignGeneral":
        return DesignGeneral(blocks=(self.X1,) * self.m)


@dataclass(frozen=True)
class DesignGeneral:
    """Per-response regressor blocks ``X_i`` (each T x p_i)."""

    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=float) for b in self.blocks)
        if not blocks:
            raise ValueError("need at least one block")
        t = blocks[0].shape[0]
        for i, b in enumerate(blocks):
            if b.ndim != 2 or b.shape[0] != t:
                raise ValueError(f"block {i} must be 2-d with {t} rows")
        object.__setattr__(self, "blocks", blocks)

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def t_obs(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(b.shape[1] for b in self.blocks)

    @property
    def p_total(self) -> int:
        return sum(self.sizes)

    def offsets(self) -> tuple[slice, ...]:
        """Index ranges of each block's coefficients in the stacked vector."""
        out, start = [], 0
        for p in self.sizes:
            out.append(slice(start, start + p))
            start += p
        return tuple(out)


@dataclass(frozen=True)
class BetaEstimate:
    """Fitted mean-value coefficients.

    For shared layouts ``matrix`` is pbar x m with one column per bottom
    series; column-stacking it reproduces the stacked coefficient vector.
    General layouts keep per-series coefficient blocks.
    """

    layout: str
    matrix: np.ndarray | None = None
    blocks: tuple[np.ndarray, ...] | None = None

    def stacked(self) -> np.ndarray:
        if self.layout == "shared":
            return self.matrix.reshape(-1, order="F")
        return np.concatenate(self.blocks)

    def column(self, i: int) -> np.ndarray:
        if self.layout == "shared":
            return self.matrix[:, i]
        return self.blocks[i]


@dataclass(frozen=True)
class SigmaR:
    """A bottom-level error covariance estimate plus the bookkeeping behind it."""

    value: np.ndarray
    kind: str
    t_obs: int
    m_bottom: int
    lam: float | None = None
    n_nodes: int | None = None

    def __post_init__(self):
        v = symmetrize(np.asarray(self.value, dtype=float))
        v.setflags(write=False)
        object.__setattr__(self, "value", v)


def build_design_shared(
    panel: ForecastPanel, h: Hierarchy, intercept: bool = False
) -> DesignShared:
    """Shared design rows ``yhat_T - S_T yhat_B`` from a forecast panel."""
    x1 = panel.yhat_top(h) - panel.yhat_bottom(h) @ h.S_T.T
    if intercept:
        x1 = np.column_stack([np.ones(x1.shape[0]), x1])
    return DesignShared(X1=x1, m=h.m, intercept=intercept)


def _check_rank(x1: np.ndarray, rel_tol: float = 1e-10) -> None:
    sv = np.linalg.svd(x1, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0 or sv[-1] <= rel_tol * sv[0]:
        _, r, piv = scipy.linalg.qr(x1, mode="economic", pivoting=True)
        d = np.abs(np.diag(r))
        keep = int(np.sum(d > rel_tol * (d.max() if d.size else 0.0)))
        bad = sorted(int(j) for j in piv[keep:])
        raise RankDeficientError(
            f"design matrix is rank deficient; offending columns {bad}"
        )


def fit_shared(design: DesignShared, Z) -> BetaEstimate:
    """Least-squares coefficients ``(X1'X1)^-1 X1'Z``, one column per series.

    The result is the same for any error covariance, so none is taken.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != design.t_obs:
        raise ValueError(f"response must be {design.t_obs} x m")
    _check_rank(design.X1)
    gram = design.X1.T @ design.X1
    beta = solve_spd(gram, design.X1.T @ Z)
    return BetaEstimate(layout="shared", matrix=np.atleast_2d(beta))


def _sigma_value(sigma) -> np.ndarray:
    return sigma.value if isinstance(sigma, SigmaR) else np.asarray(sigma, dtype=float)


def _cross_products(design: DesignGeneral) -> dict[tuple[int, int], np.ndarray]:
    cp = {}
    for i, xi in enumerate(design.blocks):
        for j in range(i, design.m):
            cp[(i, j)] = xi.T @ design.blocks[j]
    return cp


def _block_gram(
    design: DesignGeneral,
    sigma_inv: np.ndarray,
    cp: dict[tuple[int, int], np.ndarray],
) -> np.ndarray:
    sl = design.offsets()
    g = np.empty((design.p_total, design.p_total))
    for i in range(design.m):
        for j in range(i, design.m):
            block = sigma_inv[i, j] * cp[(i, j)]
            g[sl[i], sl[j]] = block
            if i != j:
                g[sl[j], sl[i]] = block.T
    return g


def fit_general(design: DesignGeneral, Z, sigma_r) -> BetaEstimate:
    """Generalized least squares through the dense block normal equations.

    The T*m x T*m error covariance is never materialized: the Gram matrix is
    assembled block-wise from ``sigma_inv[i, j] * X_i'X_j`` and the right-hand
    side from ``X_i' (Z sigma_inv)[:, i]``.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (design.t_obs, design.m):
        raise ValueError(f"response must be {design.t_obs} x {design.m}")
    sigma = _sigma_value(sigma_r)
    sigma_inv = inv_spd(sigma)
    cp = _cross_products(design)
    gram = _block_gram(design, sigma_inv, cp)
    zw = Z @ sigma_inv
    rhs = np.concatenate(
        [design.blocks[i].T @ zw[:, i] for i in range(design.m)]
    )
    try:
        coef = solve_spd(gram, rhs)
    except NotPositiveDefiniteError as exc:
        raise RankDeficientError(f"block Gram matrix is singular: {exc}") from exc
    sl = design.offsets()
    return BetaEstimate(layout="general", blocks=tuple(coef[s] for s in sl))


def residuals(design, Z, beta: BetaEstimate) -> np.ndarray:
    """Per-time residual matrix ``E`` (T x m)."""
    Z = np.asarray(Z, dtype=float)
    if isinstance(design, DesignShared):
        return Z - design.X1 @ beta.matrix
    fitted = np.column_stack(
        [design.blocks[i] @ beta.column(i) for i in range(design.m)]
    )
    return Z - fitted


def sigma_ml(resid, lam: float | None = None) -> SigmaR:
    """Maximum-likelihood covariance ``E'E / T`` for fixed coefficients."""
    e = np.asarray(resid, dtype=float)
    t = e.shape[0]
    if t < 1:
        raise ValueError("need at least one residual row")
    return SigmaR(value=(e.T @ e) / t, kind="ML", t_obs=t, m_bottom=e.shape[1], lam=lam)


def sigma_reml_shared(resid, pbar: int, lam: float | None = None) -> SigmaR:
    """Restricted-likelihood covariance ``E'E / (T - pbar)`` for shared designs.

    ``pbar`` is the number of regressors every series shares; for the
    coherency-constrained reconciliation design it equals n - m (plus one
    with the bias correction on).
    """
    e = np.asarray(resid, dtype=float)
    t = e.shape[0]
    if t <= pbar:
        raise ValueError(f"need T > pbar for REML, got T={t}, pbar={pbar}")
    return SigmaR(
        value=(e.T @ e) / (t - pbar),
        kind="REML",
        t_obs=t,
        m_bottom=e.shape[1],
        lam=lam,
    )


def _reml_correction(
    design: DesignGeneral,
    sigma: np.ndarray,
    cp: dict[tuple[int, int], np.ndarray],
) -> np.ndarray:
    """Matrix of ``tr(Gram^-1[I_j, I_i] X_i'X_j)`` terms, the REML adjustment."""
    sigma_inv = inv_spd(sigma)
    gram = _block_gram(design, sigma_inv, cp)
    gram_inv = inv_spd(gram)
    sl = design.offsets()
    corr = np.empty((design.m, design.m))
    for i in range(design.m):
        for j in range(i, design.m):
            cij = cp[(i, j)]
            val = float(np.sum(gram_inv[sl[j], sl[i]] * cij.T))
            corr[i, j] = val
            corr[j, i] = val
    return corr


def sigma_reml_general(
    design: DesignGeneral,
    resid,
    *,
    tol: float = 1e-8,
    max_iter: int = 200,
    init=None,
) -> SigmaR:
    """REML covariance for general designs via its fixed-point equation.

    Iterates ``sigma <- (E'E + correction(sigma)) / T`` until successive
    iterates differ by less than ``tol`` in max-norm.  A half-step damping
    kicks in when the update direction starts flip-flopping.
    """
    e = np.asarray(resid, dtype=float)
    t = e.shape[0]
    ete = e.T @ e
    cp = _cross_products(design)
    sigma = symmetrize(np.asarray(init, dtype=float)) if init is not None else ete / t
    prev_step = None
    for _ in range(max_iter):
        update = symmetrize((ete + _reml_correction(design, sigma, cp)) / t)
        step = update - sigma
        if prev_step is not None:
            k = np.unravel_index(np.argmax(np.abs(step)), step.shape)
            if step[k] * prev_step[k] < 0.0:
                update = 0.5 * sigma + 0.5 * update
                step = update - sigma
        delta = float(np.abs(step).max())
        sigma, prev_step = update, step
        if delta < tol:
            return SigmaR(value=sigma, kind="REML", t_obs=t, m_bottom=design.m)
    raise ConvergenceError(
        f"REML fixed point did not converge in {max_iter} iterations", last=sigma
    )


def _loglik(sigma: np.ndarray, resid: np.ndarray) -> float:
    t = resid.shape[0]
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        return -np.inf
    quad = float(np.sum(resid * solve_spd(sigma, resid.T).T))
    return -0.5 * t * logdet - 0.5 * quad


def _restricted_loglik(
    design: DesignGeneral, sigma: np.ndarray, resid: np.ndarray
) -> float:
    cp = _cross_products(design)
    gram = _block_gram(design, inv_spd(sigma), cp)
    sign, logdet_gram = np.linalg.slogdet(gram)
    if sign <= 0:
        return -np.inf
    return _loglik(sigma, resid) - 0.5 * logdet_gram


def relaxation_fit(
    design: DesignGeneral,
    Z,
    mode: str = "REML",
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
):
    """Alternate coefficient and covariance estimation until both settle.

    Returns ``(beta, sigma, info)`` where ``info`` carries the iteration
    count and the objective path (log-likelihood for ML, restricted
    log-likelihood for REML), which is non-decreasing for ML.
    """
    if mode not in ("ML", "REML"):
        raise ValueError("mode must be 'ML' or 'REML'")
    Z = np.asarray(Z, dtype=float)
    if design.t_obs <= max(design.sizes):
        raise ValueError("need more observations than the widest block")
    z_scale = max(1.0, float(np.abs(Z).max()) ** 2)
    sigma = np.eye(design.m)
    beta_prev = None
    path = []
    for it in range(1, max_iter + 1):
        beta = fit_general(design, Z, sigma)
        e = residuals(design, Z, beta)
        if float(np.abs(e.T @ e).max()) <= 1e-20 * z_scale:
            raise NotPositiveDefiniteError(
                "residual covariance collapsed to zero; the data are fit exactly"
            )
        if mode == "ML":
            sigma_new = sigma_ml(e).value
            path.append(_loglik(sigma_new, e))
        else:
            sigma_new = sigma_reml_general(design, e, tol=tol, init=sigma).value
            path.append(_restricted_loglik(design, sigma_new, e))
        d_sigma = np.abs(sigma_new - sigma).max() / max(1.0, np.abs(sigma).max())
        d_beta = np.inf
        if beta_prev is not None:
            cur, old = beta.stacked(), beta_prev.stacked()
            d_beta = np.abs(cur - old).max() / max(1.0, np.abs(old).max())
        sigma, beta_prev = sigma_new, beta
        if d_sigma < tol and d_beta < tol:
            info = {"n_iter": it, "objective_path": tuple(path), "mode": mode}
            return beta, SigmaR(
                value=sigma, kind=mode, t_obs=design.t_obs, m_bottom=design.m
            ), info
    raise ConvergenceError(
        f"relaxation did not converge in {max_iter} iterations", last=(beta_prev, sigma)
    )
