import numpy as np
import pytest
import scipy.stats

from reconlab.glm import (
    ConvergenceError,
    DesignGeneral,
    DesignShared,
    RankDeficientError,
    build_design_shared,
    fit_general,
    fit_shared,
    relaxation_fit,
    residuals,
    sigma_ml,
    sigma_reml_general,
    sigma_reml_shared,
)
from reconlab.matops import NotPositiveDefiniteError
from reconlab.panel import ForecastPanel

from conftest import make_panel, model_true_panel


def random_spd(rng, k):
    a = rng.standard_normal((k, k))
    return a @ a.T + k * np.eye(k)


# ---------------------------------------------------------------- designs


def test_design_zero_for_coherent_base(eq2):
    rng = np.random.default_rng(0)
    bottom = rng.standard_normal((10, 4))
    panel = ForecastPanel(Y=rng.standard_normal((10, 4)), Yhat=bottom @ eq2.S.T)
    d = build_design_shared(panel, eq2)
    assert np.abs(d.X1).max() < 1e-12


def test_design_hand_example(eq2):
    yhat = np.array([[10.0, 4.0, 6.0, 1.0, 2.0, 3.0, 4.0]])
    panel = ForecastPanel(Y=np.zeros((1, 4)), Yhat=yhat)
    d = build_design_shared(panel, eq2)
    assert np.allclose(d.X1, [[0.0, 1.0, -1.0]])
    d_int = build_design_shared(panel, eq2, intercept=True)
    assert np.allclose(d_int.X1, [[1.0, 0.0, 1.0, -1.0]])
    assert d_int.pbar == 4


# ---------------------------------------------------------------- fitting


def test_fit_shared_exact_recovery():
    rng = np.random.default_rng(1)
    x1 = rng.standard_normal((30, 3))
    b = rng.standard_normal((3, 4))
    beta = fit_shared(DesignShared(X1=x1, m=4), x1 @ b)
    assert np.abs(beta.matrix - b).max() < 1e-10


def test_fit_shared_zero_response():
    rng = np.random.default_rng(2)
    x1 = rng.standard_normal((20, 3))
    beta = fit_shared(DesignShared(X1=x1, m=2), np.zeros((20, 2)))
    assert np.abs(beta.matrix).max() == 0.0


def test_fit_shared_rank_error_names_columns():
    rng = np.random.default_rng(3)
    col = rng.standard_normal((15, 1))
    x1 = np.hstack([col, col, rng.standard_normal((15, 1))])
    with pytest.raises(RankDeficientError, match=r"columns \["):
        fit_shared(DesignShared(X1=x1, m=2), rng.standard_normal((15, 2)))


def test_fit_shared_matches_gls_for_any_sigma():
    rng = np.random.default_rng(4)
    x1 = rng.standard_normal((40, 3))
    z = rng.standard_normal((40, 4))
    d = DesignShared(X1=x1, m=4)
    b_ols = fit_shared(d, z)
    b_gls = fit_general(d.as_general(), z, random_spd(rng, 4))
    assert np.abs(b_ols.matrix - np.column_stack(b_gls.blocks)).max() < 1e-8


def test_fit_general_identity_sigma_reduces_to_shared():
    rng = np.random.default_rng(5)
    x1 = rng.standard_normal((25, 2))
    z = rng.standard_normal((25, 3))
    d = DesignShared(X1=x1, m=3)
    b1 = fit_shared(d, z)
    b2 = fit_general(d.as_general(), z, np.eye(3))
    assert np.abs(b1.matrix - np.column_stack(b2.blocks)).max() < 1e-10


def test_fit_general_univariate_is_gls():
    rng = np.random.default_rng(6)
    t, p = 30, 4
    x = rng.standard_normal((t, p))
    z = rng.standard_normal((t, 1))
    sigma = np.array([[2.5]])
    beta = fit_general(DesignGeneral(blocks=(x,)), z, sigma)
    direct = np.linalg.solve(x.T @ x / 2.5, x.T @ z[:, 0] / 2.5)
    assert np.abs(beta.blocks[0] - direct).max() < 1e-10


def test_fit_general_recovers_sparse_coefficients():
    # one block misses a column; noiseless data identifies the rest exactly
    rng = np.random.default_rng(7)
    t = 50
    full = rng.standard_normal((t, 3))
    blocks = (full[:, :2], full)
    beta_true = (np.array([1.5, -2.0]), np.array([0.5, 0.25, 3.0]))
    z = np.column_stack([blocks[i] @ beta_true[i] for i in range(2)])
    sigma = random_spd(rng, 2)
    fit = fit_general(DesignGeneral(blocks=blocks), z, sigma)
    assert np.abs(fit.blocks[0] - beta_true[0]).max() < 1e-8
    assert np.abs(fit.blocks[1] - beta_true[1]).max() < 1e-8


# ---------------------------------------------------------------- sigma estimates


def test_sigma_ml_identity_rows():
    e = np.eye(2)
    s = sigma_ml(e)
    assert np.allclose(s.value, 0.5 * np.eye(2))
    assert s.kind == "ML"


def test_sigma_ml_zero_residuals():
    s = sigma_ml(np.zeros((5, 3)))
    assert np.abs(s.value).max() == 0.0


def test_sigma_ml_matches_gram():
    rng = np.random.default_rng(8)
    e = rng.standard_normal((17, 3))
    assert np.allclose(sigma_ml(e).value, e.T @ e / 17.0)


def test_sigma_reml_shared_scaling():
    rng = np.random.default_rng(9)
    e = rng.standard_normal((10, 2))
    ml = sigma_ml(e).value
    reml = sigma_reml_shared(e, 4).value
    assert np.allclose(reml, ml * 10.0 / 6.0)
    assert np.allclose(sigma_reml_shared(e, 0).value, ml)
    with pytest.raises(ValueError):
        sigma_reml_shared(e, 10)


def test_sigma_reml_general_matches_shared_fixed_point():
    rng = np.random.default_rng(10)
    t, p, m = 60, 3, 4
    x1 = rng.standard_normal((t, p))
    d = DesignShared(X1=x1, m=m)
    z = x1 @ rng.standard_normal((p, m)) + rng.standard_normal((t, m))
    e = residuals(d, z, fit_shared(d, z))
    s_shared = sigma_reml_shared(e, p).value
    s_general = sigma_reml_general(d.as_general(), e).value
    assert np.abs(s_shared - s_general).max() < 1e-7


def test_sigma_reml_general_univariate():
    rng = np.random.default_rng(11)
    t, p = 40, 5
    x = rng.standard_normal((t, p))
    d = DesignGeneral(blocks=(x,))
    z = x @ rng.standard_normal(p) + 0.7 * rng.standard_normal(t)
    e = residuals(d, z[:, None], fit_general(d, z[:, None], np.eye(1)))
    s = sigma_reml_general(d, e).value[0, 0]
    expected = float(e[:, 0] @ e[:, 0]) / (t - p)
    assert abs(s - expected) < 1e-7 * expected


def test_sigma_reml_general_nonconvergence_carries_iterate():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((20, 2))
    d = DesignGeneral(blocks=(x, x))
    e = rng.standard_normal((20, 2))
    with pytest.raises(ConvergenceError) as err:
        sigma_reml_general(d, e, max_iter=1)
    assert err.value.last is not None
    assert err.value.last.shape == (2, 2)


# ---------------------------------------------------------------- relaxation


def test_relaxation_shared_design_immediate():
    rng = np.random.default_rng(13)
    x1 = rng.standard_normal((30, 3))
    d = DesignShared(X1=x1, m=4)
    z = x1 @ rng.standard_normal((3, 4)) + rng.standard_normal((30, 4))
    beta, sigma, info = relaxation_fit(d.as_general(), z, mode="ML")
    assert info["n_iter"] <= 2
    direct = fit_shared(d, z)
    assert np.abs(np.column_stack(beta.blocks) - direct.matrix).max() < 1e-10


def test_relaxation_noiseless_data_hits_singularity_guard():
    rng = np.random.default_rng(14)
    x1 = rng.standard_normal((30, 3))
    d = DesignShared(X1=x1, m=2)
    z = x1 @ rng.standard_normal((3, 2))  # exact fit: residuals vanish
    with pytest.raises((NotPositiveDefiniteError, RankDeficientError)):
        relaxation_fit(d.as_general(), z, mode="ML")


def test_relaxation_objective_nondecreasing():
    rng = np.random.default_rng(15)
    t = 50
    blocks = tuple(rng.standard_normal((t, k)) for k in (2, 3, 2))
    beta_true = [rng.standard_normal(k) for k in (2, 3, 2)]
    sigma_true = random_spd(rng, 3) / 3.0
    noise = rng.standard_normal((t, 3)) @ np.linalg.cholesky(sigma_true).T
    z = np.column_stack([blocks[i] @ beta_true[i] for i in range(3)]) + noise
    _, _, info = relaxation_fit(DesignGeneral(blocks=blocks), z, mode="ML")
    path = info["objective_path"]
    assert all(b >= a - 1e-9 for a, b in zip(path, path[1:]))


# ---------------------------------------------------------------- invariants


def test_sigma_invariance_on_shared_designs(eq2):
    rng = np.random.default_rng(16)
    panel = make_panel(eq2, 80, rng)
    d = build_design_shared(panel, eq2)
    z = panel.response(eq2)
    b_eye = fit_general(d.as_general(), z, np.eye(4))
    b_rand = fit_general(d.as_general(), z, random_spd(rng, 4))
    assert np.abs(
        np.column_stack(b_eye.blocks) - np.column_stack(b_rand.blocks)
    ).max() < 1e-8


def test_projection_matrix_properties(eq2):
    rng = np.random.default_rng(17)
    panel = make_panel(eq2, 40, rng)
    x1 = build_design_shared(panel, eq2).X1
    h_mat = x1 @ np.linalg.solve(x1.T @ x1, x1.T)
    assert np.abs(h_mat @ h_mat - h_mat).max() < 1e-10
    assert np.abs(h_mat - h_mat.T).max() < 1e-10


def test_residual_orthogonality(eq2):
    rng = np.random.default_rng(18)
    panel = make_panel(eq2, 60, rng)
    d = build_design_shared(panel, eq2)
    z = panel.response(eq2)
    e = residuals(d, z, fit_shared(d, z))
    scale = max(1.0, np.abs(z).max())
    assert np.abs(d.X1.T @ e).max() < 1e-8 * scale


def test_reml_centrality_and_ml_bias(eq2):
    # fixed design, fresh noise: REML mean hits the truth, ML is scaled low
    rng = np.random.default_rng(19)
    t, m, top = 30, 4, 3
    yhat = rng.standard_normal((t, eq2.n))
    beta = rng.standard_normal((top, m))
    sigma_true = np.array(
        [
            [1.0, 0.3, 0.1, 0.0],
            [0.3, 1.2, 0.2, 0.1],
            [0.1, 0.2, 0.9, 0.15],
            [0.0, 0.1, 0.15, 1.1],
        ]
    )
    chol = np.linalg.cholesky(sigma_true)
    reps = 800
    reml_draws = np.empty((reps, m, m))
    ml_draws = np.empty((reps, m, m))
    for r in range(reps):
        panel = model_true_panel(eq2, t, rng, beta, chol, yhat=yhat)
        d = build_design_shared(panel, eq2)
        z = panel.response(eq2)
        e = residuals(d, z, fit_shared(d, z))
        ml_draws[r] = sigma_ml(e).value
        reml_draws[r] = sigma_reml_shared(e, top).value
    se = reml_draws.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(reml_draws.mean(axis=0) - sigma_true) <= 3.0 * se)
    ml_se = ml_draws.std(axis=0, ddof=1) / np.sqrt(reps)
    expected_ml = sigma_true * (t - top) / t
    assert np.all(np.abs(ml_draws.mean(axis=0) - expected_ml) <= 3.0 * ml_se)


def test_wishart_degrees_of_freedom(eq2):
    # v'(Y - Ytilde)'(Y - Ytilde)v / v'Sigma v follows chi2(T - (n - m))
    rng = np.random.default_rng(20)
    t, m, top = 30, 4, 3
    yhat = rng.standard_normal((t, eq2.n))
    beta = rng.standard_normal((top, m))
    sigma_true = np.diag([1.0, 0.8, 1.3, 0.9])
    chol = np.linalg.cholesky(sigma_true)
    v = np.array([0.5, -0.5, 0.5, 0.5])
    sigma_v = float(v @ sigma_true @ v)
    stats = np.empty(1500)
    for r in range(stats.size):
        panel = model_true_panel(eq2, t, rng, beta, chol, yhat=yhat)
        d = build_design_shared(panel, eq2)
        z = panel.response(eq2)
        e = residuals(d, z, fit_shared(d, z))  # Y - Ytilde
        stats[r] = float(v @ e.T @ e @ v) / sigma_v
    p = scipy.stats.kstest(stats, scipy.stats.chi2(t - top).cdf).pvalue
    assert p > 0.01


def test_sigma_reml_general_monte_carlo_centrality():
    # joint relaxation to the REML solution on a genuinely general design:
    # the mean over replicates recovers the true covariance
    rng = np.random.default_rng(99)
    t, m = 25, 3
    sizes = (2, 4, 3)
    blocks = tuple(rng.standard_normal((t, k)) for k in sizes)
    beta_true = [rng.standard_normal(k) for k in sizes]
    sigma_true = np.array([[1.0, 0.4, 0.1], [0.4, 1.3, 0.2], [0.1, 0.2, 0.8]])
    chol = np.linalg.cholesky(sigma_true)
    d = DesignGeneral(blocks=blocks)
    mean_signal = np.column_stack([blocks[i] @ beta_true[i] for i in range(m)])
    reps = 1000
    draws = np.empty((reps, m, m))
    for r in range(reps):
        z = mean_signal + rng.standard_normal((t, m)) @ chol.T
        _, sig, _ = relaxation_fit(d, z, mode="REML")
        draws[r] = sig.value
    se = draws.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(draws.mean(axis=0) - sigma_true) <= 3.0 * se)
