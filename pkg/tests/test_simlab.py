import numpy as np
import pytest

from reconlab.simlab import (
    Var1Config,
    ar1_base_forecasts,
    run_study,
    section5_config,
    study_hierarchy,
    var1_simulate,
)


# ---------------------------------------------------------------- process


def test_var1_iid_case_matches_identity_covariance():
    cfg = Var1Config(A=np.zeros((3, 3)), sigma_eps=np.eye(3), t_train=50, seed=1)
    x = var1_simulate(cfg, n_steps=100_000)
    emp = np.cov(x.T)
    se = 3.0 / np.sqrt(x.shape[0])
    assert np.abs(emp - np.eye(3)).max() <= 3.0 * se + 0.01


def test_var1_scalar_autocorrelation():
    cfg = Var1Config(
        A=np.array([[0.5]]), sigma_eps=np.eye(1), t_train=50, seed=2
    )
    x = var1_simulate(cfg, n_steps=200_000)[:, 0]
    rho = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(rho - 0.5) <= 3.0 / np.sqrt(x.size) + 0.01


def test_var1_stationary_variance_matches_lyapunov():
    cfg = section5_config(seed=3)
    x = var1_simulate(cfg, n_steps=200_000)
    v = np.eye(4)
    for _ in range(5000):
        v = cfg.A @ v @ cfg.A.T + np.eye(4)
    emp = np.cov(x.T)
    se = np.abs(v).max() * 3.0 / np.sqrt(x.shape[0] / 10.0)
    assert np.abs(emp - v).max() <= 3.0 * se


def test_var1_rejects_nonstationary():
    with pytest.raises(ValueError):
        Var1Config(A=np.eye(2), sigma_eps=np.eye(2), t_train=50)


def test_var1_deterministic_per_seed_and_rep():
    cfg = section5_config(seed=9)
    a = var1_simulate(cfg, rep=(60, 3), n_steps=40)
    b = var1_simulate(cfg, rep=(60, 3), n_steps=40)
    c = var1_simulate(cfg, rep=(60, 4), n_steps=40)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


# ---------------------------------------------------------------- AR(1) base


def test_ar1_white_noise_slope_near_zero():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((20_000, 2))
    coef, _ = ar1_base_forecasts(x)
    assert np.abs(coef[:, 1]).max() <= 3.0 / np.sqrt(x.shape[0]) + 0.01


def test_ar1_exact_recovery_on_noiseless_recursion():
    # the decaying transient from x0 away from the fixed point identifies
    # both coefficients without any noise
    t = 200
    x = np.empty(t)
    x[0] = 10.0
    for i in range(1, t):
        x[i] = 0.3 + 0.8 * x[i - 1]
    coef, preds = ar1_base_forecasts(x)
    assert abs(coef[0, 0] - 0.3) < 1e-6
    assert abs(coef[0, 1] - 0.8) < 1e-6
    assert np.abs(preds[:, 0] - x[1:]).max() < 1e-6


def test_ar1_aggregated_series_is_autocorrelated():
    cfg = section5_config(seed=5)
    h = study_hierarchy(4)
    bottom = var1_simulate(cfg, n_steps=5000)
    nodes = bottom @ h.S.T
    coef, _ = ar1_base_forecasts(nodes)
    assert coef[0, 1] > 0.5  # total: eigenvalue 0.9 direction


def test_ar1_rejects_constant_column():
    x = np.column_stack([np.ones(50), np.arange(50.0)])
    with pytest.raises(ValueError):
        ar1_base_forecasts(x)


def test_ar1_out_of_sample_rows_condition_on_actuals():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(60)
    coef, preds = ar1_base_forecasts(x, fit_rows=40)
    manual = coef[0, 0] + coef[0, 1] * x[49]
    assert abs(preds[49, 0] - manual) < 1e-12


# ---------------------------------------------------------------- study


def test_run_study_baseline_only_zero_relative():
    cfg = section5_config(seed=7, reps=3)
    res = run_study(cfg, [24], estimators=("SHRINK",))
    agg = res.aggregated()
    assert np.allclose(agg["mean_rel_log_score"], 0.0)


def test_run_study_complete_grid_and_determinism():
    cfg = section5_config(seed=8, reps=4)
    res1 = run_study(cfg, [24, 32], estimators=("SHRINK", "SREML"))
    res2 = run_study(cfg, [24, 32], estimators=("SHRINK", "SREML"))
    assert res1.records == res2.records
    df = res1.to_frame()
    assert len(df) == 2 * 4 * 2
    cells = set(zip(df.t_train, df.rep, df.estimator))
    assert len(cells) == len(df)


def test_run_study_order_independent_streams():
    cfg = section5_config(seed=8, reps=2)
    small = run_study(cfg, [32], estimators=("SHRINK",))
    both = run_study(cfg, [24, 32], estimators=("SHRINK",))
    df = both.to_frame()
    sub = df[df.t_train == 32].reset_index(drop=True)
    assert np.allclose(sub["log_score"], small.to_frame()["log_score"])


def test_run_study_rejects_unknown_estimator():
    cfg = section5_config(seed=1, reps=1)
    with pytest.raises(ValueError):
        run_study(cfg, [24], estimators=("SHRINK", "XX"))


def test_run_study_csv_round_trip(tmp_path):
    cfg = section5_config(seed=11, reps=2)
    res = run_study(cfg, [24], estimators=("SHRINK", "BASE"))
    raw = tmp_path / "raw.csv"
    agg = tmp_path / "agg.csv"
    res.to_csv(raw, agg)
    res.to_csv(tmp_path / "raw2.csv", tmp_path / "agg2.csv")
    assert raw.read_bytes() == (tmp_path / "raw2.csv").read_bytes()
    assert agg.read_bytes() == (tmp_path / "agg2.csv").read_bytes()
