import json
import math

import numpy as np
import pytest

from hdtrafo.exceptions import CalibrationError, ConfigError, CovarianceError, DGPInfeasibleError, HDTrafoError, StudyError
from hdtrafo.simulate import (
    RepRecord,
    SimConfig,
    calibrate_sigma,
    draw_dataset,
    estimator_histogram,
    load_configs,
    make_covariance,
    population_coefficients,
    rep_seed,
    run_study,
    summarize,
    true_beta,
)


def test_covariance_examples():
    assert np.array_equal(make_covariance("identity", 3), np.eye(3))
    np.testing.assert_array_equal(make_covariance("toeplitz", 2, 0.35), [[1.0, 0.35], [0.35, 1.0]])
    np.testing.assert_allclose(make_covariance("equi", 2, 0.35), [[1.0, 0.35], [0.35, 1.0]], rtol=1e-15)
    eq = make_covariance("equi", 20, 0.35)
    assert np.allclose(eq, eq.T) and np.linalg.eigvalsh(eq).min() > 0
    with pytest.raises(CovarianceError):
        make_covariance("toeplitz", 3, 1.0)
    with pytest.raises(CovarianceError):
        make_covariance("banded", 3)


def test_calibration_examples():
    beta = np.r_[np.ones(5), np.zeros(15)]
    assert calibrate_sigma(beta, np.eye(20), 1.0) == 5.0
    assert calibrate_sigma(beta, np.eye(20), 3.0) == pytest.approx(5 / 3, rel=1e-15)
    e1 = np.r_[1.0, np.zeros(3)]
    assert calibrate_sigma(e1, make_covariance("toeplitz", 4), 1.0) == 1.0
    with pytest.raises(CalibrationError):
        calibrate_sigma(np.zeros(3), np.eye(3), 1.0)
    with pytest.raises(CalibrationError):
        calibrate_sigma(e1, np.eye(4), 0.0)


def test_config_validation():
    with pytest.raises(ConfigError, match="^s:"):
        SimConfig(s=30)
    with pytest.raises(ConfigError, match="^snr:"):
        SimConfig(snr=0.0)
    with pytest.raises(ConfigError, match="^reps:"):
        SimConfig(reps=0)
    with pytest.raises(ConfigError, match="^cov_kind:"):
        SimConfig(cov_kind="banded")
    with pytest.raises(ValueError):
        SimConfig(family="logit")


def test_boxcox_log_design_has_positive_draws_without_redraws():
    train, test, redraws = draw_dataset(SimConfig(), rep_seed(0, 0))
    assert redraws == 0
    assert np.all(train.y > 0) and np.all(test.y > 0)
    assert (train.n, train.p, test.n) == (200, 20, 200)


def test_yeo_johnson_at_one_is_the_identity():
    cfg = SimConfig(family="yeo-johnson", theta0=1.0, n=50, n_test=2)
    train, _, _ = draw_dataset(cfg, rep_seed(5, 2))
    rng = np.random.default_rng(rep_seed(5, 2))
    X = rng.standard_normal((50, 20))
    z = X @ true_beta(cfg) + math.sqrt(5.0) * rng.standard_normal(50)
    np.testing.assert_array_equal(train.X, X)
    np.testing.assert_allclose(train.y, z, rtol=1e-14, atol=1e-14)


def test_draws_are_deterministic_and_seed_dependent():
    a = draw_dataset(SimConfig(), rep_seed(1, 3))
    b = draw_dataset(SimConfig(), rep_seed(1, 3))
    c = draw_dataset(SimConfig(), rep_seed(1, 4))
    assert np.array_equal(a[0].y, b[0].y) and np.array_equal(a[1].X, b[1].X)
    assert not np.array_equal(a[0].y, c[0].y)


@pytest.mark.parametrize("kind", ["identity", "toeplitz", "equi"])
def test_moments_of_the_design(kind):
    cfg = SimConfig(n=20000, n_test=2, cov_kind=kind, snr=2.0)
    # the worst entry is a diagonal variance with sampling sd near 0.01, so 0.03 is
    # roughly a 3 sd bound that a fraction of seeds exceed
    train, _, _ = draw_dataset(cfg, rep_seed(0, 0))
    cov = make_covariance(kind, 20, 0.35)
    assert np.max(np.abs(np.cov(train.X.T) - cov)) <= 0.03
    sigma2 = calibrate_sigma(true_beta(cfg), cov, cfg.snr)
    realized = np.var(train.X @ true_beta(cfg)) / sigma2
    assert abs(realized / cfg.snr - 1) <= 0.10


def test_redraw_limit():
    # Box-Cox with theta0 = 1 needs latent values above -1; at unit scale most draws miss
    with pytest.raises(DGPInfeasibleError):
        draw_dataset(SimConfig(theta0=1.0), rep_seed(0, 0))
    _, _, redraws = draw_dataset(SimConfig(theta0=1.0, intercept=10.0), rep_seed(0, 0))
    assert 0 <= redraws <= 40


def test_metrics_on_hand_built_records():
    cfg = SimConfig()  # sigma^2 = 5
    records = [
        RepRecord(rep=2, error="EstimationInfeasibleError: x"),
        RepRecord(rep=1, theta_hat=-0.2, accepted=0.0, mse=10.0),
        RepRecord(rep=0, theta_hat=0.1, accepted=1.0, mse=5.0),
    ]
    rep = summarize(cfg, records)
    assert rep.mean_estimator == pytest.approx(-0.05)
    assert rep.mae == pytest.approx(0.15)
    assert rep.acceptance_rate == 0.5
    assert rep.mse == 7.5
    assert rep.rel_mse == pytest.approx(1.5)
    assert rep.failures == 1
    assert [r.rep for r in rep.per_rep] == [0, 1, 2]
    row = rep.row()
    for key in ("estimator", "acceptance_rate", "mae", "rel_mse"):
        assert key in row
    with pytest.raises(StudyError):
        summarize(cfg, records[:1])


def _oracle_estimator(train, config):
    return config.theta0, 1.0, config.intercept, true_beta(config)


def test_injected_oracle_estimator():
    cfg = SimConfig(reps=1)
    rep = run_study(cfg, estimator=_oracle_estimator)
    assert rep.mae == 0.0 and rep.acceptance_rate == 1.0 and rep.failures == 0
    # the oracle predictor leaves only noise, so rel_mse is near 1
    assert 0.7 <= rep.rel_mse <= 1.3


def _broken_estimator(train, config):
    raise DGPInfeasibleError("nope")


def test_study_failure_limit():
    with pytest.raises(StudyError):
        run_study(SimConfig(reps=3), estimator=_broken_estimator)


def test_default_estimator_small_study_is_reproducible():
    cfg = SimConfig(reps=3, n_boot=4, base_seed=5)
    a = run_study(cfg)
    b = run_study(cfg, threads=2)
    assert a.to_dict() == b.to_dict()
    assert all(r.ok for r in a.per_rep)
    assert all(np.isfinite(r.sigma_boot) for r in a.per_rep)


def test_estimator_histogram():
    cfg = SimConfig(reps=4, n_boot=0, base_seed=2)
    h = estimator_histogram(cfg)
    assert h.shape == (4,)
    assert np.array_equal(h, estimator_histogram(cfg, threads=2))
    assert np.all(np.abs(h) < 0.2)


def test_population_coefficients_identity_at_truth():
    cfg = SimConfig()
    np.testing.assert_allclose(population_coefficients(cfg, 0.0), true_beta(cfg), rtol=1e-12)
    b = population_coefficients(cfg, 0.2)
    assert np.all(b[5:] == 0) and np.all(b[:5] > 1)


def _dump(tmp_path, doc):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return path


def test_load_configs(tmp_path):
    single = load_configs(_dump(tmp_path, {"n": 100, "snr": 3}))
    assert single == [SimConfig(n=100, snr=3.0)]
    many = load_configs(_dump(tmp_path, {"defaults": {"reps": 7}, "configs": [{"p": 50}, {"cov_kind": "toeplitz"}]}))
    assert [c.reps for c in many] == [7, 7]
    assert many[0].p == 50 and many[1].cov_kind == "toeplitz"


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"configs": [{"n": 100}, {"snr": -1}]}, r"configs\[1\]\.snr"),
        ({"configs": [{"nn": 100}]}, r"configs\[0\]\.nn"),
        ({"n": "100"}, r"config\.n"),
        ({"configs": []}, "configs"),
        ('{"n": 1', "invalid JSON"),
    ],
)
def test_config_errors_name_the_field(tmp_path, doc, where):
    with pytest.raises(ConfigError, match=where):
        load_configs(_dump(tmp_path, doc))


def test_bundled_configs_parse():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    for name in ("baseline.json", "design_grid.json", "histogram.json"):
        assert load_configs(root / name)
    assert isinstance(ConfigError("x"), HDTrafoError)
