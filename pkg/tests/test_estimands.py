import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signedwald.estimands import (
    EstimateSet,
    ScenarioConfig,
    TrialArrays,
    TrialRecord,
    landmark_estimates,
    read_influence_csv,
    stack_covariance,
    theoretical_sigma,
    write_influence_csv,
)
from signedwald.exceptions import (
    DimensionMismatch,
    EmptyArm,
    InputError,
    NonFiniteInput,
    NoSurvivors,
    NotPSD,
    TooFewRows,
)
from signedwald.simlab import power_scenario, simulate_arrays

REFERENCE_SIGMA = np.array([[0.405, 0, 10.610], [0, 1016.943, 900], [10.610, 900, 1075.336]])


def test_stack_covariance_hand_cases():
    np.testing.assert_allclose(stack_covariance([[1.0], [-1.0]]), [[1.0]])
    phi = np.array([[1.0, 2.0], [-1.0, -2.0], [0.0, 0.0]])
    np.testing.assert_allclose(stack_covariance(phi), [[2 / 3, 4 / 3], [4 / 3, 8 / 3]])


def test_stack_covariance_errors():
    with pytest.raises(TooFewRows):
        stack_covariance([[1.0, 2.0]])
    with pytest.raises(NonFiniteInput):
        stack_covariance([[1.0], [np.inf]])


def test_stack_covariance_near_theoretical():
    cfg = power_scenario(3500)
    est = landmark_estimates(simulate_arrays(cfg, seed=5), cfg.gamma)
    sig = theoretical_sigma(cfg)
    mask = sig != 0
    assert np.all(np.abs(est.sigma_hat[mask] - sig[mask]) <= 0.10 * np.abs(sig[mask]))


def test_estimate_set_validation():
    with pytest.raises(DimensionMismatch):
        EstimateSet(10, np.zeros(2), np.eye(3))
    with pytest.raises(InputError):
        EstimateSet(0, np.zeros(2), np.eye(2))
    with pytest.raises(NotPSD):
        EstimateSet(10, np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NonFiniteInput):
        EstimateSet(10, np.array([np.nan, 0.0]), np.eye(2))


def test_estimate_set_covariance_kinds():
    per = EstimateSet.from_covariance(100, [1.0, 2.0], np.diag([0.01, 0.04]), kind="per_estimate")
    asy = EstimateSet.from_covariance(100, [1.0, 2.0], np.diag([1.0, 4.0]), kind="asymptotic")
    np.testing.assert_allclose(per.sigma_hat, asy.sigma_hat)
    np.testing.assert_allclose(per.std_err, [0.1, 0.2])
    with pytest.raises(InputError):
        EstimateSet.from_dict({"n": 10, "theta_hat": [0.0], "covariance": [[1.0]]})


def test_estimate_set_roundtrip_and_subset(worked_est):
    again = EstimateSet.from_dict(worked_est.to_dict())
    np.testing.assert_allclose(again.sigma_hat, worked_est.sigma_hat, rtol=1e-15)
    sub = worked_est.subset([2, 0])
    assert sub.names == ("theta3", "theta1")
    np.testing.assert_allclose(sub.theta_hat, worked_est.theta_hat[[2, 0]])
    np.testing.assert_allclose(sub.sigma_hat[0, 1], worked_est.sigma_hat[2, 0])


def test_estimate_set_is_read_only(worked_est):
    with pytest.raises(ValueError):
        worked_est.theta_hat[0] = 1.0


def test_influence_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    phi = rng.standard_normal((20, 3))
    path = tmp_path / "phi.csv"
    write_influence_csv(path, phi, ["a", "b", "c"])
    back, names = read_influence_csv(path)
    assert names == ("a", "b", "c")
    np.testing.assert_allclose(back, phi, rtol=1e-15)


def test_landmark_one_record_per_arm():
    recs = [TrialRecord.make(1, 0, 5.0, 15.0), TrialRecord.make(0, 0, 3.0, 15.0)]
    est = landmark_estimates(recs, 15.0)
    np.testing.assert_allclose(est.theta_hat, [0.0, 2.0, 2.0])


def test_landmark_errors():
    with pytest.raises(NoSurvivors):
        landmark_estimates([TrialRecord.make(1, 1, None, 15.0), TrialRecord.make(0, 0, 3.0, 15.0)], 15.0)
    with pytest.raises(EmptyArm):
        landmark_estimates([TrialRecord.make(1, 0, 1.0, 15.0), TrialRecord.make(1, 0, 3.0, 15.0)], 15.0)
    with pytest.raises(InputError):
        landmark_estimates([TrialRecord.make(1, 1, None, 15.0), TrialRecord.make(0, 0, 3.0, 15.0)], 10.0)
    with pytest.raises(InputError):
        TrialRecord(a=1, r=0, y=None, y_tilde=0.0)


def test_landmark_matches_direct_group_means():
    cfg = power_scenario(500)
    data = simulate_arrays(cfg, seed=12345)
    est = landmark_estimates(data, cfg.gamma)
    a, r, y, yt = data.a == 1, data.r == 1, data.y, data.y_tilde
    th1 = np.mean(~r[a]) - np.mean(~r[~a])
    th2 = np.mean(y[a & ~r]) - np.mean(y[~a & ~r])
    th3 = np.mean(yt[a]) - np.mean(yt[~a])
    np.testing.assert_allclose(est.theta_hat, [th1, th2, th3], rtol=1e-12)
    # plausible magnitudes for a single trial
    assert 0.0 < est.theta_hat[0] < 0.1 and 1.0 < est.theta_hat[1] < 5.0 and 1.5 < est.theta_hat[2] < 6.0
    corr12 = est.sigma_hat[0, 1] / np.sqrt(est.sigma_hat[0, 0] * est.sigma_hat[1, 1])
    assert abs(corr12) < 0.15


def test_landmark_records_and_arrays_agree():
    cfg = ScenarioConfig(n=300)
    arr = simulate_arrays(cfg, seed=3)
    e1 = landmark_estimates(arr, cfg.gamma)
    e2 = landmark_estimates(list(arr), cfg.gamma)
    np.testing.assert_array_equal(e1.theta_hat, e2.theta_hat)
    np.testing.assert_array_equal(e1.influence, e2.influence)


def test_sigma_hat_is_influence_second_moment():
    cfg = power_scenario(800)
    est = landmark_estimates(simulate_arrays(cfg, seed=8), cfg.gamma)
    phi = est.influence
    np.testing.assert_allclose(est.sigma_hat, phi.T @ phi / phi.shape[0], atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(20, 400), st.integers(0, 2**32 - 1), st.floats(-20.0, 60.0))
def test_influence_columns_mean_zero(n, seed, gamma):
    cfg = ScenarioConfig(n=n, lam=0.3, gamma=gamma, trt_score=1.0)
    data = simulate_arrays(cfg, seed)
    try:
        est = landmark_estimates(data, gamma)
    except (EmptyArm, NoSurvivors):
        return
    phi = est.influence
    sd = phi.std(axis=0)
    assert np.all(np.abs(phi.mean(axis=0)) <= 1e-8 * np.maximum(sd, 1e-300) + 1e-15)


def test_theoretical_sigma_reference_values():
    sig = theoretical_sigma(power_scenario(1000))
    np.testing.assert_allclose(sig, REFERENCE_SIGMA, atol=0.002)


def test_theoretical_sigma_edge_cases():
    cfg = ScenarioConfig(mu=40.0, gamma=40.0, trt_score=0.0)
    assert theoretical_sigma(cfg)[0, 2] == 0.0
    cfg = ScenarioConfig(lam=1e-9)
    assert theoretical_sigma(cfg)[0, 0] < 1e-8


def test_theoretical_sigma_matches_simulation_average():
    cfg = power_scenario(3500)
    sig = theoretical_sigma(cfg)
    avg = np.mean([landmark_estimates(simulate_arrays(cfg, seed=s), cfg.gamma).sigma_hat for s in range(50)], axis=0)
    mask = sig != 0
    assert np.all(np.abs(avg[mask] - sig[mask]) <= 0.03 * np.abs(sig[mask]))
    assert np.all(np.abs(avg[~mask]) <= 2.0)


def test_composite_estimator_is_mean_difference():
    cfg = ScenarioConfig(n=1000, trt_hazard=0.05, trt_score=-2.0)
    data = simulate_arrays(cfg, seed=1)
    est = landmark_estimates(data, cfg.gamma)
    a = data.a == 1
    assert est.theta_hat[2] == pytest.approx(data.y_tilde[a].mean() - data.y_tilde[~a].mean(), rel=1e-13)


def test_scenario_config():
    with pytest.raises(InputError):
        ScenarioConfig(lam=0.05, trt_hazard=-0.06)
    with pytest.raises(InputError):
        ScenarioConfig.from_dict({"bogus": 1})
    cfg = ScenarioConfig.from_dict({"lambda": 0.05, "n": 200})
    assert cfg.lam == 0.05 and cfg.n == 200
    np.testing.assert_allclose(power_scenario(100).true_theta(), [0.032, 2.7, 3.23], atol=0.001)


def test_trial_arrays_iterates_records():
    arr = TrialArrays(np.array([1, 0]), np.array([1, 0]), np.array([np.nan, 2.0]), np.array([15.0, 2.0]))
    recs = list(arr)
    assert recs[0].y is None and recs[1].y == 2.0
