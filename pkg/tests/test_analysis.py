import math

import mpmath
import numpy as np
import pytest

from models.states import build_input_state, entangled_number_state, noon_state, spec_from_pairs
from pipeline.analysis import (
    DISCUSSION_SCALED_ALPHA, distance_for_epsilon, epsilon_from_distance, error_probabilities,
    error_probability_oracle, monte_carlo_error, peak_distance, peak_distance_approx,
    reproduce_discussion, run_simulation, theta_for_gap, trial_rng
)
from utils.exceptions import ParameterError
from utils.report_writer import render_json

ERFC2_HALF = float(mpmath.erfc(2) / 2)


def test_erfc_against_high_precision():
    mpmath.mp.dps = 40
    for z in np.linspace(0.0, 10.0, 201):
        expected = float(mpmath.erfc(mpmath.mpf(float(z))) / 2)
        assert epsilon_from_distance(2 * math.sqrt(2) * z) == pytest.approx(expected, rel=1e-12)


def test_known_error_probabilities():
    # d = 2 对应单侧 1σ 尾部
    assert epsilon_from_distance(2.0) == pytest.approx(0.15865525393145707, abs=1e-12)
    assert epsilon_from_distance(0.0) == 0.5
    assert epsilon_from_distance(100.0) == 0.0
    assert ERFC2_HALF == pytest.approx(2.33887e-3, abs=1e-8)


def test_inverse_error_function():
    for epsilon in (0.4, 0.05, 1e-3, 1e-9):
        assert epsilon_from_distance(distance_for_epsilon(epsilon)) == pytest.approx(epsilon, rel=1e-10)
    with pytest.raises(ParameterError):
        distance_for_epsilon(0.0)


def test_peak_distances():
    theta, alpha = 0.01, 1000.0
    assert peak_distance(2, theta, alpha, 0) == pytest.approx(2 * alpha * (1 - math.cos(theta)), rel=1e-10)
    assert peak_distance_approx(2, theta, alpha, 0) == pytest.approx(alpha * theta ** 2)
    assert peak_distance_approx(4, theta, alpha, 1) == pytest.approx(9 * alpha * theta ** 2)
    assert peak_distance_approx(4, theta, alpha, 0) == pytest.approx(27 * alpha * theta ** 2)
    with pytest.raises(ParameterError):
        peak_distance(4, theta, alpha, 2)


@pytest.mark.parametrize('n', range(2, 13))
def test_small_angle_approximation(n):
    theta = 0.049 / ((n // 2) * (n - 1))
    report = error_probabilities(n, theta, 1.0e4)
    for gap in report.gaps:
        assert gap.approx_relative_error < 1e-3


def test_approximation_for_n10():
    report = error_probabilities(10, 0.001, 1.0e4)
    assert max(g.approx_relative_error for g in report.gaps) < 1e-3


def test_error_grows_towards_the_last_gap():
    report = error_probabilities(8, 0.01, 200.0)
    epsilons = [g.epsilon for g in report.gaps]
    assert all(a < b for a, b in zip(epsilons, epsilons[1:]))
    assert report.epsilon_max == epsilons[-1]
    assert [g.k for g in report.gaps] == [0, 1, 2, 3]


def test_single_photon_and_zero_nonlinearity_reports():
    assert error_probabilities(1, 0.05, 100.0).gaps == ()
    assert error_probabilities(1, 0.05, 100.0).epsilon_max == 0.0


@pytest.mark.parametrize('n,theta,alpha', [
    (2, 0.05, 1000.0),
    (3, 0.02, 5000.0),
    (4, 0.0025, 1000.0),
    (7, 0.01, 2.0e4),
])
def test_oracle_matches_closed_form(n, theta, alpha):
    report = error_probabilities(n, theta, alpha)
    for gap in report.gaps:
        assert error_probability_oracle(n, theta, alpha, gap.k, 'left') == pytest.approx(gap.epsilon, abs=1e-10)
        assert error_probability_oracle(n, theta, alpha, gap.k, 'right') == pytest.approx(gap.epsilon, abs=1e-10)


def test_theta_for_gap_round_trip():
    alpha = 1000.0
    distance = distance_for_epsilon(0.05)
    theta = theta_for_gap(2, alpha, distance)
    assert peak_distance(2, theta, alpha, 0) == pytest.approx(distance, rel=1e-12)
    assert error_probability_oracle(2, theta, alpha, 0) == pytest.approx(0.05, abs=1e-6)


def test_scaling_law():
    # 最小间隙相同的配置给出相同的 ε_max
    distance = 3.0
    first = error_probabilities(2, theta_for_gap(2, 1.0e4, distance), 1.0e4)
    second = error_probabilities(6, theta_for_gap(6, 3.0e4, distance), 3.0e4)
    assert first.epsilon_max == pytest.approx(second.epsilon_max, abs=1e-12)


def test_reproduce_discussion_values():
    result = reproduce_discussion(n=2)
    assert result.report.n_alpha == pytest.approx(5.12e10, rel=1e-6)
    assert result.epsilon_max_small_angle == pytest.approx(ERFC2_HALF, abs=1e-12)
    assert result.report.epsilon_max == pytest.approx(ERFC2_HALF, abs=1e-6)
    assert result.report.n_theta == pytest.approx(1e-2)

    asymptotic = reproduce_discussion(asymptotic=True)
    assert asymptotic.report.alpha == pytest.approx(DISCUSSION_SCALED_ALPHA)
    assert asymptotic.report.n_alpha == pytest.approx(3.2e9, rel=1e-6)
    assert asymptotic.report.gaps == ()
    assert asymptotic.epsilon_max_small_angle == pytest.approx(ERFC2_HALF, abs=1e-12)
    assert asymptotic.to_dict()['schema_version'] == '1.0'


@pytest.mark.parametrize('n', [4, 6, 10])
def test_reproduce_discussion_other_n(n):
    result = reproduce_discussion(n=n)
    assert result.epsilon_max_small_angle == pytest.approx(ERFC2_HALF, abs=1e-12)
    assert result.report.epsilon_max == pytest.approx(ERFC2_HALF, abs=1e-5)


def test_reproduce_requires_photon_number():
    with pytest.raises(ParameterError):
        reproduce_discussion()
    with pytest.raises(ParameterError):
        reproduce_discussion(n=1)


def test_monte_carlo_matches_analytic_rate(rng, two_equal_components):
    alpha = 1000.0
    theta = theta_for_gap(2, alpha, 2.0)
    report = monte_carlo_error(two_equal_components, theta, alpha, 1_000_000, rng)
    epsilon = epsilon_from_distance(2.0)
    assert sorted(b.m for b in report.bins) == [0, 1]
    for b in report.bins:
        assert b.analytic_rate == pytest.approx(epsilon, rel=1e-9)
        assert abs(b.rate - epsilon) <= 3 * b.analytic_stderr
    assert abs(report.rate - epsilon) <= 3 * math.sqrt(epsilon * (1 - epsilon) / report.trials)
    assert list(report.to_frame().columns)[:3] == ['m', 'l', 'weight']


def test_monte_carlo_paper_separation(rng, two_equal_components):
    alpha = 1000.0
    theta = theta_for_gap(2, alpha, 4 * math.sqrt(2))
    report = monte_carlo_error(two_equal_components, theta, alpha, 1_000_000, rng, max_n_theta=None)
    sigma = math.sqrt(ERFC2_HALF * (1 - ERFC2_HALF) / report.trials)
    assert abs(report.rate - ERFC2_HALF) <= 3 * sigma


def test_monte_carlo_skips_absent_components(rng):
    alpha = 1000.0
    theta = theta_for_gap(2, alpha, 2.0)
    report = monte_carlo_error(noon_state(2), theta, alpha, 1000, rng)
    assert report.bin(0) is None
    assert report.bin(1).trials == 1000


def test_monte_carlo_calibration_over_seeds():
    alpha = 1000.0
    theta = theta_for_gap(2, alpha, 2.0)
    epsilon = epsilon_from_distance(2.0)
    trials = 10_000
    sigma = math.sqrt(epsilon * (1 - epsilon) / trials)
    signal = entangled_number_state(2, 1)
    inside = 0
    for seed in range(100):
        report = monte_carlo_error(signal, theta, alpha, trials, np.random.default_rng(seed))
        inside += abs(report.rate - epsilon) <= 3 * sigma
    assert inside >= 97


def test_trial_streams_are_reproducible():
    first = trial_rng(11, 3).normal(size=4)
    assert np.array_equal(first, trial_rng(11, 3).normal(size=4))
    assert not np.array_equal(first, trial_rng(11, 4).normal(size=4))


def test_run_simulation_is_deterministic():
    signal = build_input_state(spec_from_pairs(4, {0: (1, 0), 1: (0.5, 0.5j), 2: (0.3, 0)}))
    kwargs = dict(theta=0.0025, alpha=3.0e4, trials=200, seed=5, keep_records=3, progress=False)
    first = run_simulation(signal, **kwargs)
    second = run_simulation(signal, **kwargs)
    assert render_json(first.to_dict()) == render_json(second.to_dict())
    assert len(first.records) == 3
    assert first.bins['sampled'].sum() == 200
    assert first.bins['detected'].sum() == 200
    assert set(first.photon_numbers) == {4}


def test_run_simulation_rejects_empty_run():
    with pytest.raises(ParameterError):
        run_simulation(noon_state(2), 0.01, 100.0, 0, seed=1, progress=False)
