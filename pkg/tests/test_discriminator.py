import cmath
import math

import mpmath
import numpy as np
import pytest

from models.circuit import evolve_protocol
from models.homodyne import collapse, outcome_density
from models.states import (
    build_input_state, entangled_number_state, fidelity, noon_state, normalize, phase_shift,
    random_spec, spec_from_pairs
)
from pipeline.analysis import error_probabilities, run_simulation
from pipeline.discriminator import (
    classify, classify_many, correction_phase, detect, peak_angle, phi_j, thresholds
)
from utils.exceptions import DegenerateConfigurationError, KerrProtocolError, ParameterError


def _mp_cut(n, theta, alpha, k):
    mpmath.mp.dps = 40
    theta, alpha = mpmath.mpf(theta), mpmath.mpf(alpha)
    a = (mpmath.mpf(n) / 2 - k - 1) * (n - 1) * theta
    b = (mpmath.mpf(n) / 2 - k) * (n - 1) * theta
    return float(alpha * (mpmath.cos(a) + mpmath.cos(b)))


def test_n4_thresholds():
    t = thresholds(4, 0.0025, 1000.0)
    assert t.cuts == pytest.approx([1999.8594, 1999.9719], abs=1e-4)
    for k, cut in enumerate(t.cuts):
        assert cut == pytest.approx(_mp_cut(4, 0.0025, 1000.0, k), abs=1e-9)
    assert t.labels == ((2, 0), (1, 1), (0, 2))


def test_small_n_thresholds():
    theta, alpha = 0.01, 500.0
    assert thresholds(2, theta, alpha).cuts == pytest.approx([alpha * (1 + math.cos(theta))])
    assert thresholds(3, theta, alpha).cuts == pytest.approx(
        [alpha * (math.cos(theta) + math.cos(3 * theta))])
    assert thresholds(3, theta, alpha).labels == ((1, 0), (0, 1))


@pytest.mark.parametrize('n', range(2, 13))
def test_cuts_interleave_with_peaks(n):
    t = thresholds(n, 0.05 / n, 2000.0)
    assert len(t.cuts) == n // 2
    means = t.peak_means
    assert list(means) == sorted(means)
    for k, cut in enumerate(t.cuts):
        assert means[k] < cut < means[k + 1]
        assert cut - means[k] == pytest.approx(means[k + 1] - cut, rel=1e-6)


def test_single_photon_has_one_bin():
    t = thresholds(1, 0.05, 100.0)
    assert t.cuts == ()
    assert classify(t, -1e9) == (0, 0)
    assert classify(t, 1e9) == (0, 0)


def test_zero_nonlinearity_is_degenerate():
    with pytest.raises(DegenerateConfigurationError):
        thresholds(2, 0.0, 100.0)
    with pytest.raises(ParameterError):
        thresholds(2, 0.01, 0.0)


@pytest.mark.parametrize('theta, resolvable', [(1e-5, False), (1e-4, True), (0.01, True)])
def test_interval_count_matches_mixture_components(two_equal_components, theta, resolvable):
    # α = 1：n = 2 的峰间距约为 θ²
    density = outcome_density(evolve_protocol(two_equal_components, theta, 1.0))
    if resolvable:
        assert len(thresholds(2, theta, 1.0).labels) == len(density.components) == 2
    else:
        assert len(density.components) == 1
        with pytest.raises(DegenerateConfigurationError):
            thresholds(2, theta, 1.0)


def test_peak_tolerance_is_shared(two_equal_components):
    joint = evolve_protocol(two_equal_components, 0.01, 1.0)
    assert len(outcome_density(joint, 1e-3).components) == 1
    with pytest.raises(DegenerateConfigurationError):
        thresholds(2, 0.01, 1.0, 1e-3)
    with pytest.raises(DegenerateConfigurationError):
        detect(two_equal_components, 0.01, 1.0, np.random.default_rng(0), tolerance=1e-3)
    with pytest.raises(DegenerateConfigurationError):
        run_simulation(two_equal_components, 0.01, 1.0, 10, seed=1, progress=False, tolerance=1e-3)


def test_classify_bins_and_tie_rule():
    t = thresholds(2, 0.05, 100.0)
    cut = t.cuts[0]
    assert classify(t, 200.0) == (0, 1)
    assert classify(t, 150.0) == (1, 0)
    assert classify(t, cut) == (1, 0)
    assert classify(t, math.nextafter(cut, math.inf)) == (0, 1)
    assert list(classify_many(t, np.array([150.0, cut, 200.0]))) == [1, 1, 0]


def test_classify_n4():
    t = thresholds(4, 0.0025, 1000.0)
    assert classify(t, 1999.0) == (2, 0)
    assert classify(t, 1999.9) == (1, 1)
    assert classify(t, 2000.5) == (0, 2)


def test_correction_phase_values():
    alpha, theta = 200.0, 0.1
    assert correction_phase(2, theta, alpha, 0, 398.0) == 0.0
    expected = alpha * math.sin(theta) * (398.0 - 2 * alpha * math.cos(theta))
    assert correction_phase(2, theta, alpha, 1, 398.0) == pytest.approx(expected, rel=1e-14)
    # 奇数 n：δ = 2φ_j/(2m+1)
    assert correction_phase(3, theta, alpha, 1, 390.0) == pytest.approx(
        2 * phi_j(3, theta, alpha, 1, 390.0) / 3, rel=1e-14)
    with pytest.raises(KerrProtocolError):
        correction_phase(2, theta, alpha, 2, 398.0)


def test_correction_vanishes_at_peak():
    n, theta, alpha = 6, 0.005, 1000.0
    for m in range(n // 2 + 1):
        x = 2.0 * alpha * math.cos(peak_angle(n, theta, m))
        assert correction_phase(n, theta, alpha, m, x) == 0.0


def test_correction_restores_noon_relative_phase():
    alpha, theta, x = 200.0, 0.1, 397.0
    joint = evolve_protocol(noon_state(2), theta, alpha, max_n_theta=None)
    collapsed = collapse(joint, x)
    corrected = phase_shift(collapsed, correction_phase(2, theta, alpha, 1, x), mode=1)
    ratio = corrected.amplitude((2, 0)) / corrected.amplitude((0, 2))
    assert abs(cmath.phase(ratio)) < 1e-10
    assert fidelity(noon_state(2), normalize(corrected)) > 1 - 1e-12


def test_feed_forward_restores_single_level_inputs(rng):
    for n in range(1, 11):
        theta, alpha = 0.05 / n, float(rng.uniform(100.0, 1000.0))
        t = thresholds(n, theta, alpha)
        for l in range(n // 2 + 1):
            a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
            target = build_input_state(spec_from_pairs(n, {l: (complex(a), complex(b))}))
            joint = evolve_protocol(target, theta, alpha)
            m = n // 2 - l
            peak = 2.0 * alpha * math.cos(peak_angle(n, theta, m))
            for x in rng.uniform(peak - 3.0, peak + 3.0, size=50):
                output = phase_shift(collapse(joint, x), correction_phase(n, t.theta, alpha, m, x))
                assert fidelity(target, normalize(output)) > 1 - 1e-10


def test_single_photon_detection_is_identity(rng):
    signal = build_input_state(random_spec(1, rng))
    record = detect(signal, 0.05, 100.0, rng)
    assert (record.bin_m, record.bin_l) == (0, 0)
    assert record.correction == 0.0
    assert record.output.isclose(signal, tol=1e-12)


def test_detection_is_nondestructive(rng):
    for n in (2, 3, 6):
        record = detect(build_input_state(random_spec(n, rng)), 0.05 / n, 5000.0, rng)
        assert record.output.photon_number() == n
        assert record.output.norm() == pytest.approx(1.0, abs=1e-12)
        assert set(record.to_dict()) >= {'x', 'bin_m', 'bin_l', 'correction', 'output'}


def test_noon_detection_matches_error_probability():
    alpha, theta, trials = 200.0, 0.1, 20000
    epsilon = error_probabilities(2, theta, alpha).epsilon_max
    assert epsilon == pytest.approx(0.1591, abs=1e-3)

    report = run_simulation(noon_state(2), theta, alpha, trials, seed=7, max_n_theta=None,
                            progress=False)
    row = report.bins.set_index('m').loc[1]
    sigma = math.sqrt(epsilon * (1 - epsilon) / trials)
    assert int(row['sampled']) == trials
    assert int(row['detected']) / trials == pytest.approx(1 - epsilon, abs=4 * sigma)
    assert float(row['mean_fidelity']) > 1 - 1e-10


def test_conditional_fidelity_grows_with_separation():
    signal = build_input_state(spec_from_pairs(2, {0: (1, 1), 1: (1, 0)}))
    target = entangled_number_state(2, 0)
    theta = 0.05
    fidelities = []
    for alpha in (100.0, 400.0, 1600.0, 6400.0):
        joint = evolve_protocol(signal, theta, alpha)
        x = 2.0 * alpha * math.cos(theta)
        output = phase_shift(collapse(joint, x), correction_phase(2, theta, alpha, 1, x))
        fidelities.append(fidelity(target, normalize(output)))
    assert all(a < b for a, b in zip(fidelities, fidelities[1:]))
    assert fidelities[-1] > 1 - 1e-9


def test_detect_rejects_degenerate_configuration(rng):
    with pytest.raises(DegenerateConfigurationError):
        detect(noon_state(2), 0.0, 100.0, rng)


def test_threshold_set_serialization():
    data = thresholds(4, 0.0025, 1000.0).to_dict()
    assert data['labels'] == [{'m': 2, 'l': 0}, {'m': 1, 'l': 1}, {'m': 0, 'l': 2}]
    assert len(data['peak_means']) == 3
    assert outcome_density(evolve_protocol(noon_state(4), 0.0025, 1000.0)).components[0].m == 2
