import math

import numpy as np
import pytest
from scipy import stats

from qbench.benchmarks.xeb import (
    ideal_probabilities,
    random_circuit,
    rcs_benchmark,
    xeb_estimators,
)
from qbench.dynamics.sequences import make_rng

pytestmark = pytest.mark.invariant


def _instance(n, depth, seed):
    layers = random_circuit(n, depth, make_rng(seed))
    return layers, ideal_probabilities(layers, n)


def test_uniform_samples_score_zero():
    _, p = _instance(5, 10, 1)
    rng = np.random.default_rng(2)
    f_lin, f_unb, _ = xeb_estimators(rng.integers(0, 32, size=200_000), p)
    assert abs(f_lin) < 0.02
    assert abs(f_unb) < 0.02


def test_ideal_samples_score_one():
    _, p = _instance(5, 10, 3)
    rng = np.random.default_rng(4)
    samples = rng.choice(32, size=50_000, p=p)
    _, f_unb, s_log = xeb_estimators(samples, p)
    assert f_unb == pytest.approx(1.0, abs=0.05)
    assert s_log == pytest.approx(-np.sum(p * np.log(p)), abs=0.05)


def test_uniform_ideal_distribution_is_rejected():
    with pytest.raises(ValueError):
        xeb_estimators([0, 1, 2], np.full(4, 0.25))
    with pytest.raises(ValueError):
        xeb_estimators([], np.array([0.7, 0.1, 0.1, 0.1]))


def test_zero_probability_sample_warns():
    with pytest.warns(RuntimeWarning):
        xeb_estimators([3], np.array([0.5, 0.3, 0.2, 0.0]))


def test_deep_circuits_follow_porter_thomas():
    scaled = np.concatenate([32 * _instance(5, 12, 100 + s)[1] for s in range(20)])
    assert stats.kstest(scaled, "expon").pvalue > 0.05


def test_circuit_structure():
    layers = random_circuit(4, 3, make_rng(0))
    assert len(layers) == 3
    two_qubit = [[q for _, q in layer if len(q) == 2] for layer in layers]
    assert two_qubit == [[(0, 1), (2, 3)], [(1, 2)], [(0, 1), (2, 3)]]
    # the opening single-qubit layer is merged into layer one
    assert sum(len(q) == 1 for _, q in layers[0]) == 8
    with pytest.raises(ValueError):
        random_circuit(1, 3, make_rng(0))


def test_noiseless_benchmark_stays_at_one():
    res = rcs_benchmark(4, range(1, 7), L=4, M=400, seed=2)
    assert np.all(res.denominators > 0)
    assert np.all(np.abs(res.mean - 1) < 0.15)
    assert res.lam >= 0


def test_decay_rate_is_independent_of_depth_window():
    early = rcs_benchmark(5, range(1, 7), L=10, pauli_noise=0.05, M=1000, seed=11)
    late = rcs_benchmark(5, range(7, 13), L=10, pauli_noise=0.05, M=1000, seed=12)
    assert not early.flags and not late.flags
    assert abs(early.lam - late.lam) < 2 * math.hypot(early.lam_err, late.lam_err)


def test_too_few_depths_are_flagged():
    res = rcs_benchmark(3, [1, 2, 3], L=2, M=50, seed=0)
    assert res.flags == ["too_few_depths_to_fit"]
    assert math.isnan(res.lam)


def test_benchmark_is_seed_deterministic():
    a = rcs_benchmark(3, range(1, 5), L=2, pauli_noise=0.02, M=100, seed=5)
    b = rcs_benchmark(3, range(1, 5), L=2, pauli_noise=0.02, M=100, seed=5)
    assert np.array_equal(a.f_uxeb, b.f_uxeb)
    assert a.to_dict() == b.to_dict()


def test_bad_arguments_are_rejected():
    with pytest.raises(ValueError):
        rcs_benchmark(13, [1, 2, 3, 4])
    with pytest.raises(ValueError):
        rcs_benchmark(3, [0, 1, 2, 3])
    with pytest.raises(ValueError):
        rcs_benchmark(3, [1, 2, 3, 4], estimator="log")
