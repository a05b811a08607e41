import math

import numpy as np
import pytest

from qbench.benchmarks.pfe import (
    hadamard_cz_circuit,
    pfe_estimator,
    pfe_exact,
    pfe_naive_estimator,
    pfe_probabilities,
    pfe_run,
    white_noise_channel,
)
from qbench.core import QuantumChannel, depolarizing_channel, random_channel, random_unitary

pytestmark = pytest.mark.invariant


def _noisy(u, inner):
    return QuantumChannel.from_superop(np.kron(u.conj(), u) @ inner.superop)


def test_perfect_gate_has_unit_fidelity(rng):
    u = random_unitary(8, rng)
    res = pfe_run(u, QuantumChannel.from_unitary(u), m=20, seed=1)
    assert res.F_squared == pytest.approx(1.0, abs=1e-12)
    assert res.F == pytest.approx(1.0, abs=1e-12)


def test_white_noise_gives_uniform_probabilities(rng):
    u = hadamard_cz_circuit(3, 2)
    x = pfe_probabilities(u, white_noise_channel(0.05, 3).compose(QuantumChannel.from_unitary(u)))
    assert np.allclose(x, 1 - 0.05 + 0.05 / 8)
    assert pfe_exact(u, white_noise_channel(0.05, 3).compose(QuantumChannel.from_unitary(u))) == pytest.approx(
        1 - 0.05 + 0.05 / 8)


def test_white_noise_parameter_mapping():
    rho = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)
    out = white_noise_channel(0.2, 2).apply(rho)
    assert np.allclose(out, 0.8 * rho + 0.2 * np.eye(4) / 4)
    with pytest.raises(ValueError):
        white_noise_channel(1.5, 1)


def test_hadamard_cz_circuit_is_unitary_and_entangling():
    u = hadamard_cz_circuit(3, 2)
    assert np.allclose(u.conj().T @ u, np.eye(8))
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    assert np.allclose(hadamard_cz_circuit(1, 1), h)
    cz = np.diag([1, 1, 1, -1])
    assert np.allclose(hadamard_cz_circuit(2, 1), cz @ np.kron(h, h))


def test_estimator_needs_two_samples():
    with pytest.raises(ValueError):
        pfe_estimator([0.9])
    with pytest.raises(ValueError):
        pfe_run(np.eye(2), depolarizing_channel(0.1), m=1)


def test_bias_corrected_estimator_is_unbiased_and_naive_is_not(rng):
    u = random_unitary(4, rng)
    # a generic channel spreads the X_k so the naive estimator's bias is visible
    ch = _noisy(u, random_channel(4, rng, rank=2))
    ch = QuantumChannel.from_superop(0.3 * ch.superop + 0.7 * np.kron(u.conj(), u))
    exact = pfe_exact(u, ch)
    x_all = pfe_probabilities(u, ch)
    runs = [pfe_run(u, ch, m=2, seed=s) for s in range(1000)]
    est = np.array([r.F_squared for r in runs])
    naive = np.array([r.naive for r in runs])
    se = est.std(ddof=1) / math.sqrt(est.size)
    assert abs(est.mean() - exact) < 3 * se
    predicted_bias = (x_all.mean() - np.mean(np.sqrt(x_all)) ** 2) / 2
    assert predicted_bias > 0
    assert naive.mean() - exact > 0
    assert naive.mean() - exact == pytest.approx(predicted_bias, abs=3 * naive.std(ddof=1) / math.sqrt(naive.size))


def test_estimators_on_known_samples():
    x = np.array([0.81, 0.64])
    assert pfe_naive_estimator(x) == pytest.approx(0.85**2)
    assert pfe_estimator(x) == pytest.approx(2 * 0.85**2 - 1.45 / 2)


def test_shot_mode_is_deterministic_and_bounded():
    u = hadamard_cz_circuit(2, 1)
    ch = white_noise_channel(0.1, 2).compose(QuantumChannel.from_unitary(u))
    a = pfe_run(u, ch, m=10, shots=100, seed=3)
    b = pfe_run(u, ch, m=10, shots=100, seed=3)
    assert a.F_squared == b.F_squared
    assert np.all((a.probabilities >= 0) & (a.probabilities <= 1))


def test_callable_oracle_is_accepted(rng):
    u = random_unitary(2, rng)
    ch = QuantumChannel.from_unitary(u)
    assert pfe_exact(u, ch.apply) == pytest.approx(1.0)
