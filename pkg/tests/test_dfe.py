import math

import numpy as np
import pytest

from qbench.benchmarks.dfe import (
    dfe_failure_bound,
    dfe_plan,
    dfe_process,
    dfe_relevant_pairs,
    dfe_state,
    pauli_coefficients,
    random_stabilizer_state,
)
from qbench.benchmarks.pfe import white_noise_channel
from qbench.core import QuantumChannel, depolarizing_channel, random_channel, random_density_matrix, random_unitary

pytestmark = pytest.mark.invariant

BELL = np.outer([1, 0, 0, 1], [1, 0, 0, 1]) / 2


def test_importance_weights_are_normalized(rng):
    psi = random_unitary(8, rng)[:, 0]
    for sigma in (BELL, np.outer(psi, psi.conj())):
        plan = dfe_plan(sigma, seed=0, N=10)
        assert abs(plan.probabilities.sum() - 1) < 1e-12


def test_full_sum_of_the_estimator_is_the_overlap(rng):
    psi = random_unitary(4, rng)[:, 0]
    sigma = np.outer(psi, psi.conj())
    rho = random_density_matrix(4, rng)
    s, r = pauli_coefficients(sigma), pauli_coefficients(rho)
    support = np.abs(s) > 1e-10
    weights = s[support] ** 2 / 4
    estimate = float(np.sum(weights * r[support] / s[support]))
    assert estimate == pytest.approx(np.real(np.trace(sigma @ rho)), abs=1e-12)


def test_mixed_target_is_rejected():
    with pytest.raises(ValueError):
        dfe_plan(np.eye(4) / 4, seed=0)


def test_stabilizer_state_has_flat_support(rng):
    psi = random_stabilizer_state(3, rng)
    sigma = np.outer(psi, psi.conj())
    coeff = pauli_coefficients(sigma)
    support = coeff[np.abs(coeff) > 1e-10]
    assert support.size == 8
    assert np.allclose(np.abs(support), 1.0)
    assert dfe_state(sigma, sigma, seed=1, exact=True).estimate == pytest.approx(1.0, abs=1e-12)


def test_estimator_is_unbiased(rng):
    sigma = BELL
    rho = 0.7 * BELL + 0.3 * random_density_matrix(4, rng)
    truth = float(np.real(np.trace(sigma @ rho)))
    est = np.array([dfe_state(sigma, rho, seed=s, N=40, shots_per_index=10).estimate for s in range(1000)])
    se = est.std(ddof=1) / math.sqrt(est.size)
    assert abs(est.mean() - truth) < 3 * se


def test_default_budget_meets_the_target_bound():
    res = dfe_state(BELL, BELL, epsilon1=0.05, epsilon2=0.05, delta=0.2, seed=3)
    assert res.N == math.ceil(2 / (0.2 * 0.05**2))
    assert res.failure_bound <= 0.2 + 1e-12


def test_failure_bound_terms():
    sig = np.ones(100)
    assert dfe_failure_bound(100, sig, 0, 0.1, 0.1) == pytest.approx(1.0)
    b = dfe_failure_bound(1000, np.ones(1000), 50, 0.1, 0.05)
    assert b == pytest.approx(0.1 + 2 * math.exp(-0.5 * 0.05**2 * 1000**2 / (1000 / 50)))


def test_relevant_pairs_of_hadamard():
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    pairs, chi = dfe_relevant_pairs(h)
    assert sorted(map(tuple, pairs.tolist())) == [(0, 0), (1, 3), (2, 2), (3, 1)]
    assert np.allclose(np.abs(chi[pairs[:, 0], pairs[:, 1]]), 2.0)


def test_process_estimate_matches_entanglement_fidelity(rng):
    u = random_unitary(4, rng)
    target = QuantumChannel.from_unitary(u)
    noisy = white_noise_channel(0.1, 2).compose(target)
    res = dfe_process(u, noisy, samples=300, shots=0, seed=4)
    # the identity pair survives white noise untouched; every other pair shrinks by 1 - lam
    assert abs(res.F_proc - res.F_e) < 3 * res.sem
    assert res.F_e == pytest.approx(1 - 0.1 * 15 / 16, abs=1e-12)
    assert res.F_avg == pytest.approx((4 * res.F_proc + 1) / 5)


def test_process_estimate_is_unbiased_for_generic_noise(rng):
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    noisy = random_channel(2, rng, rank=2)
    noisy = QuantumChannel.from_superop(0.1 * noisy.superop + 0.9 * np.kron(h.conj(), h), validate=False)
    res = dfe_process(h, noisy, samples=4000, shots=0, seed=5)
    assert abs(res.F_proc - res.F_e) < 3 * res.sem + 1e-12


def test_process_rejects_mismatched_dimensions():
    with pytest.raises(ValueError):
        dfe_process(np.eye(2), depolarizing_channel(0.1, 2))
