import functools
import math

import numpy as np
import pytest

from qbench.core import QuantumChannel, depolarizing_channel, random_channel, random_unitary
from qbench.tomography.aapt import NotFaithfulError, aapt, maximally_entangled
from qbench.tomography.dcqd import DCQDConfig, dcqd_resource_count, dcqd_single_qubit
from qbench.tomography.gst import (
    gst_design,
    gst_fit,
    gst_simulate_dataset,
    gst_target_model,
)
from qbench.tomography.oracle import ChannelOracle
from qbench.tomography.sqpt import sqpt

pytestmark = pytest.mark.invariant


def _chi_frobenius(a, b):
    return float(np.linalg.norm(a.data - b.data))


def test_three_reconstructions_agree_on_random_channels(rng):
    for _ in range(5):
        ch = random_channel(2, rng, rank=3)
        truth = ch.chi()
        s, a, d = sqpt(ChannelOracle(ch)), aapt(ChannelOracle(ch)), dcqd_single_qubit(ChannelOracle(ch))
        assert _chi_frobenius(s, truth) < 1e-8
        assert _chi_frobenius(a, s) < 1e-8
        assert _chi_frobenius(d, s) < 1e-8


def test_configuration_counts():
    ch = depolarizing_channel(0.1)
    o_s, o_d = ChannelOracle(ch), ChannelOracle(ch)
    sqpt(o_s)
    dcqd_single_qubit(o_d)
    assert o_s.configurations == 16
    assert o_d.configurations == 4
    assert dcqd_resource_count(1) == (16, 4)
    assert dcqd_resource_count(2) == (256, 16)


def test_reconstructed_chi_is_a_valid_process(rng):
    ch = random_channel(2, rng)
    chi = sqpt(ChannelOracle(ch))
    assert np.min(np.linalg.eigvalsh(chi.data)) > -1e-8
    assert chi.completeness_defect() < 1e-8


def test_finite_shot_error_shrinks_with_shots(rng):
    ch = random_channel(2, rng)
    truth = ch.chi()
    errors = []
    for shots in (100, 1_000, 10_000):
        trials = [_chi_frobenius(sqpt(ChannelOracle(ch, shots=shots, seed=s)).project_psd(), truth) for s in range(10)]
        errors.append(np.mean(trials))
    assert errors[0] > errors[1] > errors[2]
    # the error scales roughly like one over root shots
    assert errors[0] / errors[2] > 4


def test_dcqd_rejects_degenerate_amplitudes():
    with pytest.raises(ValueError):
        DCQDConfig(alpha=1 / math.sqrt(2), beta=1 / math.sqrt(2))
    with pytest.raises(ValueError):
        DCQDConfig(alpha=1.0, beta=0.0)


def test_aapt_rejects_product_input():
    ch = depolarizing_channel(0.1)
    product = np.kron(np.diag([1.0, 0.0]), np.diag([1.0, 0.0])).astype(complex)
    with pytest.raises(NotFaithfulError):
        aapt(ChannelOracle(ch), product)
    phi = maximally_entangled(2)
    assert np.trace(phi) == pytest.approx(1.0)


def test_gst_recovers_gauge_invariant_quantities():
    truth = gst_target_model(depolarizing=0.02)
    design = gst_design()
    data = gst_simulate_dataset(truth, design, 2000, seed=3)
    fitted = gst_fit(data)
    p_true = truth.probabilities(design)
    z = np.abs(fitted.predicted - p_true) / np.sqrt(data.sigma2)
    assert np.max(z) < 3
    for chi in (fitted.model.chi(g) for g in fitted.model.gates):
        assert np.min(np.linalg.eigvalsh(chi)) > -1e-9
    assert fitted.model.tp_defect() < 1e-6


@functools.lru_cache(maxsize=None)
def _eigenvalue_error(shots, seed=0):
    truth = gst_target_model(depolarizing=0.02)
    fitted = gst_fit(gst_simulate_dataset(truth, gst_design(), shots, seed=seed))
    true_mod, fit_mod = truth.eigenvalue_moduli(), fitted.eigenvalue_moduli()
    return max(float(np.max(np.abs(fit_mod[g] - true_mod[g]))) for g in true_mod)


def test_gst_eigenvalue_error_shrinks_with_shots():
    assert _eigenvalue_error(2_000) > 5 * _eigenvalue_error(2_000_000)


@pytest.mark.xfail(strict=True, reason="2000 shots of length-one sequences resolve eigenvalue moduli to about 1e-2")
def test_gst_eigenvalue_moduli_within_1e3_at_2000_shots():
    assert _eigenvalue_error(2_000) < 1e-3


def test_gst_predictions_are_gauge_invariant(rng):
    truth = gst_target_model(overrotation={"Gx": math.radians(0.5)}, depolarizing=0.02)
    design = gst_design()
    # a unitary frame change is a gauge transformation that keeps the SPAM operators Hermitian
    u = random_unitary(2, rng)
    s = np.kron(u.conj(), u)
    gates = {g: s @ m @ s.conj().T for g, m in truth.gates.items()}
    moved = type(truth)(u @ truth.rho @ u.conj().T, u @ truth.effect @ u.conj().T, gates)
    assert not np.allclose(moved.gates["Gx"], truth.gates["Gx"])
    assert np.allclose(moved.probabilities(design), truth.probabilities(design), atol=1e-12)


def test_identity_channel_has_unit_chi_entry():
    chi = sqpt(ChannelOracle(QuantumChannel.identity(2)))
    assert chi.data[0, 0] == pytest.approx(1.0, abs=1e-12)
