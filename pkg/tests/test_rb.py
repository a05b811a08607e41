import math

import numpy as np
import pytest

from qbench.benchmarks.clifford import PULSE_UNITARIES, clifford_group, ptm
from qbench.benchmarks.rb import (
    CliffordNoiseModel,
    irb_error_bound,
    irb_run,
    rb_infidelity,
    rb_run,
)
from qbench.core import pauli_matrices
from qbench.pulses import NoiseParams, PulseSpec

pytestmark = pytest.mark.invariant

SHORT_DEPTHS = (2, 4, 8, 16, 32, 64, 128, 256)


def _equal_up_to_phase(a, b, atol=1e-10):
    k = np.argmax(np.abs(b))
    phase = a.flat[k] / b.flat[k]
    return abs(abs(phase) - 1) < atol and np.allclose(a, phase * b, atol=atol)


def test_clifford_group_tables_are_exhaustively_consistent():
    g = clifford_group()
    assert len(g.unitaries) == 24
    eye = np.eye(2)
    for i, u in enumerate(g.unitaries):
        assert _equal_up_to_phase(g.unitaries[g.inverse[i]] @ u, eye)
        for j, v in enumerate(g.unitaries):
            assert _equal_up_to_phase(g.unitaries[g.multiply[i, j]], u @ v)


def test_cliffords_map_paulis_to_paulis():
    paulis = pauli_matrices(1)[1:]
    for u in clifford_group().unitaries:
        for p in paulis:
            image = u @ p @ u.conj().T
            assert any(np.allclose(image, s * q) for q in paulis for s in (1, -1))


def test_decompositions_reproduce_the_unitaries():
    g = clifford_group()
    for u, pulses in zip(g.unitaries, g.decompositions):
        assert len(pulses) <= 3
        total = np.eye(2, dtype=complex)
        for name in pulses:
            total = PULSE_UNITARIES[name] @ total
        assert _equal_up_to_phase(total, u)


def test_half_pulses_dominate_the_decompositions():
    pulses = [p for d in clifford_group().decompositions for p in d]
    half = sum("90" in p for p in pulses) / len(pulses)
    assert half == pytest.approx(0.8, abs=0.05)


def test_ideal_pulses_reproduce_clifford_ptms():
    model = CliffordNoiseModel.from_pulses(PulseSpec(), NoiseParams())
    assert np.max(np.abs(model.maps - clifford_group().ptms)) < 1e-9
    assert np.allclose(ptm(np.eye(2)), np.eye(4))


@pytest.mark.parametrize("p", [0.99, 0.995, 0.999])
def test_depolarizing_noise_gives_exact_exponential(p):
    r = rb_run(CliffordNoiseModel.depolarizing(p), depths=SHORT_DEPTHS, K=5, shots=0, seed=1)
    assert abs(r.p - p) < 1e-6
    assert np.max(np.abs(r.fit.residuals)) < 1e-10
    assert 0 < r.p <= 1
    assert r.r_C == pytest.approx(rb_infidelity(r.p), abs=1e-15)
    assert r.r_C == pytest.approx((1 - r.p) / 2, abs=1e-15)


def test_ideal_model_is_flagged_flat():
    r = rb_run(CliffordNoiseModel.ideal(), depths=SHORT_DEPTHS, K=3, shots=0, seed=0)
    assert r.flags == ["flat_curve"]
    assert r.p == 1.0 and r.r_C == 0.0


def test_rb_is_seed_deterministic():
    model = CliffordNoiseModel.depolarizing(0.99)
    a = rb_run(model, depths=SHORT_DEPTHS, K=4, shots=100, seed=12)
    b = rb_run(model, depths=SHORT_DEPTHS, K=4, shots=100, seed=12)
    assert np.array_equal(a.survival, b.survival)


def test_irb_recovers_injected_gate_error():
    model = CliffordNoiseModel.depolarizing(0.995)
    base = rb_run(model, depths=SHORT_DEPTHS, K=5, shots=0, seed=2)
    q = 0.99
    extra = np.diag([1.0, q, q, q])
    gate = 5
    res = irb_run(model, gate, base, gate_map=extra @ clifford_group().ptms[gate], seed=3)
    assert res.r_G == pytest.approx((1 - q) / 2, abs=1e-9)
    assert res.valid
    assert res.E >= 0


def test_irb_flags_unphysical_outcomes_without_raising():
    noisy_base = rb_run(CliffordNoiseModel.depolarizing(0.99), depths=SHORT_DEPTHS, K=5, shots=0, seed=2)
    cleaner = CliffordNoiseModel.depolarizing(0.995)
    res = irb_run(cleaner, 0, noisy_base, gate_map=np.eye(4), seed=3)
    assert res.r_G < 0
    assert "negative_error_rate" in res.flags
    assert not res.valid


def test_irb_bound_vanishes_without_noise():
    assert irb_error_bound(1.0, 1.0) == 0.0
    assert irb_error_bound(0.99, 0.98) > 0


def test_irb_rejects_bad_gate_index():
    base = rb_run(CliffordNoiseModel.depolarizing(0.99), depths=SHORT_DEPTHS, K=3, shots=0, seed=0)
    with pytest.raises(ValueError):
        irb_run(CliffordNoiseModel.depolarizing(0.99), 24, base)


def test_coherent_phase_error_barely_moves_exact_rb():
    noise = NoiseParams(T1=23.36e-6, T2=44.13e-6)
    depths = (2, 8, 32, 100, 200, 400, 700)
    base = rb_run(CliffordNoiseModel.from_pulses(PulseSpec(), noise), depths=depths, K=10, shots=0, seed=4)
    tilted = CliffordNoiseModel.from_pulses(PulseSpec.from_errors(0.0, math.radians(0.9)), noise)
    moved = rb_run(tilted, depths=depths, K=10, shots=0, seed=4)
    assert abs(moved.r_C - base.r_C) * 100 < 0.05
