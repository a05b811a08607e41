import math

import numpy as np
import pytest
from scipy.integrate import quad

from qbench.pulses import (
    LeakageParams,
    NoiseParams,
    PulseSpec,
    coherent_errors,
    dissipator_bloch,
    gate_hamiltonian,
    leakage_from_config,
    noise_from_config,
    noise_to_config,
    pulse_from_config,
    pulse_to_config,
    thermal_rates,
)

from conftest import DEG

pytestmark = pytest.mark.invariant


@pytest.mark.parametrize("envelope", ["square", "cosine"])
@pytest.mark.parametrize("angle", [math.pi, math.pi / 2])
def test_envelope_integrates_to_rotation_angle(envelope, angle):
    spec = PulseSpec(angle=angle, envelope=envelope)
    area, _ = quad(spec.envelope_value, spec.window_start, spec.window_end, epsabs=0, epsrel=1e-13, limit=200)
    assert abs(area - angle) / angle < 1e-9


def test_padding_carries_no_drive():
    spec = PulseSpec.from_errors(0.5 * DEG, 0.5 * DEG)
    assert spec.window_start == pytest.approx(4e-9)
    assert np.allclose(gate_hamiltonian(spec, 1e-9), 0.0)
    assert not np.allclose(gate_hamiltonian(spec, 40e-9), 0.0)


@pytest.mark.parametrize("eta", [1.0, 0.8, 0.3])
def test_dissipator_is_stable_with_thermal_steady_state(eta):
    noise = NoiseParams(T1=23.36e-6, T2=44.13e-6, eta=eta)
    r, c = dissipator_bloch(noise)
    assert np.all(np.real(np.linalg.eigvals(r)) <= 0)
    steady = -np.linalg.solve(r, c)
    assert np.allclose(steady, [0.0, 0.0, eta], atol=1e-10)


@pytest.mark.parametrize("eta", [1.0, 0.9, 0.5, 0.0])
def test_thermal_rates_reproduce_polarization(eta):
    noise = NoiseParams(T1=20e-6, T2=30e-6, eta=eta)
    up, down = thermal_rates(noise)
    assert up + down == pytest.approx(noise.gamma1, rel=1e-12)
    assert (down - up) / noise.gamma1 == pytest.approx(eta, abs=1e-12)


def test_temperature_and_polarization_agree():
    noise = NoiseParams.from_temperature(T1=20e-6, T2=30e-6, qubit_frequency=2 * math.pi * 5e9,
                                         kT=2 * math.pi * 2e9)
    assert noise.eta == pytest.approx(math.tanh(noise.qubit_frequency / (2 * noise.kT)), rel=1e-12)


def test_pure_dephasing_time():
    noise = NoiseParams(T1=23.36e-6, T2=44.13e-6)
    assert noise.Tphi == pytest.approx(2 * noise.T1 * noise.T2 / (2 * noise.T1 - noise.T2), rel=1e-12)


@pytest.mark.parametrize("dtheta,dphi", [(0.398, 0.426), (-1.5, 0.9), (0.0, -2.0)])
@pytest.mark.parametrize("envelope", ["square", "cosine"])
def test_coherent_errors_round_trip(dtheta, dphi, envelope):
    spec = PulseSpec.from_errors(dtheta * DEG, dphi * DEG, envelope=envelope)
    got = coherent_errors(spec)
    assert got[0] == pytest.approx(dtheta * DEG, abs=1e-12)
    assert got[1] == pytest.approx(dphi * DEG, abs=1e-12)


def test_negative_pulse_flips_drive_and_amplitude_error():
    spec = PulseSpec.from_errors(0.5 * DEG, 0.7 * DEG)
    neg = spec.flipped()
    assert neg.sign == -spec.sign
    h_pos = gate_hamiltonian(spec, 44e-9)
    h_neg = gate_hamiltonian(neg, 44e-9)
    # drive terms flip together with the amplitude error, the detuning stays
    assert np.allclose(np.diag(h_pos), np.diag(h_neg))
    assert np.allclose(h_pos[0, 1], -h_neg[0, 1])


def test_pulse_config_units_round_trip():
    cfg = {"gate_duration_ns": 88, "active_window_ns": 80, "rotation_error_deg": 0.398,
           "phase_error_deg": 0.426, "envelope": "cosine", "axis": "y", "sign": -1}
    spec = pulse_from_config(cfg)
    assert spec.gate_duration == pytest.approx(88e-9)
    assert spec.active_window == pytest.approx(80e-9)
    assert coherent_errors(spec)[0] == pytest.approx(0.398 * DEG)
    back = pulse_to_config(spec)
    for key, value in cfg.items():
        if isinstance(value, str):
            assert back[key] == value
        else:
            assert back[key] == pytest.approx(value, rel=1e-12)


def test_noise_config_units_round_trip():
    cfg = {"T1_ns": 23360, "T2_ns": 44130, "qubit_frequency_MHz": 5000, "eta": 0.8}
    noise = noise_from_config(cfg)
    assert noise.T1 == pytest.approx(23.36e-6)
    assert noise.qubit_frequency == pytest.approx(2 * math.pi * 5e9)
    back = noise_to_config(noise)
    for key, value in cfg.items():
        assert back[key] == pytest.approx(value)


def test_leakage_config_uses_angular_frequency():
    lp = leakage_from_config({"anharmonicity_MHz": -150})
    assert lp.anharmonicity == pytest.approx(-2 * math.pi * 150e6)
    assert isinstance(lp, LeakageParams)


def test_invalid_noise_is_rejected():
    with pytest.raises(ValueError):
        NoiseParams(T1=10e-6, T2=30e-6)
