"""Pulse and noise parametrization for driven single-qubit gates.

Everything here is SI internally: seconds, rad/s, radians. Conversions to the
laboratory units used in configuration files (ns, MHz, degrees) live in
:func:`pulse_from_config` / :func:`noise_from_config` and their inverses.

The drive Hamiltonian inside the active window is

    H(t) = (eps(t) + eps') sigma_phi / 2 + delta sigma_z / 2,

with ``sigma_phi = cos(phi) sigma_x + sin(phi) sigma_y``. Outside the window
(the symmetric padding) the Hamiltonian vanishes. A negative ``sign`` rotates
the drive axis by pi, which flips both the envelope and the amplitude error
while leaving the detuning untouched.

Coherent errors are quoted over the active window of length ``tau``:
``dtheta = eps' * tau`` and ``dphi = delta * tau / theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import PAULI_1Q

__all__ = [
    "PulseSpec",
    "NoiseParams",
    "LeakageParams",
    "gate_hamiltonian",
    "coherent_errors",
    "induced_rotation_error",
    "dissipator_bloch",
    "thermal_rates",
    "lindblad_operators",
    "qutrit_hamiltonian",
    "pulse_from_config",
    "noise_from_config",
    "pulse_to_config",
    "noise_to_config",
    "PULSE_SCHEMA",
    "NOISE_SCHEMA",
    "LEAKAGE_SCHEMA",
    "leakage_from_config",
    "DEFAULT_GATE_DURATION",
    "DEFAULT_ACTIVE_WINDOW",
]

DEFAULT_GATE_DURATION = 88e-9
DEFAULT_ACTIVE_WINDOW = 80e-9
_AXIS_ANGLE = {"x": 0.0, "y": 0.5 * math.pi}


@dataclass(frozen=True)
class PulseSpec:
    """A single drive pulse with injected coherent errors.

    ``phase`` is an extra rotation of the drive axis in the xy plane; composite
    sequences such as UR6 use it to realize pulses about tilted axes.
    """

    axis: str = "x"
    sign: int = 1
    angle: float = math.pi
    gate_duration: float = DEFAULT_GATE_DURATION
    active_window: float = DEFAULT_ACTIVE_WINDOW
    envelope: str = "square"
    amplitude_error: float = 0.0
    detuning_error: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.axis not in _AXIS_ANGLE:
            raise ValueError(f"axis must be 'x' or 'y', got {self.axis!r}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.envelope not in ("square", "cosine"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if not self.gate_duration > 0:
            raise ValueError("gate duration must be positive")
        if not 0 < self.active_window <= self.gate_duration * (1 + 1e-12):
            raise ValueError("active window must lie in (0, gate_duration]")
        if not self.angle > 0:
            raise ValueError("nominal angle must be positive; use sign for negative rotations")

    # geometry -------------------------------------------------------------
    @property
    def window_start(self) -> float:
        return 0.5 * (self.gate_duration - self.active_window)

    @property
    def window_end(self) -> float:
        return self.window_start + self.active_window

    @property
    def mean_amplitude(self) -> float:
        """Average drive amplitude over the active window, theta / tau."""
        return self.angle / self.active_window

    @property
    def axis_angle(self) -> float:
        """Azimuth of the effective drive axis, including the sign flip."""
        phi = _AXIS_ANGLE[self.axis] + self.phase
        return phi + math.pi if self.sign < 0 else phi

    def in_window(self, t: float) -> bool:
        return self.window_start <= t <= self.window_end

    def envelope_value(self, t):
        """Error-free drive amplitude eps(t) >= 0 (vectorized)."""
        t = np.asarray(t, dtype=float)
        inside = (t >= self.window_start) & (t <= self.window_end)
        if self.envelope == "square":
            val = np.full_like(t, self.mean_amplitude)
        else:
            s = np.sin(math.pi * (t - self.window_start) / self.active_window)
            val = 2.0 * self.mean_amplitude * s * s
        return np.where(inside, val, 0.0)

    def bloch_field(self, t: float) -> np.ndarray:
        """Rotation vector h(t) with H = h . sigma / 2."""
        if not self.in_window(t):
            return np.zeros(3)
        amp = float(self.envelope_value(t)) + self.amplitude_error
        phi = self.axis_angle
        return np.array([amp * math.cos(phi), amp * math.sin(phi), self.detuning_error])

    def field_array(self, ts) -> np.ndarray:
        """Vectorized :meth:`bloch_field`; returns shape (len(ts), 3)."""
        ts = np.asarray(ts, dtype=float)
        inside = (ts >= self.window_start) & (ts <= self.window_end)
        amp = np.where(inside, self.envelope_value(ts) + self.amplitude_error, 0.0)
        phi = self.axis_angle
        return np.stack([amp * math.cos(phi), amp * math.sin(phi),
                         np.where(inside, self.detuning_error, 0.0)], axis=-1)

    def constant_field(self) -> np.ndarray:
        """Field during the window for square pulses."""
        if self.envelope != "square":
            raise ValueError("constant field only defined for square pulses")
        return self.bloch_field(self.window_start + 0.5 * self.active_window)

    # error bookkeeping ------------------------------------------------------
    @classmethod
    def from_errors(cls, dtheta: float = 0.0, dphi: float = 0.0, **kw) -> "PulseSpec":
        """Build a pulse whose coherent errors are ``(dtheta, dphi)``."""
        base = cls(**kw)
        tau = base.active_window
        return replace(base, amplitude_error=dtheta / tau, detuning_error=dphi * base.angle / tau)

    def with_errors(self, dtheta: float, dphi: float) -> "PulseSpec":
        tau = self.active_window
        return replace(self, amplitude_error=dtheta / tau, detuning_error=dphi * self.angle / tau)

    def flipped(self) -> "PulseSpec":
        return replace(self, sign=-self.sign)


def gate_hamiltonian(spec: PulseSpec, t: float) -> np.ndarray:
    """2x2 Hamiltonian at time ``t`` within the pulse (rad/s)."""
    if t < -1e-18 or t > spec.gate_duration * (1 + 1e-12):
        raise ValueError(f"time {t} outside pulse of duration {spec.gate_duration}")
    h = spec.bloch_field(t)
    return 0.5 * (h[0] * PAULI_1Q["X"] + h[1] * PAULI_1Q["Y"] + h[2] * PAULI_1Q["Z"])


def coherent_errors(spec: PulseSpec) -> tuple[float, float]:
    """Rotation error and phase error ``(dtheta, dphi)`` in radians."""
    if spec.angle == 0:
        raise ValueError("phase error undefined for a zero-angle pulse")
    tau = spec.active_window
    return spec.amplitude_error * tau, spec.detuning_error * tau / spec.angle


def induced_rotation_error(dphi: float, theta: float) -> float:
    """Second-order rotation error theta * dphi**2 / 2 produced by a phase error."""
    return 0.5 * theta * dphi * dphi


# ---------------------------------------------------------------------------
# decoherence
# ---------------------------------------------------------------------------


def _rate(t: float) -> float:
    return 0.0 if math.isinf(t) else 1.0 / t


@dataclass(frozen=True)
class NoiseParams:
    """Markovian relaxation and dephasing with a thermal polarization ``eta``.

    ``eta = 1`` is zero temperature; ``eta = 0`` is infinite temperature.
    """

    T1: float = math.inf
    T2: float = math.inf
    qubit_frequency: float = 2 * math.pi * 5e9
    eta: float = 1.0

    def __post_init__(self):
        if not (self.T1 > 0 and self.T2 > 0):
            raise ValueError("T1 and T2 must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.gamma_phi < -1e-9 * max(self.gamma1, 1.0):
            raise ValueError(f"T2 = {self.T2} exceeds 2*T1 = {2 * self.T1}")

    @classmethod
    def from_temperature(cls, T1: float, T2: float, qubit_frequency: float, kT: float) -> "NoiseParams":
        """``kT`` is the thermal energy expressed as an angular frequency (k_B T / hbar)."""
        if kT < 0:
            raise ValueError("temperature must be non-negative")
        if kT == 0:
            eta = 1.0
        elif math.isinf(kT):
            eta = 0.0
        else:
            eta = math.tanh(0.5 * qubit_frequency / kT)
        return cls(T1=T1, T2=T2, qubit_frequency=qubit_frequency, eta=eta)

    @property
    def gamma1(self) -> float:
        return _rate(self.T1)

    @property
    def gamma2(self) -> float:
        return _rate(self.T2)

    @property
    def gamma_phi(self) -> float:
        # (2 T1 - T2) / (2 T1 T2) written so that infinite times behave
        return _rate(self.T2) - 0.5 * _rate(self.T1)

    @property
    def Tphi(self) -> float:
        g = self.gamma_phi
        return math.inf if g <= 0 else 1.0 / g

    @property
    def kT(self) -> float:
        """Thermal energy as an angular frequency; 0 at eta=1 and inf at eta=0."""
        if self.eta >= 1.0:
            return 0.0
        if self.eta <= 0.0:
            return math.inf
        return self.qubit_frequency / math.log((1 + self.eta) / (1 - self.eta))

    def with_eta(self, eta: float) -> "NoiseParams":
        return replace(self, eta=eta)


def dissipator_bloch(noise: NoiseParams) -> tuple[np.ndarray, np.ndarray]:
    """Relaxation matrix R and drift c of the Bloch equation."""
    g1, g2 = noise.gamma1, noise.gamma2
    return np.diag([-g2, -g2, -g1]), np.array([0.0, 0.0, noise.eta * g1])


def thermal_rates(noise: NoiseParams) -> tuple[float, float]:
    """Upward and downward rates (gamma_plus, gamma_minus) obeying detailed balance."""
    g1 = noise.gamma1
    return 0.5 * g1 * (1 - noise.eta), 0.5 * g1 * (1 + noise.eta)


_SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, decay towards |0>
_SIGMA_PLUS = _SIGMA_MINUS.conj().T


def lindblad_operators(noise: NoiseParams) -> list[tuple[np.ndarray, float]]:
    deph = (PAULI_1Q["Z"] / math.sqrt(2), max(noise.gamma_phi, 0.0))
    if noise.eta >= 1.0:
        return [(_SIGMA_MINUS, noise.gamma1), deph]
    gp, gm = thermal_rates(noise)
    return [(_SIGMA_MINUS, gm), (_SIGMA_PLUS, gp), deph]


# ---------------------------------------------------------------------------
# leakage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeakageParams:
    anharmonicity: float = -2 * math.pi * 150e6
    matrix_element_ratio: float = math.sqrt(2)

    def __post_init__(self):
        if self.anharmonicity == 0:
            raise ValueError("anharmonicity must be non-zero")


def qutrit_hamiltonian(spec: PulseSpec, lp: LeakageParams, t: float) -> np.ndarray:
    """Three-level drive Hamiltonian in the frame rotating at the qubit frequency."""
    if t < -1e-18 or t > spec.gate_duration * (1 + 1e-12):
        raise ValueError(f"time {t} outside pulse of duration {spec.gate_duration}")
    h = np.zeros((3, 3), dtype=complex)
    h[:2, :2] = gate_hamiltonian(spec, t)
    h[2, 2] = lp.anharmonicity
    if spec.in_window(t):
        amp = float(spec.envelope_value(t)) + spec.amplitude_error
        coupling = 0.5 * lp.matrix_element_ratio * amp * np.exp(-1j * spec.axis_angle)
        h[1, 2] = coupling
        h[2, 1] = np.conj(coupling)
    return h


# ---------------------------------------------------------------------------
# configuration boundary (ns, MHz, degrees)
# ---------------------------------------------------------------------------

PULSE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "axis": {"enum": ["x", "y"]},
        "sign": {"enum": [1, -1]},
        "angle_deg": {"type": "number", "exclusiveMinimum": 0},
        "gate_duration_ns": {"type": "number", "exclusiveMinimum": 0},
        "active_window_ns": {"type": "number", "exclusiveMinimum": 0},
        "envelope": {"enum": ["square", "cosine"]},
        "rotation_error_deg": {"type": "number"},
        "phase_error_deg": {"type": "number"},
        "phase_deg": {"type": "number"},
    },
}

NOISE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "T1_ns": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "T2_ns": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "qubit_frequency_MHz": {"type": "number", "exclusiveMinimum": 0},
        "eta": {"type": "number", "minimum": 0, "maximum": 1},
        "kT_MHz": {"type": "number", "minimum": 0},
    },
}

LEAKAGE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "anharmonicity_MHz": {"type": "number"},
        "matrix_element_ratio": {"type": "number"},
    },
}

_MHZ = 2 * math.pi * 1e6  # cyclic MHz -> rad/s


def pulse_from_config(cfg: dict) -> PulseSpec:
    """Build a pulse from boundary units. Errors are given as angles in degrees."""
    tg = cfg.get("gate_duration_ns", DEFAULT_GATE_DURATION * 1e9) * 1e-9
    tau = cfg.get("active_window_ns", min(DEFAULT_ACTIVE_WINDOW * 1e9, tg * 1e9)) * 1e-9
    base = PulseSpec(
        axis=cfg.get("axis", "x"),
        sign=cfg.get("sign", 1),
        angle=math.radians(cfg.get("angle_deg", 180.0)),
        gate_duration=tg,
        active_window=tau,
        envelope=cfg.get("envelope", "square"),
        phase=math.radians(cfg.get("phase_deg", 0.0)),
    )
    return base.with_errors(math.radians(cfg.get("rotation_error_deg", 0.0)),
                            math.radians(cfg.get("phase_error_deg", 0.0)))


def pulse_to_config(spec: PulseSpec) -> dict:
    dth, dph = coherent_errors(spec)
    return {
        "axis": spec.axis,
        "sign": spec.sign,
        "angle_deg": math.degrees(spec.angle),
        "gate_duration_ns": spec.gate_duration * 1e9,
        "active_window_ns": spec.active_window * 1e9,
        "envelope": spec.envelope,
        "rotation_error_deg": math.degrees(dth),
        "phase_error_deg": math.degrees(dph),
        "phase_deg": math.degrees(spec.phase),
    }


def noise_from_config(cfg: dict) -> NoiseParams:
    """Times in ns (``null`` means infinite); frequencies as cyclic MHz."""
    t1 = cfg.get("T1_ns")
    t2 = cfg.get("T2_ns")
    t1 = math.inf if t1 is None else t1 * 1e-9
    t2 = math.inf if t2 is None else t2 * 1e-9
    w01 = cfg.get("qubit_frequency_MHz", 5000.0) * _MHZ
    if "kT_MHz" in cfg:
        if "eta" in cfg:
            raise ValueError("give either eta or kT_MHz, not both")
        return NoiseParams.from_temperature(t1, t2, w01, cfg["kT_MHz"] * _MHZ)
    return NoiseParams(T1=t1, T2=t2, qubit_frequency=w01, eta=cfg.get("eta", 1.0))


def noise_to_config(noise: NoiseParams) -> dict:
    def ns(t):
        return None if math.isinf(t) else t * 1e9

    return {
        "T1_ns": ns(noise.T1),
        "T2_ns": ns(noise.T2),
        "qubit_frequency_MHz": noise.qubit_frequency / _MHZ,
        "eta": noise.eta,
    }


def leakage_from_config(cfg: dict) -> LeakageParams:
    return LeakageParams(
        anharmonicity=cfg.get("anharmonicity_MHz", -150.0) * _MHZ,
        matrix_element_ratio=cfg.get("matrix_element_ratio", math.sqrt(2)),
    )
