"""Process fidelity estimation through time-reversed basis states.

For a target unitary ``U`` the noisy process is probed with ``|psi_k> =
U^dagger |k>``: after the noisy gate the probability ``X_k`` of reading out
``k`` is 1 for a perfect gate. The fidelity of the measured process is
``(sum_k sqrt(X_k) / D)``. Uniformly sampled labels give an unbiased
estimator of its square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from ..core import QuantumChannel, depolarizing_channel
from ..dynamics.sequences import make_rng
from ..dynamics.statevector import apply_gate_batch

__all__ = ["PFEResult", "pfe_probabilities", "pfe_exact", "pfe_estimator", "pfe_naive_estimator", "pfe_run",
           "white_noise_channel", "hadamard_cz_circuit"]

Oracle = Union[QuantumChannel, Callable[[np.ndarray], np.ndarray]]


def _apply(oracle: Oracle, rho: np.ndarray) -> np.ndarray:
    if isinstance(oracle, QuantumChannel):
        return oracle.apply(rho)
    return np.asarray(oracle(rho), dtype=complex)


def _check_unitary(u) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-10):
        raise ValueError("target must be a square unitary matrix")
    return u


def pfe_probabilities(u, oracle: Oracle, labels=None) -> np.ndarray:
    """``X_k = <k| noisy(U^dagger |k><k| U) |k>`` for the given labels (default: all)."""
    u = _check_unitary(u)
    d = u.shape[0]
    labels = range(d) if labels is None else labels
    out = []
    for k in labels:
        psi = u.conj().T[:, int(k)]
        rho = _apply(oracle, np.outer(psi, psi.conj()))
        out.append(float(np.clip(np.real(rho[int(k), int(k)]), 0.0, 1.0)))
    return np.array(out)


def pfe_exact(u, oracle: Oracle) -> float:
    """Squared process fidelity from the full sum over all ``D`` labels."""
    x = pfe_probabilities(u, oracle)
    return float(np.mean(np.sqrt(x)) ** 2)


def pfe_estimator(x) -> float:
    """Bias-corrected estimate of ``E[sqrt X]^2`` from ``m >= 2`` samples."""
    x = np.asarray(x, float)
    m = x.size
    if m < 2:
        raise ValueError("the bias-corrected estimator needs at least two samples")
    return float(m / (m - 1) * np.mean(np.sqrt(x)) ** 2 - np.sum(x) / (m * (m - 1)))


def pfe_naive_estimator(x) -> float:
    """Square of the sample mean of ``sqrt X``; biased upward by ``(E[X] - E[sqrt X]^2) / m``."""
    return float(np.mean(np.sqrt(np.asarray(x, float))) ** 2)


@dataclass
class PFEResult:
    F_squared: float
    F: float
    naive: float
    m: int
    shots: int
    labels: np.ndarray
    probabilities: np.ndarray

    def to_dict(self) -> dict:
        return {"F_squared": float(self.F_squared), "F": float(self.F), "naive": float(self.naive),
                "m": int(self.m), "shots": int(self.shots)}


def pfe_run(u, oracle: Oracle, m: int = 100, shots: int = 0, seed=None) -> PFEResult:
    """Sample ``m`` labels uniformly and estimate the squared process fidelity.

    ``shots=0`` uses exact readout probabilities; otherwise each ``X_k`` is
    a binomial frequency over ``shots`` repetitions, and the estimator is
    unbiased for the square of the mean root frequency. ``F`` is the square
    root of the estimate clipped at zero.
    """
    if m < 2:
        raise ValueError("need m >= 2 samples")
    if shots < 0:
        raise ValueError("shots must be non-negative")
    u = _check_unitary(u)
    rng = make_rng(seed)
    labels = rng.integers(0, u.shape[0], size=m)
    x = pfe_probabilities(u, oracle, labels)
    if shots:
        x = rng.binomial(shots, x) / shots
    est = pfe_estimator(x)
    return PFEResult(est, math.sqrt(max(est, 0.0)), pfe_naive_estimator(x), m, shots, labels, x)


def white_noise_channel(lam: float, n: int) -> QuantumChannel:
    """``rho -> (1 - lam) rho + lam I / D`` on ``n`` qubits."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    d2 = 4**n
    return depolarizing_channel(lam * (d2 - 1) / d2, n)


def hadamard_cz_circuit(n: int, layers: int) -> np.ndarray:
    """Unitary of ``layers`` rounds of Hadamards on every qubit then CZ on neighbouring pairs."""
    if n < 1 or layers < 1:
        raise ValueError("need n >= 1 and layers >= 1")
    circuit = []
    for _ in range(layers):
        circuit += [("H", (q,)) for q in range(n)]
        circuit += [("CZ", (q, q + 1)) for q in range(n - 1)]
    basis = np.eye(2**n, dtype=complex)
    for gate, qubits in circuit:
        basis = apply_gate_batch(basis, gate, qubits, n)
    # row k of the batch is U|k>
    return basis.T
