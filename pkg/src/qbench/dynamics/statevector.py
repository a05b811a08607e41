"""Small n-qubit statevector simulator with Pauli-trajectory noise.

Qubit 0 is the most significant bit of a basis index. A gate is a pair
``(matrix, qubits)`` where ``matrix`` acts on ``qubits`` in the listed order;
gate names from :data:`GATES` are accepted in place of matrices.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..core import PAULI_1Q
from .sequences import make_rng

__all__ = [
    "GATES",
    "MAX_QUBITS",
    "statevector_apply",
    "apply_gate_batch",
    "apply_pauli_batch",
    "uniform_pauli_noise",
    "pauli_masks",
    "pauli_trajectory_sample",
    "sample_bitstrings",
]

MAX_QUBITS = 20

_S2 = 1 / np.sqrt(2)
GATES = {
    "I": np.eye(2, dtype=complex),
    "X": PAULI_1Q["X"],
    "Y": PAULI_1Q["Y"],
    "Z": PAULI_1Q["Z"],
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "S": np.diag([1, 1j]),
    "T": np.diag([1, np.exp(1j * np.pi / 4)]),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}


def _matrix(gate) -> np.ndarray:
    return GATES[gate] if isinstance(gate, str) else np.asarray(gate, dtype=complex)


def _check_n(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise MemoryError(f"statevector limited to 1..{MAX_QUBITS} qubits, got {n}")


def apply_gate_batch(states: np.ndarray, matrix, qubits: Sequence[int], n: int) -> np.ndarray:
    """Apply one gate to a batch of states of shape ``(batch, 2**n)``."""
    m = _matrix(matrix)
    k = len(qubits)
    if m.shape != (2**k, 2**k):
        raise ValueError(f"gate of shape {m.shape} does not act on {k} qubits")
    if len(set(qubits)) != k or any(not 0 <= q < n for q in qubits):
        raise ValueError(f"invalid qubit indices {qubits}")
    batch = states.shape[0]
    psi = states.reshape((batch,) + (2,) * n)
    axes = [q + 1 for q in qubits]
    out = np.tensordot(psi, m.reshape((2,) * (2 * k)), axes=(axes, list(range(k, 2 * k))))
    # tensordot appends the gate's output axes at the end; move them back
    out = np.moveaxis(out, list(range(n + 1 - k, n + 1)), axes)
    return out.reshape(batch, 2**n)


def statevector_apply(circuit: Iterable, n: int, state=None) -> np.ndarray:
    """Amplitudes after applying ``circuit`` (a list of gates) to ``state`` (default |0...0>)."""
    _check_n(n)
    if state is None:
        psi = np.zeros((1, 2**n), dtype=complex)
        psi[0, 0] = 1.0
    else:
        psi = np.asarray(state, dtype=complex).reshape(1, 2**n).copy()
    for gate, qubits in circuit:
        psi = apply_gate_batch(psi, gate, tuple(qubits), n)
    return psi[0]


def pauli_masks(index: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """x-mask, z-mask and Y-count of Pauli strings given by base-4 indices (I,X,Y,Z digits)."""
    index = np.asarray(index, dtype=np.int64)
    x = np.zeros_like(index)
    z = np.zeros_like(index)
    ny = np.zeros_like(index)
    for q in range(n):
        digit = (index >> (2 * (n - 1 - q))) & 3
        bit = 1 << (n - 1 - q)
        x |= np.where((digit == 1) | (digit == 2), bit, 0)
        z |= np.where((digit == 2) | (digit == 3), bit, 0)
        ny += digit == 2
    return x, z, ny


def _parity(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    out = np.zeros_like(v)
    while np.any(v):
        out ^= v & 1
        v >>= 1
    return out


def apply_pauli_batch(states: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    """Apply the Pauli string ``index[t]`` to ``states[t]`` for every row t."""
    x, z, ny = pauli_masks(index, n)
    basis = np.arange(2**n, dtype=np.int64)
    src = basis[None, :] ^ x[:, None]
    sign = 1 - 2 * _parity(src & z[:, None])
    phase = (1j) ** ny
    return np.take_along_axis(states, src, axis=1) * sign * phase[:, None]


def uniform_pauli_noise(total: float, n: int) -> np.ndarray:
    """Probabilities over the 4**n Pauli strings: ``total`` spread over the non-identity ones."""
    if not 0 <= total <= 1:
        raise ValueError("total error probability must lie in [0, 1]")
    p = np.full(4**n, total / (4**n - 1))
    p[0] = 1 - total
    return p


def _noise_table(pauli_noise, n: int) -> np.ndarray:
    if np.isscalar(pauli_noise):
        return uniform_pauli_noise(float(pauli_noise), n)
    p = np.asarray(pauli_noise, float)
    if p.shape != (4**n,):
        raise ValueError(f"Pauli noise table needs {4**n} entries")
    if np.any(p < 0) or p[1:].sum() > 1 + 1e-12:
        raise ValueError("Pauli error probabilities must be non-negative and sum to at most one")
    p = p.copy()
    p[0] = 1 - p[1:].sum()
    return p


def sample_bitstrings(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One basis index per row of ``probs`` by inverse-CDF sampling."""
    probs = np.atleast_2d(probs)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1)


def pauli_trajectory_sample(layers: Sequence[Sequence], n: int, pauli_noise, seed, count: int,
                            batch: int = 4096) -> np.ndarray:
    """Sample ``count`` bitstrings from a circuit with a Pauli channel after every layer.

    Each trajectory draws an independent Pauli string after each layer from
    ``pauli_noise`` (a total error rate spread uniformly over non-identity
    Paulis, or a full table over the 4**n strings) and measures its final
    state once.
    """
    _check_n(n)
    if count < 0:
        raise ValueError("count must be non-negative")
    table = _noise_table(pauli_noise, n)
    rng = make_rng(seed)
    out = np.empty(count, dtype=np.int64)
    done = 0
    while done < count:
        b = min(batch, count - done)
        psi = np.zeros((b, 2**n), dtype=complex)
        psi[:, 0] = 1.0
        for layer in layers:
            for gate, qubits in layer:
                psi = apply_gate_batch(psi, gate, tuple(qubits), n)
            if table[0] < 1:
                draws = rng.choice(4**n, size=b, p=table)
                hit = draws != 0
                if np.any(hit):
                    psi[hit] = apply_pauli_batch(psi[hit], draws[hit], n)
        out[done:done + b] = sample_bitstrings(np.abs(psi) ** 2, rng)
        done += b
    return out
