"""Instrumented access to an unknown channel.

Reconstruction routines only see a :class:`ChannelOracle`. It applies the
hidden channel to prepared states, returns either exact expectation values or
shot-sampled estimates, and counts how many distinct preparations and
measurement settings were used.
"""

from __future__ import annotations

import numpy as np

from ..core import QuantumChannel, bell_basis, pauli_basis
from ..dynamics.sequences import make_rng

__all__ = ["ChannelOracle", "bell_projectors"]


def bell_projectors() -> list[np.ndarray]:
    """Projectors onto (Phi+, Psi+, Psi-, Phi-)."""
    return [np.outer(b, b.conj()) for b in bell_basis()]


class ChannelOracle:
    """A hidden single- or multi-qubit channel with shot sampling.

    ``shots=0`` returns exact expectations. With ancillas, the channel acts on
    the leading (most significant) tensor factor.
    """

    def __init__(self, channel: QuantumChannel, shots: int = 0, seed=None):
        if shots < 0:
            raise ValueError("shots must be non-negative")
        self._channel = channel
        self.shots = int(shots)
        self._rng = make_rng(0 if seed is None else seed)
        self.preparations: set = set()
        self.settings: set = set()

    @property
    def dim(self) -> int:
        return self._channel.dim

    def _output(self, rho: np.ndarray, label) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        d = self._channel.dim
        self.preparations.add(label)
        if rho.shape == (d, d):
            return self._channel.apply(rho)
        da = rho.shape[0] // d
        if da * d != rho.shape[0]:
            raise ValueError("state dimension is not a multiple of the channel dimension")
        # (E x I) on the leading factor, acting on each ancilla block
        r = rho.reshape(d, da, d, da).transpose(0, 2, 1, 3)
        out = np.empty_like(r)
        for a in range(da):
            for b in range(da):
                out[:, :, a, b] = self._channel.apply(r[:, :, a, b])
        return out.transpose(0, 2, 1, 3).reshape(d * da, d * da)

    def pauli_expectations(self, rho, label) -> np.ndarray:
        """Expectations of every Pauli string on the output, in :func:`pauli_basis` order."""
        out = self._output(rho, label)
        n = int(round(np.log2(out.shape[0])))
        vals = np.empty(4**n)
        for k, p in enumerate(pauli_basis(n)):
            self.settings.add((label, p.labels))
            e = float(np.real(np.trace(p.matrix() @ out)))
            if self.shots and k > 0:
                plus = self._rng.binomial(self.shots, np.clip(0.5 * (1 + e), 0.0, 1.0))
                e = 2.0 * plus / self.shots - 1.0
            vals[k] = e
        return vals

    def bell_probabilities(self, rho_ab, label) -> np.ndarray:
        """Bell-state measurement on a two-qubit output (one setting)."""
        out = self._output(rho_ab, label)
        if out.shape != (4, 4):
            raise ValueError("Bell measurement needs a qubit plus one ancilla qubit")
        self.settings.add((label, "BSM"))
        probs = np.clip([np.real(np.trace(p @ out)) for p in bell_projectors()], 0.0, None)
        probs = probs / probs.sum()
        if self.shots:
            probs = self._rng.multinomial(self.shots, probs) / self.shots
        return np.asarray(probs, float)

    @property
    def configurations(self) -> int:
        return len(self.settings)
