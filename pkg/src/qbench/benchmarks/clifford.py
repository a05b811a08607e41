"""The 24-element single-qubit Clifford group realized with physical pulses.

Every element is a word of at most three pulses from ``X90, Xb90, Y90, Yb90,
X, Y`` (``b`` marks a negative rotation), written in time order. The table
below uses 44 pulses over the 24 elements, 36 of them quarter turns, so a
uniformly sampled Clifford costs 11/6 pulses on average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..core import PAULI_1Q

__all__ = ["CLIFFORD_DECOMPOSITIONS", "PULSE_UNITARIES", "CliffordGroup1Q", "clifford_group", "ptm"]


def _rotation(axis: str, angle: float) -> np.ndarray:
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * PAULI_1Q[axis]


PULSE_UNITARIES = {
    "X90": _rotation("X", math.pi / 2),
    "Xb90": _rotation("X", -math.pi / 2),
    "Y90": _rotation("Y", math.pi / 2),
    "Yb90": _rotation("Y", -math.pi / 2),
    "X": _rotation("X", math.pi),
    "Y": _rotation("Y", math.pi),
}

CLIFFORD_DECOMPOSITIONS = (
    # Paulis
    (),
    ("X",),
    ("Y",),
    ("X", "Y"),
    # 2pi/3 rotations about the cube diagonals
    ("X90", "Y90"),
    ("X90", "Yb90"),
    ("Xb90", "Y90"),
    ("Xb90", "Yb90"),
    ("Y90", "X90"),
    ("Y90", "Xb90"),
    ("Yb90", "X90"),
    ("Yb90", "Xb90"),
    # quarter turns about x, y, z
    ("X90",),
    ("Xb90",),
    ("Y90",),
    ("Yb90",),
    ("Xb90", "Y90", "X90"),
    ("Xb90", "Yb90", "X90"),
    # half turns about face diagonals
    ("X", "Y90"),
    ("X", "Yb90"),
    ("Y", "X90"),
    ("Y", "Xb90"),
    ("X90", "Y90", "X90"),
    ("Xb90", "Y90", "Xb90"),
)

_PAULI_BASIS = [np.eye(2, dtype=complex), PAULI_1Q["X"], PAULI_1Q["Y"], PAULI_1Q["Z"]]


def ptm(u: np.ndarray) -> np.ndarray:
    """Real Pauli transfer matrix ``R_ij = Tr(P_i U P_j U^dagger) / 2`` of a unitary."""
    return np.array([[0.5 * np.real(np.trace(p @ u @ q @ u.conj().T)) for q in _PAULI_BASIS] for p in _PAULI_BASIS])


def _word_unitary(word) -> np.ndarray:
    u = np.eye(2, dtype=complex)
    for name in word:
        u = PULSE_UNITARIES[name] @ u
    return u


def _phase_free_key(u: np.ndarray) -> tuple:
    flat = u.reshape(-1)
    k = int(np.argmax(np.abs(flat) > 1e-6))
    v = flat * (abs(flat[k]) / flat[k])
    return tuple(np.round(np.concatenate([v.real, v.imag]), 8) + 0.0)


@dataclass(frozen=True)
class CliffordGroup1Q:
    """Unitaries, pulse words, PTMs and the multiplication and inverse tables.

    ``multiply[a, b]`` is the index of the element "apply ``b`` then ``a``".
    """

    unitaries: tuple
    decompositions: tuple
    ptms: np.ndarray
    multiply: np.ndarray
    inverse: np.ndarray
    lookup: dict = field(repr=False, compare=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.unitaries)

    def index_of(self, u: np.ndarray) -> int:
        key = _phase_free_key(np.asarray(u, dtype=complex))
        try:
            return self.lookup[key]
        except KeyError:
            raise ValueError("unitary is not a Clifford element") from None

    def compose(self, indices) -> int:
        """Index of the product of ``indices`` applied in the listed order."""
        out = 0
        for i in indices:
            out = int(self.multiply[i, out])
        return out

    def pulse_fraction(self) -> tuple[float, float]:
        """Fractions of quarter-turn and half-turn pulses under uniform sampling."""
        words = [p for w in self.decompositions for p in w]
        half = sum(1 for p in words if p.endswith("90"))
        return half / len(words), 1 - half / len(words)


@lru_cache(maxsize=1)
def clifford_group() -> CliffordGroup1Q:
    unitaries = tuple(_word_unitary(w) for w in CLIFFORD_DECOMPOSITIONS)
    lookup = {}
    for i, u in enumerate(unitaries):
        key = _phase_free_key(u)
        if key in lookup:
            raise RuntimeError(f"decompositions {lookup[key]} and {i} give the same Clifford")
        lookup[key] = i
    n = len(unitaries)
    mult = np.empty((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(n):
            mult[a, b] = lookup[_phase_free_key(unitaries[a] @ unitaries[b])]
    inv = np.array([int(np.where(mult[:, b] == 0)[0][0]) for b in range(n)])
    return CliffordGroup1Q(unitaries, CLIFFORD_DECOMPOSITIONS, np.array([ptm(u) for u in unitaries]), mult, inv, lookup)
