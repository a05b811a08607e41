"""Direct characterization of single-qubit dynamics.

Four inputs, one fixed Bell-state measurement each:

* ``|Phi+>`` gives the populations: the probability of Bell outcome m is chi_mm;
* ``a|00> + b|11>`` gives chi_03 and chi_12;
* the same state rotated by ``H x H`` gives chi_01 and chi_23;
* rotated by ``(S x S)(H x H)`` gives chi_02 and chi_13.

For each non-maximal input the four Bell probabilities are affine in the
real and imaginary parts of its two coherences once the populations are known.
Adding the one trace-preservation equation that involves the same pair gives a
small overdetermined system, solved by least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import ProcessMatrix, bell_basis, pauli_matrices
from .oracle import ChannelOracle, bell_projectors

__all__ = ["DCQDConfig", "dcqd_inputs", "dcqd_single_qubit", "dcqd_resource_count", "COHERENCE_PAIRS"]

COHERENCE_PAIRS = {
    "Phi_alpha": ((0, 3), (1, 2)),
    "Phi_alpha_X": ((0, 1), (2, 3)),
    "Phi_alpha_Y": ((0, 2), (1, 3)),
}
# Pauli component of the trace-preservation condition that involves each pair set
_TP_COMPONENT = {"Phi_alpha": 3, "Phi_alpha_X": 1, "Phi_alpha_Y": 2}


@dataclass(frozen=True)
class DCQDConfig:
    alpha: complex = math.sqrt(2 / 3)
    beta: complex = complex(np.exp(1j * math.pi / 4) / math.sqrt(3))

    def __post_init__(self):
        a, b = complex(self.alpha), complex(self.beta)
        if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > 1e-9:
            raise ValueError("alpha and beta must be normalized")
        if abs(a) < 1e-6 or abs(abs(a) - 1 / math.sqrt(2)) < 1e-6 or abs(abs(a) - 1) < 1e-6:
            raise ValueError("|alpha| must avoid 0, 1/sqrt(2) and 1")
        if abs((a * b.conjugate()).imag) < 1e-6:
            raise ValueError("Im(alpha beta*) must be non-zero")


def dcqd_inputs(cfg: DCQDConfig) -> dict:
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    s = np.diag([1, 1j])
    phi_plus = bell_basis()[0]
    phi_a = np.array([cfg.alpha, 0, 0, cfg.beta], dtype=complex)
    hh = np.kron(h, h)
    ss = np.kron(s, s)
    vecs = {"Phi+": phi_plus, "Phi_alpha": phi_a, "Phi_alpha_X": hh @ phi_a, "Phi_alpha_Y": ss @ hh @ phi_a}
    return {k: np.outer(v, v.conj()) for k, v in vecs.items()}


def _response(rho: np.ndarray) -> np.ndarray:
    """K[b, m, n] = <B_b| (E_m x I) rho (E_n x I) |B_b>."""
    e = pauli_matrices(1)
    ea = np.stack([np.kron(m, np.eye(2)) for m in e])
    proj = np.stack(bell_projectors())
    return np.einsum("bij,mjk,kl,nli->bmn", proj, ea, rho, ea)


def dcqd_single_qubit(oracle: ChannelOracle, cfg: DCQDConfig | None = None) -> ProcessMatrix:
    if oracle.dim != 2:
        raise ValueError("DCQD is implemented for a single qubit")
    cfg = DCQDConfig() if cfg is None else cfg
    inputs = dcqd_inputs(cfg)
    chi = np.zeros((4, 4), dtype=complex)
    chi[np.diag_indices(4)] = oracle.bell_probabilities(inputs["Phi+"], "Phi+")
    e = pauli_matrices(1)
    for name, pairs in COHERENCE_PAIRS.items():
        rho = inputs[name]
        q = oracle.bell_probabilities(rho, name)
        k = _response(rho)
        known = np.real(np.einsum("bmm,m->b", k, np.real(np.diag(chi))))
        rows = np.zeros((5, 4))
        rhs = np.zeros(5)
        rhs[:4] = q - known
        c = _TP_COMPONENT[name]
        for j, (m, n) in enumerate(pairs):
            rows[:4, 2 * j] = np.real(k[:, m, n] + k[:, n, m])
            rows[:4, 2 * j + 1] = np.real(1j * (k[:, m, n] - k[:, n, m]))
            tr = np.trace(e[c] @ e[n] @ e[m]) / 2
            tr_c = np.trace(e[c] @ e[m] @ e[n]) / 2
            rows[4, 2 * j] = np.real(tr + tr_c)
            rows[4, 2 * j + 1] = np.real(1j * (tr - tr_c))
        # the population part of this TP component vanishes for Pauli bases
        u, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
        for j, (m, n) in enumerate(pairs):
            chi[m, n] = u[2 * j] + 1j * u[2 * j + 1]
            chi[n, m] = np.conj(chi[m, n])
    return ProcessMatrix(chi, validate=False)


def dcqd_resource_count(n: int, dim: int = 2) -> tuple[int, int]:
    """Experimental configurations for n qudits: separable tomography versus DCQD."""
    if n < 1 or dim < 2:
        raise ValueError("need n >= 1 and dim >= 2")
    return dim ** (4 * n), dim ** (2 * n)
