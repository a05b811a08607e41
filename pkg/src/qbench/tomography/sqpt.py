"""Standard quantum process tomography.

The D^2 inputs are the operator basis ``|m><n|``. Coherences cannot be
prepared directly, so each is assembled from four prepared populations:

    |b><a| = |+><+| - i |+i><+i| - (1 - i)/2 (|a><a| + |b><b|)
    |a><b| = |+><+| + i |+i><+i| - (1 + i)/2 (|a><a| + |b><b|)

with ``|+> = (|a> + |b>)/sqrt2`` and ``|+i> = (|a> + i|b>)/sqrt2``.
Outputs are estimated by Pauli state tomography, giving
``lambda[(k, l)] = <a_l| E(rho_k) |b_l>``, and chi solves ``B chi = lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ProcessMatrix, pauli_matrices
from .oracle import ChannelOracle

__all__ = ["SQPTWorkspace", "sqpt_inputs", "sqpt_collect", "sqpt_reconstruct", "sqpt_matrix", "sqpt"]


def _nq(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError("dimension must be a power of two")
    return n


def sqpt_inputs(dim: int) -> dict:
    """The D^2 prepared pure states, keyed by a readable label."""
    eye = np.eye(dim)
    states = {}
    for m in range(dim):
        states[f"{m}"] = np.outer(eye[m], eye[m])
    for a in range(dim):
        for b in range(a + 1, dim):
            plus = (eye[a] + eye[b]) / np.sqrt(2)
            plus_i = (eye[a] + 1j * eye[b]) / np.sqrt(2)
            states[f"+{a}{b}"] = np.outer(plus, plus.conj())
            states[f"+i{a}{b}"] = np.outer(plus_i, plus_i.conj())
    return states


def sqpt_matrix(dim: int) -> np.ndarray:
    """B with ``B[(k, l), (m, n)] = <a_l| E_m rho_k E_n^dagger |b_l>`` for ``rho_k = |a_k><b_k|``."""
    paulis = pauli_matrices(_nq(dim))
    d2 = dim * dim
    out = np.empty((d2, d2, d2, d2), dtype=complex)
    for ak in range(dim):
        for bk in range(dim):
            k = ak * dim + bk
            # <a_l| E_m |a_k> <b_k| E_n^dagger |b_l> = E_m[a_l, a_k] * conj(E_n[b_l, b_k])
            left = paulis[:, :, ak]            # [m, a_l]
            right = paulis[:, :, bk].conj()    # [n, b_l]
            out[k] = np.einsum("ma,nb->abmn", left, right).reshape(d2, d2, d2)
    return out.reshape(d2 * d2, d2 * d2)


@dataclass
class SQPTWorkspace:
    dim: int
    lam: np.ndarray
    configurations: int
    preparations: int

    @property
    def B(self) -> np.ndarray:
        return sqpt_matrix(self.dim)


def sqpt_collect(oracle: ChannelOracle) -> SQPTWorkspace:
    """Prepare the D^2 populations, run Pauli tomography on each output, assemble lambda."""
    dim = oracle.dim
    n = _nq(dim)
    paulis = pauli_matrices(n)
    outputs = {}
    for label, rho in sqpt_inputs(dim).items():
        ev = oracle.pauli_expectations(rho, label)
        outputs[label] = np.einsum("k,kab->ab", ev, paulis) / dim
    lam = np.empty((dim * dim, dim * dim), dtype=complex)
    for a in range(dim):
        for b in range(dim):
            if a == b:
                out = outputs[f"{a}"]
            else:
                lo, hi = min(a, b), max(a, b)
                pops = outputs[f"{lo}"] + outputs[f"{hi}"]
                plus, plus_i = outputs[f"+{lo}{hi}"], outputs[f"+i{lo}{hi}"]
                if a < b:
                    out = plus + 1j * plus_i - 0.5 * (1 + 1j) * pops
                else:
                    out = plus - 1j * plus_i - 0.5 * (1 - 1j) * pops
            lam[a * dim + b] = out.reshape(-1)
    return SQPTWorkspace(dim, lam.reshape(-1), oracle.configurations, len(oracle.preparations))


def sqpt_reconstruct(ws: SQPTWorkspace, max_condition: float = 1e10) -> ProcessMatrix:
    b = ws.B
    if np.linalg.cond(b) > max_condition:
        raise np.linalg.LinAlgError("SQPT matrix B is ill-conditioned")
    d2 = ws.dim * ws.dim
    chi = np.linalg.solve(b, ws.lam).reshape(d2, d2)
    return ProcessMatrix(0.5 * (chi + chi.conj().T), validate=False)


def sqpt(oracle: ChannelOracle) -> ProcessMatrix:
    return sqpt_reconstruct(sqpt_collect(oracle))
