"""Separable ancilla-assisted process tomography.

The system (leading factor) and an equally sized ancilla start in a faithful
state ``rho_AB = sum_ij r_ij E_i x E_j``. After the channel acts on the
system, product Pauli expectations give the output coefficients
``alpha~_kj``. Two linear inversions recover chi:

    alpha~ = chi~ r                      (needs r invertible: faithfulness)
    chi~_ki = sum_mn a[k, m, i, n] chi_mn,  a[k, m, i, n] = Tr(E_k E_m E_i E_n) / D
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..core import ProcessMatrix, bell_basis, pauli_matrices
from .oracle import ChannelOracle

__all__ = ["NotFaithfulError", "maximally_entangled", "aapt_coefficients", "aapt_collect",
           "aapt_reconstruct", "aapt"]


class NotFaithfulError(np.linalg.LinAlgError):
    """The joint input state cannot identify every channel."""


def _nq(dim: int) -> int:
    return int(round(np.log2(dim)))


def maximally_entangled(dim: int) -> np.ndarray:
    if dim == 2:
        v = bell_basis()[0]
    else:
        v = np.eye(dim).reshape(-1) / np.sqrt(dim)
    return np.outer(v, v.conj())


@lru_cache(maxsize=4)
def _structure(dim: int) -> np.ndarray:
    """Matrix mapping vec(chi) (index m*D2+n) to vec(chi~) (index k*D2+i)."""
    e = pauli_matrices(_nq(dim))
    a = np.einsum("kab,mbc,icd,nda->kmin", e, e, e, e) / dim
    d2 = dim * dim
    out = a.transpose(0, 2, 1, 3).reshape(d2 * d2, d2 * d2)
    out.setflags(write=False)
    return out


def aapt_coefficients(rho_ab: np.ndarray, dim: int) -> np.ndarray:
    """r_ij = Tr(rho_AB (E_i x E_j)) / D^2."""
    e = pauli_matrices(_nq(dim))
    r = np.asarray(rho_ab, dtype=complex).reshape(dim, dim, dim, dim)
    # Tr(rho (E_i x E_j)) = sum rho[a b, c d] E_i[c, a] E_j[d, b]
    return np.einsum("abcd,ica,jdb->ij", r, e, e) / dim**2


def aapt_collect(oracle: ChannelOracle, rho_ab: np.ndarray | None = None) -> np.ndarray:
    """Measured output coefficients alpha~_kj from joint product-Pauli expectations."""
    dim = oracle.dim
    rho_ab = maximally_entangled(dim) if rho_ab is None else np.asarray(rho_ab, dtype=complex)
    ev = oracle.pauli_expectations(rho_ab, "aapt-input")
    d2 = dim * dim
    return ev.reshape(d2, d2) / d2


def aapt_reconstruct(alpha: np.ndarray, rho_ab: np.ndarray, dim: int,
                     max_condition: float = 1e8) -> ProcessMatrix:
    r = aapt_coefficients(rho_ab, dim)
    if np.linalg.cond(r) > max_condition:
        raise NotFaithfulError("input state is not faithful: its coefficient matrix is singular")
    # alpha = chi~ r  ->  chi~ = alpha r^-1, solved as r^T chi~^T = alpha^T
    chi_t = np.linalg.solve(r.T, np.asarray(alpha).T).T
    d2 = dim * dim
    chi = np.linalg.solve(_structure(dim), chi_t.reshape(-1)).reshape(d2, d2)
    return ProcessMatrix(0.5 * (chi + chi.conj().T), validate=False)


def aapt(oracle: ChannelOracle, rho_ab: np.ndarray | None = None) -> ProcessMatrix:
    rho_ab = maximally_entangled(oracle.dim) if rho_ab is None else rho_ab
    return aapt_reconstruct(aapt_collect(oracle, rho_ab), rho_ab, oracle.dim)
