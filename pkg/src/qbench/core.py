"""Quantum states, Pauli bases, channels and fidelity measures.

Conventions used throughout the package:

* Operators are vectorized by column stacking, ``vec(A) = A.reshape(-1, order="F")``,
  so that ``vec(A X B) = (B.T kron A) vec(X)``.
* The n-qubit Pauli basis is ordered lexicographically over ``I, X, Y, Z`` with
  the identity first, and every element satisfies ``Tr(P_k P_l) = D delta_kl``.
* The process matrix of a channel is defined by
  ``E(rho) = sum_mn chi_mn E_m rho E_n^dagger`` over that Pauli basis.
* The Choi state is ``(I x E)(|phi><phi|)`` with ``|phi> = sum_i |ii>/sqrt(D)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PAULI_1Q",
    "PauliString",
    "DensityMatrix",
    "QuantumChannel",
    "ProcessMatrix",
    "ValidationError",
    "pauli_basis",
    "pauli_matrices",
    "apply_channel",
    "depolarizing_channel",
    "choi_state",
    "uhlmann_fidelity",
    "process_fidelity",
    "avg_gate_fidelity_depolarizing",
    "measure_projective",
    "psd_sqrt",
    "trace_norm",
    "vec",
    "unvec",
    "random_unitary",
    "random_channel",
    "random_density_matrix",
    "bell_basis",
    "channel_to_json",
    "channel_from_json",
    "complex_to_pairs",
    "complex_from_pairs",
]

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_1Q = {"I": _I2, "X": _X, "Y": _Y, "Z": _Z}

MAX_QUBITS = 12


class ValidationError(ValueError):
    """Raised when an object fails a physical-validity check."""


# ---------------------------------------------------------------------------
# vectorization helpers
# ---------------------------------------------------------------------------


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    return v.reshape((dim, dim), order="F")


# ---------------------------------------------------------------------------
# Pauli strings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis with an overall sign.

    ``labels[0]`` acts on the most significant qubit of the computational
    basis index.
    """

    labels: str
    sign: int = 1

    def __post_init__(self):
        if not self.labels or any(ch not in "IXYZ" for ch in self.labels):
            raise ValueError(f"invalid Pauli labels {self.labels!r}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return 2**self.n

    def matrix(self) -> np.ndarray:
        out = np.array([[1.0 + 0j]])
        for ch in self.labels:
            out = np.kron(out, PAULI_1Q[ch])
        return self.sign * out

    def masks(self) -> tuple[int, int]:
        """Bit masks ``(x, z)`` such that P|j> is proportional to phase(z.j)|j xor x>."""
        x = z = 0
        for ch in self.labels:
            x <<= 1
            z <<= 1
            if ch in "XY":
                x |= 1
            if ch in "ZY":
                z |= 1
        return x, z

    def __str__(self) -> str:
        return ("-" if self.sign < 0 else "") + self.labels


def _check_n(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1 or n > MAX_QUBITS:
        raise ValueError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")


def pauli_basis(n: int) -> list[PauliString]:
    """All 4**n Pauli strings, lexicographic over I, X, Y, Z with identity first."""
    _check_n(n)
    return [PauliString("".join(w)) for w in itertools.product("IXYZ", repeat=n)]


@lru_cache(maxsize=8)
def _pauli_stack(n: int) -> np.ndarray:
    mats = np.array([[[1.0 + 0j]]])
    for _ in range(n):
        mats = np.einsum("aij,bkl->abikjl", mats, np.stack([_I2, _X, _Y, _Z]))
        a, b, i, k, j, l = mats.shape
        mats = mats.reshape(a * b, i * k, j * l)
    mats.setflags(write=False)
    return mats


def pauli_matrices(n: int) -> np.ndarray:
    """Array of shape (4**n, 2**n, 2**n) holding the Pauli basis matrices."""
    _check_n(n)
    if n > 6:
        raise ValueError("dense Pauli stacks are limited to n <= 6")
    return _pauli_stack(n)


def _nqubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


def _eigh_psd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(h)
    return np.clip(w, 0.0, None), v


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Square root of a PSD matrix with small negative eigenvalues clamped to zero."""
    w, v = _eigh_psd(np.asarray(a, dtype=complex))
    return (v * np.sqrt(w)) @ v.conj().T


def trace_norm(a: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(a), compute_uv=False)))


class DensityMatrix:
    """Validated, read-only density matrix.

    Most functions in the package accept either a ``DensityMatrix`` or a plain
    array; this class exists for callers who want the invariants checked once.
    """

    __slots__ = ("_data",)

    def __init__(self, data, *, validate: bool = True, atol: float = 1e-10):
        arr = np.array(data, dtype=complex)
        if arr.ndim == 1:
            arr = np.outer(arr, arr.conj())
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("density matrix must be square")
        if validate:
            _validate_state(arr, atol)
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def purity(self) -> float:
        return float(np.real(np.trace(self._data @ self._data)))

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(self._data @ op)))

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


def _validate_state(rho: np.ndarray, atol: float = 1e-10) -> None:
    if np.max(np.abs(rho - rho.conj().T)) > max(atol, 1e-12):
        raise ValidationError("state is not Hermitian")
    if abs(np.trace(rho) - 1) > max(atol, 1e-12):
        raise ValidationError(f"state trace {np.trace(rho).real:.3g} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -atol:
        raise ValidationError("state is not positive semi-definite")


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=complex)


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------


def _chi_basis(dim: int) -> np.ndarray:
    """Stack K[m, n] = conj(E_n) kron E_m, the superoperator of rho -> E_m rho E_n^dagger."""
    return _chi_basis_cached(dim)


@lru_cache(maxsize=4)
def _chi_basis_cached(dim: int) -> np.ndarray:
    paulis = pauli_matrices(_nqubits(dim))
    k = np.einsum("nab,mcd->mnacbd", paulis.conj(), paulis)
    d2 = dim * dim
    k = k.reshape(d2, d2, d2, d2)
    k.setflags(write=False)
    return k


def _superop_from_chi(chi: np.ndarray) -> np.ndarray:
    dim = int(round(np.sqrt(chi.shape[0])))
    return np.einsum("mn,mnab->ab", chi, _chi_basis(dim))


def _chi_from_superop(s: np.ndarray) -> np.ndarray:
    dim = int(round(np.sqrt(s.shape[0])))
    # the K[m, n] are orthogonal with squared HS norm D^2
    return np.einsum("mnab,ab->mn", _chi_basis(dim).conj(), s) / dim**2


def _choi_from_superop(s: np.ndarray) -> np.ndarray:
    d2 = s.shape[0]
    dim = int(round(np.sqrt(d2)))
    t = s.reshape(dim, dim, dim, dim)
    return t.transpose(3, 1, 2, 0).reshape(d2, d2) / dim


def _superop_from_choi(choi: np.ndarray) -> np.ndarray:
    d2 = choi.shape[0]
    dim = int(round(np.sqrt(d2)))
    t = (dim * choi).reshape(dim, dim, dim, dim)
    return t.transpose(3, 1, 2, 0).reshape(d2, d2)


def _kraus_from_choi(choi: np.ndarray, cutoff: float = 1e-12) -> list[np.ndarray]:
    d2 = choi.shape[0]
    dim = int(round(np.sqrt(d2)))
    w, v = np.linalg.eigh(0.5 * (choi + choi.conj().T) * dim)
    ops = []
    for val, col in zip(w[::-1], v.T[::-1]):
        if val < cutoff:
            continue
        ops.append(np.sqrt(val) * col.reshape(dim, dim).T)
    if not ops:
        ops.append(np.zeros((dim, dim), dtype=complex))
    return ops


def _superop_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(k.conj(), k) for k in kraus)


_REPRESENTATIONS = ("kraus", "chi", "superop", "choi")


class QuantumChannel:
    """A linear map on D x D matrices, stored canonically as a superoperator.

    Construct with one of the ``from_*`` class methods. The representation the
    channel was built from is remembered in :attr:`representation` so that
    serialization reproduces the caller's input.

    Validation (complete positivity via the Choi spectrum, trace preservation
    via the partial trace of the Choi state) runs on construction unless
    ``validate=False``. ``allow_trace_decreasing=True`` accepts maps with
    ``sum A^dagger A <= I`` such as leakage channels; they are flagged through
    :attr:`trace_preserving`.
    """

    __slots__ = ("_superop", "_dim", "representation", "_source", "trace_preserving")

    def __init__(self, superop, representation="superop", source=None, *, validate=True,
                 allow_trace_decreasing=False, atol=1e-10):
        s = np.array(superop, dtype=complex)
        d2 = s.shape[0]
        dim = int(round(np.sqrt(d2)))
        if s.shape != (d2, d2) or dim * dim != d2:
            raise ValueError("superoperator must be D^2 x D^2")
        s.setflags(write=False)
        self._superop = s
        self._dim = dim
        self.representation = representation
        self._source = source
        self.trace_preserving = True
        if validate:
            self._validate(atol, allow_trace_decreasing)
        else:
            self.trace_preserving = self._tp_defect() <= atol

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_kraus(cls, kraus: Iterable[np.ndarray], **kw) -> "QuantumChannel":
        ks = [np.asarray(k, dtype=complex) for k in kraus]
        if not ks:
            raise ValueError("empty Kraus list")
        return cls(_superop_from_kraus(ks), "kraus", tuple(ks), **kw)

    @classmethod
    def from_unitary(cls, u: np.ndarray, **kw) -> "QuantumChannel":
        return cls.from_kraus([u], **kw)

    @classmethod
    def from_chi(cls, chi, **kw) -> "QuantumChannel":
        if isinstance(chi, ProcessMatrix):
            chi = chi.data
        chi = np.asarray(chi, dtype=complex)
        return cls(_superop_from_chi(chi), "chi", chi, **kw)

    @classmethod
    def from_superop(cls, s: np.ndarray, **kw) -> "QuantumChannel":
        return cls(s, "superop", None, **kw)

    @classmethod
    def from_choi(cls, choi: np.ndarray, **kw) -> "QuantumChannel":
        choi = np.asarray(choi, dtype=complex)
        return cls(_superop_from_choi(choi), "choi", choi, **kw)

    @classmethod
    def identity(cls, dim: int) -> "QuantumChannel":
        return cls.from_unitary(np.eye(dim))

    # -- representations --------------------------------------------------
    @property
    def dim(self) -> int:
        return self._dim

    @property
    def superop(self) -> np.ndarray:
        return self._superop

    def choi(self) -> np.ndarray:
        return _choi_from_superop(self._superop)

    def kraus(self) -> list[np.ndarray]:
        if self.representation == "kraus":
            return list(self._source)
        return _kraus_from_choi(self.choi())

    def chi(self) -> "ProcessMatrix":
        return ProcessMatrix(_chi_from_superop(self._superop), validate=False)

    def ptm(self) -> np.ndarray:
        """Pauli transfer matrix R_ij = Tr(P_i E(P_j)) / D (real for Hermiticity-preserving maps)."""
        paulis = pauli_matrices(_nqubits(self._dim))
        vecs = np.stack([vec(p) for p in paulis], axis=1)
        return np.real(vecs.conj().T @ self._superop @ vecs) / self._dim

    # -- action -----------------------------------------------------------
    def apply(self, rho) -> np.ndarray:
        r = _as_array(rho)
        if r.shape != (self._dim, self._dim):
            raise ValueError(f"state dimension {r.shape} does not match channel dimension {self._dim}")
        return unvec(self._superop @ vec(r), self._dim)

    def compose(self, first: "QuantumChannel") -> "QuantumChannel":
        """Return ``self o first`` (``first`` acts before ``self``)."""
        if first.dim != self._dim:
            raise ValueError("dimension mismatch in composition")
        return QuantumChannel(self._superop @ first.superop, validate=False)

    # -- validation -------------------------------------------------------
    def _tp_defect(self) -> float:
        # Tr(E(X)) = Tr(X) for all X  <=>  vec(I)^dagger S = vec(I)^dagger
        row = vec(np.eye(self._dim)).conj() @ self._superop
        return float(np.max(np.abs(row - vec(np.eye(self._dim)))))

    def _validate(self, atol: float, allow_trace_decreasing: bool) -> None:
        choi = self.choi()
        if np.max(np.abs(choi - choi.conj().T)) > atol:
            raise ValidationError("map is not Hermiticity preserving")
        w = np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))
        if w[0] < -atol:
            raise ValidationError(f"map is not completely positive (min Choi eigenvalue {w[0]:.3g})")
        defect = self._tp_defect()
        if defect > atol:
            if not allow_trace_decreasing:
                raise ValidationError(f"map is not trace preserving (defect {defect:.3g})")
            # sum A^dagger A <= I  <=>  I - partial trace of D*choi is PSD
            dim = self._dim
            g = np.einsum("ipjp->ij", (dim * choi).reshape(dim, dim, dim, dim)).T
            if np.linalg.eigvalsh(np.eye(dim) - 0.5 * (g + g.conj().T))[0] < -atol:
                raise ValidationError("map increases trace")
            self.trace_preserving = False

    def is_cptp(self, atol: float = 1e-10) -> bool:
        try:
            self._validate(atol, False)
        except ValidationError:
            return False
        return True

    def __repr__(self) -> str:
        return f"QuantumChannel(dim={self._dim}, representation={self.representation!r})"


class ProcessMatrix:
    """The chi matrix of a channel in the normalized Pauli basis."""

    __slots__ = ("_data", "dim", "basis")

    def __init__(self, data, *, validate: bool = True, atol: float = 1e-8):
        chi = np.array(data, dtype=complex)
        d2 = chi.shape[0]
        dim = int(round(np.sqrt(d2)))
        if chi.shape != (d2, d2) or dim * dim != d2:
            raise ValueError("chi must be D^2 x D^2")
        chi.setflags(write=False)
        self._data = chi
        self.dim = dim
        self.basis = pauli_basis(_nqubits(dim))
        if validate:
            self.validate(atol)

    @property
    def data(self) -> np.ndarray:
        return self._data

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def completeness_defect(self) -> float:
        """max_k |sum_ij chi_ij Tr(E_i E_k E_j) / D - delta_k0|."""
        paulis = pauli_matrices(_nqubits(self.dim))
        # Tr(E_i E_k E_j) = Tr(E_k E_j E_i)
        m = np.einsum("ij,jab,ibc->ac", self._data, paulis, paulis)
        vals = np.einsum("kca,ac->k", paulis, m) / self.dim
        target = np.zeros(len(vals))
        target[0] = 1.0
        return float(np.max(np.abs(vals - target)))

    def validate(self, atol: float = 1e-8) -> None:
        chi = self._data
        if np.max(np.abs(chi - chi.conj().T)) > atol:
            raise ValidationError("chi is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (chi + chi.conj().T))[0] < -atol:
            raise ValidationError("chi is not positive semi-definite")
        if self.completeness_defect() > atol:
            raise ValidationError("chi violates trace preservation")

    def channel(self, **kw) -> QuantumChannel:
        return QuantumChannel.from_chi(self._data, **kw)

    def project_psd(self) -> "ProcessMatrix":
        """Hermitize, clip negative eigenvalues, and renormalize the trace to one."""
        h = 0.5 * (self._data + self._data.conj().T)
        w, v = np.linalg.eigh(h)
        w = np.clip(w, 0.0, None)
        out = (v * w) @ v.conj().T
        tr = np.real(np.trace(out))
        if tr > 0:
            out = out / tr
        return ProcessMatrix(out, validate=False)

    def __repr__(self) -> str:
        return f"ProcessMatrix(dim={self.dim})"


def apply_channel(ch: QuantumChannel, rho, *, strict: bool = False) -> np.ndarray:
    """Apply ``ch`` to ``rho``; with ``strict`` the channel must be CPTP."""
    if strict and not ch.is_cptp():
        raise ValidationError("strict application of a non-CPTP map")
    return ch.apply(rho)


def depolarizing_channel(p: float, n: int = 1) -> QuantumChannel:
    """Depolarizing map with total error weight ``p`` spread over the non-identity Paulis."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability must lie in [0, 1], got {p}")
    _check_n(n)
    d2 = 4**n
    weights = np.full(d2, p / (d2 - 1))
    weights[0] = 1.0 - p
    return QuantumChannel.from_chi(np.diag(weights).astype(complex))


def choi_state(ch: QuantumChannel) -> np.ndarray:
    return ch.choi()


def uhlmann_fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ||sqrt(rho) sqrt(sigma)||_1 (not squared)."""
    r = _as_array(rho)
    s = _as_array(sigma)
    if r.shape != s.shape:
        raise ValueError("states have different dimensions")
    for m in (r, s):
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] < -1e-8:
            raise ValidationError("fidelity arguments must be positive semi-definite")
    f = trace_norm(psd_sqrt(r) @ psd_sqrt(s))
    return float(min(max(f, 0.0), 1.0))


def process_fidelity(ch1: QuantumChannel, ch2: QuantumChannel) -> float:
    if ch1.dim != ch2.dim:
        raise ValueError("channel dimensions differ")
    return uhlmann_fidelity(ch1.choi(), ch2.choi())


def avg_gate_fidelity_depolarizing(p: float, dim: int) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return p + (1.0 - p) / dim


def measure_projective(rho, projectors: Sequence[np.ndarray], atol: float = 1e-10) -> np.ndarray:
    r = _as_array(rho)
    ps = [np.asarray(p, dtype=complex) for p in projectors]
    total = sum(ps)
    if np.max(np.abs(total - np.eye(r.shape[0]))) > atol:
        raise ValueError("projectors do not resolve the identity")
    probs = np.array([np.real(np.trace(p @ r)) for p in ps])
    return np.clip(probs, 0.0, 1.0)


def bell_basis() -> list[np.ndarray]:
    """Bell states ordered (Phi+, Psi+, Psi-, Phi-), matching (E_m x I)|Phi+> for m = I, X, Y, Z."""
    s = 1 / np.sqrt(2)
    return [
        np.array([s, 0, 0, s], dtype=complex),
        np.array([0, s, s, 0], dtype=complex),
        np.array([0, -s, s, 0], dtype=complex),
        np.array([s, 0, 0, -s], dtype=complex),
    ]


# ---------------------------------------------------------------------------
# random objects (used by tests and benchmarks)
# ---------------------------------------------------------------------------


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_channel(dim: int, rng: np.random.Generator, rank: int = 2) -> QuantumChannel:
    """Random CPTP map from a Haar isometry with ``rank`` Kraus operators."""
    u = random_unitary(dim * rank, rng)
    iso = u[:, :dim]
    kraus = [iso[k * dim:(k + 1) * dim, :] for k in range(rank)]
    return QuantumChannel.from_kraus(kraus)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def complex_to_pairs(a) -> list:
    arr = np.asarray(a, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def complex_from_pairs(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def channel_to_json(ch: QuantumChannel) -> str:
    rep = ch.representation
    if rep == "kraus":
        data = [complex_to_pairs(k) for k in ch.kraus()]
    elif rep == "chi":
        data = complex_to_pairs(ch.chi().data)
    elif rep == "choi":
        data = complex_to_pairs(ch.choi())
    else:
        data = complex_to_pairs(ch.superop)
    return json.dumps({"representation": rep, "dim": ch.dim, "data": data})


def channel_from_json(text: str, **kw) -> QuantumChannel:
    obj = json.loads(text)
    rep = obj.get("representation")
    if rep not in _REPRESENTATIONS:
        raise ValueError(f"unknown channel representation {rep!r}")
    if rep == "kraus":
        ch = QuantumChannel.from_kraus([complex_from_pairs(k) for k in obj["data"]], **kw)
    else:
        ch = getattr(QuantumChannel, f"from_{rep}")(complex_from_pairs(obj["data"]), **kw)
    if ch.dim != obj.get("dim", ch.dim):
        raise ValueError("dimension field does not match data")
    return ch
