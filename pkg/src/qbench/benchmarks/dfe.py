"""Direct fidelity estimation for pure target states and unitary gates.

State version: Pauli indices ``k`` are drawn with probability
``sigma_k**2 / D`` (``sigma_k = Tr(sigma P_k)``); each drawn Pauli is measured
on the prepared state with a fixed number of +-1 shots, and the estimate is
the mean of ``rho_k / sigma_k``. Its expectation is ``Tr(sigma rho)``.

Process version: Pauli pairs ``(P_j, P_k)`` are drawn with probability
``Tr(U(P_j) P_k)**2 / D**4``; the noisy image of ``P_j`` is measured through
the eigenstates of ``P_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import QuantumChannel, pauli_matrices
from ..dynamics.sequences import make_rng, seed_sequence
from ..dynamics.statevector import GATES, statevector_apply

__all__ = [
    "DFEPlan",
    "DFEResult",
    "DFEProcessResult",
    "pauli_coefficients",
    "dfe_failure_bound",
    "dfe_plan",
    "dfe_state",
    "dfe_process",
    "dfe_relevant_pairs",
    "random_stabilizer_state",
]

_SUPPORT_CUTOFF = 1e-10


def _nq(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def pauli_coefficients(op: np.ndarray) -> np.ndarray:
    """``Tr(op P_k)`` for every Pauli string (real part; ``op`` Hermitian)."""
    op = np.asarray(op, dtype=complex)
    paulis = pauli_matrices(_nq(op.shape[0]))
    return np.real(np.einsum("kij,ji->k", paulis, op))


@dataclass
class DFEPlan:
    """Sampled Pauli indices and a uniform per-index shot budget."""

    dim: int
    probabilities: np.ndarray
    indices: np.ndarray
    shots_per_index: int
    epsilon1: float
    epsilon2: float

    @property
    def N(self) -> int:
        return int(self.indices.size)


def dfe_failure_bound(N: int, sigma_sampled: np.ndarray, shots_per_index: int, epsilon1: float,
                      epsilon2: float) -> float:
    """Upper bound on ``P(|F - F_est| >= eps1 + eps2)`` for the sampled indices.

    With exact expectations (``shots_per_index == 0``) only the Monte Carlo
    term remains.
    """
    mc = 1.0 / (N * epsilon1**2)
    if shots_per_index == 0:
        return min(1.0, mc)
    spread = float(np.sum(1.0 / (np.asarray(sigma_sampled) ** 2 * shots_per_index)))
    return min(1.0, mc + 2.0 * math.exp(-0.5 * epsilon2**2 * N**2 / spread))


def _distribution(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    coeff = pauli_coefficients(sigma)
    coeff[np.abs(coeff) < _SUPPORT_CUTOFF] = 0.0
    probs = coeff**2 / sigma.shape[0]
    total = probs.sum()
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"target is not pure: Pauli weights sum to {total}")
    return coeff, probs / total


def dfe_plan(sigma, epsilon1: float = 0.01, epsilon2: float = 0.01, delta: float = 0.1, seed=None,
             N: int | None = None, shots_per_index: int | None = None) -> DFEPlan:
    """Draw the Pauli indices and choose the shot budget.

    Unless given, ``N`` makes the Monte Carlo term ``1/(N eps1^2)`` equal to
    ``delta / 2`` and the uniform per-index budget makes the measurement term at
    most ``delta / 2`` for the indices actually drawn.
    """
    if epsilon1 <= 0 or epsilon2 <= 0 or not 0 < delta < 1:
        raise ValueError("need eps1, eps2 > 0 and 0 < delta < 1")
    sigma = np.asarray(sigma, dtype=complex)
    coeff, probs = _distribution(sigma)
    if N is None:
        N = math.ceil(2.0 / (delta * epsilon1**2))
    if N < 1:
        raise ValueError("N must be positive")
    rng = make_rng(seed)
    idx = rng.choice(probs.size, size=N, p=probs)
    if shots_per_index is None:
        spread = float(np.sum(1.0 / coeff[idx] ** 2))
        shots_per_index = max(1, math.ceil(2.0 * math.log(4.0 / delta) * spread / (N**2 * epsilon2**2)))
    return DFEPlan(sigma.shape[0], probs, idx, int(shots_per_index), epsilon1, epsilon2)


@dataclass
class DFEResult:
    estimate: float
    sem: float
    failure_bound: float
    N: int
    shots_per_index: int
    epsilon1: float
    epsilon2: float
    exact_mode: bool

    def to_dict(self) -> dict:
        return {"estimate": float(self.estimate), "sem": float(self.sem),
                "failure_bound": float(self.failure_bound), "N": int(self.N),
                "shots_per_index": int(self.shots_per_index), "epsilon": self.epsilon1 + self.epsilon2,
                "epsilon1": float(self.epsilon1), "epsilon2": float(self.epsilon2),
                "exact_mode": bool(self.exact_mode)}


def _pm1_mean(expectation: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Sample means of +-1 outcomes with the given expectations."""
    p_plus = np.clip(0.5 * (1.0 + expectation), 0.0, 1.0)
    return 2.0 * rng.binomial(shots, p_plus) / shots - 1.0


def dfe_state(sigma, rho, epsilon1: float = 0.01, epsilon2: float = 0.01, delta: float = 0.1, seed=None,
              N: int | None = None, shots_per_index: int | None = None, exact: bool = False) -> DFEResult:
    """Estimate ``Tr(sigma rho)`` for a pure target ``sigma``.

    ``exact=True`` uses the exact Pauli expectations of ``rho`` (Monte Carlo
    over indices only).
    """
    sigma = np.asarray(sigma, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if sigma.shape != rho.shape:
        raise ValueError("target and state dimensions differ")
    root = seed_sequence(seed)
    plan_seed, shot_seed = root.spawn(2)
    plan = dfe_plan(sigma, epsilon1, epsilon2, delta, plan_seed, N, 0 if exact else shots_per_index)
    s_coeff = pauli_coefficients(sigma)
    r_coeff = pauli_coefficients(rho)
    s = s_coeff[plan.indices]
    r = r_coeff[plan.indices]
    if not exact:
        r = _pm1_mean(r, plan.shots_per_index, make_rng(shot_seed))
    x = r / s
    sem = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf
    bound = dfe_failure_bound(plan.N, s, 0 if exact else plan.shots_per_index, epsilon1, epsilon2)
    return DFEResult(float(np.mean(x)), sem, bound, plan.N, 0 if exact else plan.shots_per_index,
                     epsilon1, epsilon2, exact)


def random_stabilizer_state(n: int, rng: np.random.Generator, gates: int | None = None) -> np.ndarray:
    """State vector of a random Clifford circuit (H, S, CNOT) applied to |0...0>."""
    count = 10 * n * n if gates is None else gates
    circuit = []
    for _ in range(count):
        kind = rng.integers(0, 3 if n > 1 else 2)
        if kind == 0:
            circuit.append((GATES["H"], (int(rng.integers(n)),)))
        elif kind == 1:
            circuit.append((GATES["S"], (int(rng.integers(n)),)))
        else:
            a, b = rng.choice(n, size=2, replace=False)
            circuit.append((GATES["CNOT"], (int(a), int(b))))
    return statevector_apply(circuit, n)


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------


def dfe_relevant_pairs(u: np.ndarray, cutoff: float = _SUPPORT_CUTOFF) -> tuple[np.ndarray, np.ndarray]:
    """All ``(j, k)`` with ``|Tr(U P_j U^dagger P_k)| > cutoff`` and the characteristic values."""
    u = np.asarray(u, dtype=complex)
    paulis = pauli_matrices(_nq(u.shape[0]))
    images = np.einsum("ab,jbc,dc->jad", u, paulis, u.conj())
    chi = np.real(np.einsum("jab,kba->jk", images, paulis))
    pairs = np.argwhere(np.abs(chi) > cutoff)
    return pairs, chi


@dataclass
class DFEProcessResult:
    F_proc: float
    sem: float
    F_avg: float
    F_e: float
    samples: int
    shots: int
    set_size: int
    pairs: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"F_proc": float(self.F_proc), "sem": float(self.sem), "F_avg": float(self.F_avg),
                "F_e": float(self.F_e), "samples": int(self.samples), "shots": int(self.shots),
                "set_size": int(self.set_size)}


def dfe_process(u, channel: QuantumChannel, samples: int = 200, shots: int = 0, seed=None) -> DFEProcessResult:
    """Estimate the process fidelity of ``channel`` to the unitary ``u``.

    For each sampled pair the ``D`` eigenstates of ``P_j`` are sent through
    the channel and ``P_k`` is measured on each (``shots`` +-1 outcomes per
    eigenstate; ``0`` uses exact expectations). ``F_e`` is the entanglement
    fidelity ``Tr(S_U^dagger S)/D^2`` of the two superoperators, which for a
    unitary target coincides with the process fidelity being estimated.
    """
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    if not np.allclose(u.conj().T @ u, np.eye(d), atol=1e-10):
        raise ValueError("target must be unitary")
    if channel.dim != d:
        raise ValueError("channel and target dimensions differ")
    if samples < 1:
        raise ValueError("samples must be positive")
    pairs, chi = dfe_relevant_pairs(u)
    weights = chi[pairs[:, 0], pairs[:, 1]] ** 2 / d**4
    weights = weights / weights.sum()
    rng = make_rng(seed)
    draw = pairs[rng.choice(len(pairs), size=samples, p=weights)]
    paulis = pauli_matrices(_nq(d))
    ratios = np.empty(samples)
    eig_cache: dict = {}
    for s, (j, k) in enumerate(draw):
        if j not in eig_cache:
            eig_cache[j] = np.linalg.eigh(paulis[j])
        lam, vecs = eig_cache[j]
        total = 0.0
        for i in range(d):
            psi = vecs[:, i]
            out = channel.apply(np.outer(psi, psi.conj()))
            a = float(np.real(np.trace(paulis[k] @ out)))
            if shots > 0:
                a = float(_pm1_mean(np.array([a]), shots, rng)[0])
            total += lam[i] * a
        ratios[s] = total / chi[j, k]
    f = float(np.mean(ratios))
    sem = float(np.std(ratios, ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    s_u = np.kron(u.conj(), u)
    f_e = float(np.real(np.trace(s_u.conj().T @ channel.superop))) / d**2
    return DFEProcessResult(f, sem, (d * f + 1) / (d + 1), f_e, samples, shots, len(pairs), pairs)
