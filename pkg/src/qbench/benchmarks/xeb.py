"""Linear cross-entropy benchmarking of random circuits.

A depth-``P`` circuit starts with Haar-random single-qubit gates on every
qubit and then repeats ``P`` layers, each made of Haar-random two-qubit gates
on a brickwork pattern (even pairs, then odd pairs) followed by fresh
single-qubit Haar gates. Pauli noise acts after every layer. Averaged over
instances the XEB fidelity decays as ``A exp(-lambda P)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import random_unitary
from ..dynamics.sequences import make_rng, seed_sequence
from ..dynamics.statevector import pauli_trajectory_sample, statevector_apply
from ..fitting import FitResult, fit

__all__ = [
    "XEBResult",
    "xeb_estimators",
    "random_circuit",
    "ideal_probabilities",
    "rcs_benchmark",
    "fit_rcs",
    "MAX_XEB_QUBITS",
]

MAX_XEB_QUBITS = 12
_PROB_FLOOR = 1e-300


def xeb_estimators(samples, ideal_probs) -> tuple[float, float, float]:
    """Linear XEB, unbiased linear XEB and log cross-entropy of sampled bitstrings.

    ``samples`` are basis indices; ``ideal_probs`` is the full ideal
    distribution over all ``D`` outcomes.
    """
    p = np.asarray(ideal_probs, float)
    x = np.asarray(samples, dtype=np.int64)
    if x.size == 0:
        raise ValueError("need at least one sample")
    d = p.size
    pu = p[x]
    f_xeb = d * float(np.mean(pu)) - 1.0
    denom = d * float(np.sum(p**2)) - 1.0
    if denom <= 0:
        raise ValueError("ideal distribution is uniform; the unbiased estimator is undefined")
    if np.any(pu < _PROB_FLOOR):
        warnings.warn("zero ideal probability in a sample; clamped for the log cross-entropy", RuntimeWarning,
                      stacklevel=2)
    s_log = -float(np.mean(np.log(np.maximum(pu, _PROB_FLOOR))))
    return f_xeb, f_xeb / denom, s_log


def random_circuit(n: int, depth: int, rng: np.random.Generator) -> list:
    """``depth`` layers of ``(matrix, qubits)`` gates; the opening single-qubit layer joins layer one."""
    if n < 2:
        raise ValueError("random circuits need at least two qubits")
    if depth < 1:
        raise ValueError("depth must be positive")
    layers = []
    for p in range(depth):
        layer = [(random_unitary(2, rng), (q,)) for q in range(n)] if p == 0 else []
        for a in range(p % 2, n - 1, 2):
            layer.append((random_unitary(4, rng), (a, a + 1)))
        layer.extend((random_unitary(2, rng), (q,)) for q in range(n))
        layers.append(layer)
    return layers


def ideal_probabilities(layers, n: int) -> np.ndarray:
    psi = statevector_apply([g for layer in layers for g in layer], n)
    return np.abs(psi) ** 2


def fit_rcs(depths, fidelities, sem=None) -> FitResult:
    """Fit ``A exp(-lambda P)`` from a log-linear start on the positive points."""
    x = np.asarray(depths, float)
    y = np.asarray(fidelities, float)
    good = y > 0
    if good.sum() >= 2:
        slope, icpt = np.polyfit(x[good], np.log(y[good]), 1)
        p0 = {"A": math.exp(icpt), "lambda": max(-slope, 0.0)}
    else:
        p0 = {"A": 1.0, "lambda": 1.0 / max(x.max(), 1.0)}
    w = None
    if sem is not None and np.all(np.asarray(sem) > 0):
        w = 1.0 / np.asarray(sem, float) ** 2
    return fit("rcs_exp", x, y, w, p0)


@dataclass
class XEBResult:
    n: int
    depths: np.ndarray
    M: int
    L: int
    f_xeb: np.ndarray = field(repr=False)
    f_uxeb: np.ndarray = field(repr=False)
    s_log: np.ndarray = field(repr=False)
    denominators: np.ndarray = field(repr=False)
    mean: np.ndarray = field(default=None)
    sem: np.ndarray = field(default=None)
    fit: FitResult | None = None
    A: float = math.nan
    lam: float = math.nan
    lam_err: float = math.nan
    predicted_lambda: float = math.nan
    estimator: str = "unbiased"
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "depths": [int(p) for p in self.depths], "M": self.M, "L": self.L,
            "estimator": self.estimator,
            "mean": [float(v) for v in self.mean], "sem": [float(v) for v in self.sem],
            "mean_linear": [float(v) for v in self.f_xeb.mean(axis=1)],
            "mean_unbiased": [float(v) for v in self.f_uxeb.mean(axis=1)],
            "mean_denominator": [float(v) for v in self.denominators.mean(axis=1)],
            "A": float(self.A), "lambda": float(self.lam), "lambda_err": float(self.lam_err),
            "predicted_lambda": float(self.predicted_lambda),
            "fit": None if self.fit is None else self.fit.to_dict(),
            "flags": list(self.flags),
        }


def rcs_benchmark(n: int, depths: Sequence[int], L: int = 10, pauli_noise=0.0, M: int = 1000, seed=None,
                  estimator: str = "unbiased") -> XEBResult:
    """Random circuit sampling benchmark.

    ``pauli_noise`` is either the total error probability per layer, spread
    uniformly over the non-identity Pauli strings, or a full table over the
    ``4**n`` strings; the predicted decay rate is its non-identity weight.
    Every (depth, instance) pair draws its circuit and samples from its own
    child seed.
    """
    if not 2 <= n <= MAX_XEB_QUBITS:
        raise ValueError(f"need 2 <= n <= {MAX_XEB_QUBITS}")
    if L < 1 or M < 1:
        raise ValueError("L and M must be positive")
    if estimator not in ("unbiased", "linear"):
        raise ValueError("estimator must be 'unbiased' or 'linear'")
    depths = np.asarray(sorted(set(int(p) for p in depths)), dtype=np.int64)
    if depths.size == 0 or depths[0] < 1:
        raise ValueError("depths must be positive integers")
    predicted = float(pauli_noise) if np.isscalar(pauli_noise) else float(np.sum(np.asarray(pauli_noise)[1:]))
    children = seed_sequence(seed).spawn(depths.size * L)
    shape = (depths.size, L)
    f_lin, f_unb, s_log, denom = (np.empty(shape) for _ in range(4))
    for i, p in enumerate(depths):
        for j in range(L):
            circ_seed, sample_seed = children[i * L + j].spawn(2)
            layers = random_circuit(n, int(p), make_rng(circ_seed))
            probs = ideal_probabilities(layers, n)
            samples = pauli_trajectory_sample(layers, n, pauli_noise, sample_seed, M)
            f_lin[i, j], f_unb[i, j], s_log[i, j] = xeb_estimators(samples, probs)
            denom[i, j] = probs.size * float(np.sum(probs**2)) - 1.0
    per = f_unb if estimator == "unbiased" else f_lin
    mean = per.mean(axis=1)
    sem = per.std(axis=1, ddof=1) / math.sqrt(L) if L > 1 else np.zeros(depths.size)
    res = XEBResult(n, depths, M, L, f_lin, f_unb, s_log, denom, mean, sem, predicted_lambda=predicted,
                    estimator=estimator)
    if depths.size < 4:
        res.flags.append("too_few_depths_to_fit")
        return res
    try:
        fr = fit_rcs(depths, mean, sem if L > 1 else None)
    except (ValueError, np.linalg.LinAlgError) as exc:
        res.flags.append(f"fit_failed: {exc}")
        return res
    if not fr.converged:
        res.flags.append("fit_not_converged")
    res.fit = fr
    res.A, res.lam, res.lam_err = fr.params["A"], fr.params["lambda"], fr.errors["lambda"]
    return res
