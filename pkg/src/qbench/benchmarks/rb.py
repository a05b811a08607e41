"""Single-qubit randomized benchmarking and interleaved RB.

Noisy Cliffords are affine maps of the Bloch vector, stored as 4x4 matrices
acting on ``(1, vx, vy, vz)`` (for trace-preserving maps this is the Pauli
transfer matrix). A sequence of ``m`` random Cliffords is closed by the
inverse of their product, looked up in the group tables, and the survival
probability of |0> is ``(1 + vz) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import QuantumChannel
from ..dynamics.bloch import segment_propagator
from ..dynamics.sequences import make_rng, pulse_library, seed_sequence
from ..fitting import FitResult, fit_rb
from ..pulses import NoiseParams, PulseSpec
from .clifford import clifford_group

__all__ = [
    "DEFAULT_DEPTHS",
    "CliffordNoiseModel",
    "RBResult",
    "IRBResult",
    "rb_infidelity",
    "irb_error_bound",
    "rb_run",
    "irb_run",
]

# roughly geometric from 2 to 700
DEFAULT_DEPTHS = tuple(int(v) for v in np.unique(np.round(np.geomspace(2, 700, 24) / 2) * 2))

_D = 2


@dataclass(frozen=True)
class CliffordNoiseModel:
    """Noisy 4x4 Bloch maps of the 24 Cliffords, indexed like :func:`clifford_group`."""

    maps: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        maps = np.asarray(self.maps, float)
        if maps.shape != (24, 4, 4):
            raise ValueError("need one 4x4 Bloch map per Clifford")
        object.__setattr__(self, "maps", maps)

    @classmethod
    def ideal(cls) -> "CliffordNoiseModel":
        return cls(clifford_group().ptms.copy(), "ideal")

    @classmethod
    def depolarizing(cls, p: float) -> "CliffordNoiseModel":
        """Every Clifford followed by ``rho -> p rho + (1 - p) I / 2``."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("depolarizing parameter must lie in [0, 1]")
        dep = np.diag([1.0, p, p, p])
        return cls(np.einsum("ab,kbc->kac", dep, clifford_group().ptms), f"depolarizing({p})")

    @classmethod
    def from_channel(cls, channel: QuantumChannel) -> "CliffordNoiseModel":
        """Every Clifford followed by the same single-qubit channel."""
        if channel.dim != 2:
            raise ValueError("RB here is single-qubit")
        r = channel.ptm()
        return cls(np.einsum("ab,kbc->kac", r, clifford_group().ptms), "channel")

    @classmethod
    def from_pulses(cls, template: PulseSpec, noise: NoiseParams) -> "CliffordNoiseModel":
        """Simulate each Clifford's pulse word with the Bloch equations.

        Quarter-turn pulses carry half the template's rotation error and a
        quarter of its phase error (see :func:`pulse_library`). The identity
        Clifford is realized without pulses and takes no time.
        """
        lib = pulse_library(template)
        maps = []
        for word in clifford_group().decompositions:
            u = np.eye(4)
            for name in word:
                u = segment_propagator(lib[name], noise) @ u
            maps.append(u)
        return cls(np.array(maps), "pulses")


def _seed_json(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return seed


def rb_infidelity(p: float, dim: int = _D) -> float:
    return (dim - 1) * (1 - p) / dim


def irb_error_bound(p: float, p_inter: float, dim: int = _D) -> float:
    """Half-width of the interval that must contain the interleaved gate's error rate."""
    if p >= 1.0:
        return 0.0
    d2 = dim * dim
    first = (dim - 1) * (abs(p - p_inter / p) + (1 - p)) / dim
    second = 2 * (d2 - 1) * (1 - p) / (p * d2) + 4 * math.sqrt(1 - p) * math.sqrt(d2 - 1) / p
    return min(first, second)


@dataclass
class RBResult:
    depths: np.ndarray
    mean: np.ndarray
    sem: np.ndarray
    survival: np.ndarray = field(repr=False)
    fit: FitResult | None
    A: float
    p: float
    B: float
    p_err: float
    r_C: float
    r_C_err: float
    K: int
    shots: int
    seed: object
    interleaved: int | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "depths": [int(m) for m in self.depths],
            "mean": [float(v) for v in self.mean],
            "sem": [float(v) for v in self.sem],
            "A": float(self.A), "p": float(self.p), "B": float(self.B), "p_err": float(self.p_err),
            "r_C": float(self.r_C), "r_C_err": float(self.r_C_err),
            "K": int(self.K), "shots": int(self.shots), "seed": _seed_json(self.seed),
            "interleaved": self.interleaved,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "flags": list(self.flags),
        }


@dataclass
class IRBResult:
    r_G: float
    r_G_err: float
    E: float
    p: float
    p_inter: float
    interleaved: RBResult
    flags: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.flags

    def to_dict(self) -> dict:
        return {"r_G": float(self.r_G), "r_G_err": float(self.r_G_err), "E": float(self.E),
                "p": float(self.p), "p_inter": float(self.p_inter), "valid": self.valid,
                "flags": list(self.flags), "interleaved": self.interleaved.to_dict()}


def _check_depths(depths) -> np.ndarray:
    d = np.asarray(sorted(set(int(m) for m in depths)), dtype=np.int64)
    if d.size == 0 or d[0] < 1:
        raise ValueError("depths must be a non-empty set of positive integers")
    return d


def _survival(model: CliffordNoiseModel, depth: int, K: int, rng: np.random.Generator,
              interleaved: int | None, gate_map: np.ndarray | None) -> np.ndarray:
    group = clifford_group()
    draws = rng.integers(0, 24, size=(K, depth))
    x = np.tile(np.array([1.0, 0.0, 0.0, 1.0]), (K, 1))
    net = np.zeros(K, dtype=np.int64)
    for i in range(depth):
        c = draws[:, i]
        x = np.einsum("kab,kb->ka", model.maps[c], x)
        net = group.multiply[c, net]
        if interleaved is not None:
            x = x @ gate_map.T
            net = group.multiply[interleaved, net]
    inv = group.inverse[net]
    x = np.einsum("kab,kb->ka", model.maps[inv], x)
    return np.clip(0.5 * (x[:, 0] + x[:, 3]), 0.0, 1.0)


def _rb_core(model, depths, K, shots, seed, interleaved=None, gate_map=None) -> RBResult:
    if K < 2:
        raise ValueError("need at least two random sequences per depth")
    if shots < 0:
        raise ValueError("shots must be non-negative")
    depths = _check_depths(depths)
    root = seed_sequence(seed)
    children = root.spawn(len(depths))
    surv = np.empty((len(depths), K))
    for j, (m, child) in enumerate(zip(depths, children)):
        rng = make_rng(child)
        exact = _survival(model, int(m), K, rng, interleaved, gate_map)
        surv[j] = exact if shots == 0 else rng.binomial(shots, exact) / shots
    mean = surv.mean(axis=1)
    sem = surv.std(axis=1, ddof=1) / math.sqrt(K)
    flags = []
    if np.ptp(mean) < 1e-12:
        # a flat curve carries no decay: the noiseless limit
        flags.append("flat_curve")
        return RBResult(depths, mean, sem, surv, None, 0.0, 1.0, float(mean[-1]), 0.0, 0.0, 0.0,
                        K, shots, seed, interleaved, flags)
    w = 1.0 / sem**2 if np.all(sem > 0) else None
    fr = fit_rb(depths.astype(float), mean, w)
    if not fr.converged:
        flags.append("fit_not_converged")
    p, sp = fr.params["p"], fr.errors["p"]
    return RBResult(depths, mean, sem, surv, fr, fr.params["A"], p, fr.params["B"], sp,
                    rb_infidelity(p), (_D - 1) / _D * sp, K, shots, seed, interleaved, flags)


def rb_run(model: CliffordNoiseModel, depths: Sequence[int] = DEFAULT_DEPTHS, K: int = 30, shots: int = 800,
           seed=None) -> RBResult:
    """Standard RB: ``K`` random sequences per depth, each closed by its inverse.

    ``shots=0`` records exact survival probabilities. Depths draw independent
    sequences from child seeds of ``seed``.
    """
    return _rb_core(model, depths, K, shots, seed)


def irb_run(model: CliffordNoiseModel, gate: int, baseline: RBResult, depths: Sequence[int] | None = None,
            K: int | None = None, shots: int | None = None, seed=None, gate_map=None) -> IRBResult:
    """Interleave Clifford ``gate`` after every random Clifford and compare with ``baseline``.

    ``gate_map`` overrides the noisy 4x4 map of the interleaved gate (default:
    the model's own map for that Clifford). Unphysical outcomes are flagged,
    never raised.
    """
    if not 0 <= gate < 24:
        raise ValueError("gate must be a Clifford index in 0..23")
    gmap = model.maps[gate] if gate_map is None else np.asarray(gate_map, float)
    if gmap.shape != (4, 4):
        raise ValueError("gate_map must be 4x4")
    inter = _rb_core(model, baseline.depths if depths is None else depths,
                     baseline.K if K is None else K, baseline.shots if shots is None else shots,
                     seed, interleaved=gate, gate_map=gmap)
    p, p_int = baseline.p, inter.p
    flags = []
    if p <= 0:
        flags.append("baseline_decay_zero")
        return IRBResult(math.nan, math.nan, math.nan, p, p_int, inter, flags)
    r_g = (_D - 1) / _D * (1 - p_int / p)
    err = (_D - 1) / _D * math.hypot(inter.p_err / p, p_int * baseline.p_err / p**2)
    e = irb_error_bound(p, p_int)
    if r_g < 0:
        flags.append("negative_error_rate")
    if r_g + e > 1:
        flags.append("error_bound_exceeds_one")
    return IRBResult(r_g, err, e, p, p_int, inter, flags)
