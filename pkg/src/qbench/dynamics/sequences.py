"""Stroboscopic pulse-sequence experiments.

A sequence prepares a pure state, repeats a cycle of pulses ``n`` times,
undoes the preparation and records the ground-state probability, which equals
the fidelity with the prepared state: ``F = (1 + v0 . v) / 2``.

Cycles are written in time order: ``("Y", "Yb")`` applies Y first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from ..pulses import NoiseParams, PulseSpec, coherent_errors
from .bloch import FreeEvolution, Segment, segment_propagator, spherical_bloch

__all__ = [
    "UR6_PHASES",
    "PREPARATIONS",
    "NAMED_CYCLES",
    "SequenceSpec",
    "ExperimentRecord",
    "make_rng",
    "seed_sequence",
    "pulse_library",
    "cycle_segments",
    "preparation_vector",
    "exact_fidelities",
    "sample_fidelities",
    "run_sequence",
]

# Universally robust six-pulse sequence: pi pulses with drive phases
# phi_k = (k-1)(k-2)/2 * Phi + (k-1) * phi2 with Phi = phi2 = 2 pi / 3.
UR6_PHASES = (0.0, 2 * math.pi / 3, 0.0, 0.0, 2 * math.pi / 3, 0.0)

PREPARATIONS = {
    "0": (0.0, 0.0, 1.0),
    "1": (0.0, 0.0, -1.0),
    "+": (1.0, 0.0, 0.0),
    "-": (-1.0, 0.0, 0.0),
    "+i": (0.0, 1.0, 0.0),
    "-i": (0.0, -1.0, 0.0),
}

NAMED_CYCLES = {
    "XX": ("X", "X"),
    "XXb": ("X", "Xb"),
    "YY": ("Y", "Y"),
    "YYb": ("Y", "Yb"),
    "YbY": ("Yb", "Y"),
    "XbX": ("Xb", "X"),
    "free": ("idle", "idle"),
    "UR6": tuple(f"UR6_{k}" for k in range(6)),
}


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, ``None`` or an existing sequence (returned unchanged)."""
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; children via ``SeedSequence.spawn``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed)))


def preparation_vector(prep) -> np.ndarray:
    """Bloch vector of a preparation label or a (theta, phi) pair in radians."""
    if isinstance(prep, str):
        if prep not in PREPARATIONS:
            raise ValueError(f"unknown preparation {prep!r}")
        return np.array(PREPARATIONS[prep])
    theta, phi = prep
    return spherical_bloch(theta, phi)


def pulse_library(template: PulseSpec) -> dict[str, Segment]:
    """Named pulses derived from a template pi pulse.

    Half-angle pulses carry half the template's rotation error and a quarter of
    its phase error.
    """
    dth, dph = coherent_errors(template)
    base = replace(template, phase=0.0, sign=1)
    pi_x = replace(base, axis="x")
    pi_y = replace(base, axis="y")
    half = replace(base, angle=0.5 * template.angle).with_errors(0.5 * dth, 0.25 * dph)
    lib: dict[str, Segment] = {
        "X": pi_x,
        "Xb": pi_x.flipped(),
        "Y": pi_y,
        "Yb": pi_y.flipped(),
        "X90": replace(half, axis="x"),
        "Xb90": replace(half, axis="x", sign=-1),
        "Y90": replace(half, axis="y"),
        "Yb90": replace(half, axis="y", sign=-1),
        "idle": FreeEvolution(template.gate_duration),
    }
    for k, ph in enumerate(UR6_PHASES):
        lib[f"UR6_{k}"] = replace(pi_x, phase=ph)
    return lib


@dataclass(frozen=True)
class SequenceSpec:
    """Preparation, repeated cycle and the list of repetition counts."""

    preparation: Union[str, tuple] = "+"
    cycle: Union[str, tuple] = "XX"
    repetitions: tuple = tuple(range(1, 301))

    def __post_init__(self):
        reps = tuple(int(n) for n in self.repetitions)
        if not reps or reps[0] < 0 or any(b <= a for a, b in zip(reps, reps[1:])):
            raise ValueError("repetitions must be non-negative and strictly increasing")
        object.__setattr__(self, "repetitions", reps)
        if isinstance(self.cycle, str) and self.cycle not in NAMED_CYCLES:
            raise ValueError(f"unknown cycle {self.cycle!r}")
        preparation_vector(self.preparation)

    @property
    def labels(self) -> tuple:
        return NAMED_CYCLES[self.cycle] if isinstance(self.cycle, str) else tuple(self.cycle)

    @property
    def name(self) -> str:
        return self.cycle if isinstance(self.cycle, str) else "".join(self.cycle)

    def to_dict(self) -> dict:
        prep = self.preparation if isinstance(self.preparation, str) else list(self.preparation)
        cyc = self.cycle if isinstance(self.cycle, str) else list(self.cycle)
        return {"preparation": prep, "cycle": cyc, "repetitions": list(self.repetitions)}

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceSpec":
        prep = d.get("preparation", "+")
        cyc = d.get("cycle", "XX")
        reps = d.get("repetitions", list(range(1, 301)))
        return cls(prep if isinstance(prep, str) else tuple(prep),
                   cyc if isinstance(cyc, str) else tuple(cyc), tuple(reps))


@dataclass(frozen=True)
class ExperimentRecord:
    sequence: SequenceSpec
    times: np.ndarray
    fidelities: np.ndarray
    shots: int
    seed: int | None
    exact: bool
    exact_fidelities: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.times) != len(self.fidelities):
            raise ValueError("times and fidelities differ in length")
        f = np.asarray(self.fidelities)
        if np.any(f < 0) or np.any(f > 1):
            raise ValueError("fidelities must lie in [0, 1]")

    @property
    def repetitions(self) -> np.ndarray:
        return np.asarray(self.sequence.repetitions)

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence.to_dict(),
            "times_s": [float(t) for t in self.times],
            "fidelities": [float(f) for f in self.fidelities],
            "shots": int(self.shots),
            "seed": self.seed,
            "exact": bool(self.exact),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        return cls(SequenceSpec.from_dict(d["sequence"]), np.asarray(d["times_s"], float),
                   np.asarray(d["fidelities"], float), int(d["shots"]), d.get("seed"), bool(d["exact"]))


def cycle_segments(seq: SequenceSpec, library: dict[str, Segment]) -> list[Segment]:
    try:
        return [library[name] for name in seq.labels]
    except KeyError as exc:
        raise ValueError(f"pulse {exc.args[0]!r} not in the pulse library") from None


def _cycle_duration(segs: Sequence[Segment]) -> float:
    return sum(s.duration if isinstance(s, FreeEvolution) else s.gate_duration for s in segs)


def exact_fidelities(seq: SequenceSpec, template: PulseSpec, noise: NoiseParams,
                     library: dict[str, Segment] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free-sampling fidelities ``F(n)`` and times ``t_n`` for every repetition count."""
    lib = pulse_library(template) if library is None else library
    segs = cycle_segments(seq, lib)
    cyc = np.eye(4)
    for s in segs:
        cyc = segment_propagator(s, noise) @ cyc
    v0 = preparation_vector(seq.preparation)
    x = np.concatenate([[1.0], v0])
    out = np.empty(len(seq.repetitions))
    current = 0
    for i, n in enumerate(seq.repetitions):
        if n - current > 64:
            x = np.linalg.matrix_power(cyc, n - current) @ x
        else:
            for _ in range(n - current):
                x = cyc @ x
        current = n
        out[i] = 0.5 * (1.0 + v0 @ x[1:])
    times = np.asarray(seq.repetitions, float) * _cycle_duration(segs)
    return times, np.clip(out, 0.0, 1.0)


def sample_fidelities(p: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Binomial shot sampling of ground-state probabilities."""
    return rng.binomial(shots, np.clip(p, 0.0, 1.0)) / shots


def run_sequence(seq: SequenceSpec, template: PulseSpec, noise: NoiseParams, shots: int = 0,
                 seed: int | None = None, library: dict[str, Segment] | None = None) -> ExperimentRecord:
    """Simulate one stroboscopic experiment; ``shots=0`` returns exact expectations."""
    if shots < 0:
        raise ValueError("shots must be non-negative")
    times, exact = exact_fidelities(seq, template, noise, library)
    if shots == 0:
        return ExperimentRecord(seq, times, exact, 0, seed, True, exact)
    sampled = sample_fidelities(exact, shots, make_rng(seed))
    return ExperimentRecord(seq, times, sampled, shots, seed, False, exact)
