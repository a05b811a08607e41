"""Deterministic benchmarking: learn T1, T2 and the two coherent pulse errors
from four short experiments, then test the learned model on others.

Learning experiments (preparation, cycle): ``(|1>, free)``, ``(|+>, XX)``,
``(|+>, YY)`` and ``(|+>, XXb)``. Test experiments: ``YYb``, ``YbY`` and
``UR6`` on ``|+>``. Fits run in microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..dynamics.analytic import saturation_offset
from ..dynamics.sequences import ExperimentRecord, SequenceSpec, exact_fidelities, run_sequence, seed_sequence
from ..fitting import DBParams, FitResult, extract_db_params, fit_db
from ..pulses import NoiseParams, PulseSpec

__all__ = [
    "LEARNING_EXPERIMENTS",
    "TEST_EXPERIMENTS",
    "DBResult",
    "db_run",
    "db_temperature",
    "db_sequence_preference",
    "TEMPERATURE_INFINITE",
]

LEARNING_EXPERIMENTS = {
    "free": SequenceSpec("1", "free"),
    "XX": SequenceSpec("+", "XX"),
    "YY": SequenceSpec("+", "YY"),
    "XXb": SequenceSpec("+", "XXb"),
}
TEST_EXPERIMENTS = {
    "YYb": SequenceSpec("+", "YYb"),
    "YbY": SequenceSpec("+", "YbY"),
    "UR6": SequenceSpec("+", "UR6"),
}

TEMPERATURE_INFINITE = math.inf
_US = 1e6


@dataclass
class DBResult:
    params: DBParams
    fits: dict
    records: dict = field(repr=False)
    tests: dict
    learned_template: PulseSpec
    learned_noise: NoiseParams
    flags: list = field(default_factory=list)

    def curves(self) -> list:
        """One curve per experiment: time (us), mean, binomial SEM and the model curve."""
        out = []
        for name, rec in self.records.items():
            x = rec.times * _US
            y = np.asarray(rec.fidelities, float)
            sem = np.sqrt(np.clip(y * (1 - y), 0.0, None) / rec.shots) if rec.shots else np.zeros_like(y)
            if name in self.fits:
                model = self.fits[name].predict(x)
            else:
                model = self.tests[name]["prediction"]
            out.append({"name": name, "x": x, "y_mean": y, "y_sem": sem, "model_prediction": np.asarray(model)})
        return out

    def to_dict(self) -> dict:
        tests = {k: {kk: vv for kk, vv in v.items() if kk != "prediction"} for k, v in self.tests.items()}
        return {
            "params": self.params.to_dict(),
            "fits": {k: f.to_dict() for k, f in self.fits.items()},
            "tests": tests,
            "flags": list(self.flags),
        }


def _learned_model(params: DBParams, template: PulseSpec, qubit_frequency: float,
                   eta: float) -> tuple[PulseSpec, NoiseParams]:
    t1 = params.T1 / _US
    # keep the learned pair physical for forward simulation
    t2 = min(params.T2 / _US, 2 * t1)
    return (template.with_errors(params.dtheta, params.dphi),
            NoiseParams(T1=t1, T2=t2, qubit_frequency=qubit_frequency, eta=eta))


def db_run(template: PulseSpec, noise: NoiseParams, repetitions: Sequence[int] = tuple(range(1, 301)),
           shots: int = 800, seed=None, records: Mapping[str, ExperimentRecord] | None = None,
           tests: bool = True, learned_eta: float = 1.0) -> DBResult:
    """Run the learning experiments, fit them, and validate on the test experiments.

    ``template`` and ``noise`` describe the simulated truth; any experiment
    named in ``records`` is taken from there instead of being simulated. The
    learned model assumes polarization ``learned_eta`` (zero temperature by
    default), since the learning experiments do not fix it.
    """
    reps = tuple(int(n) for n in repetitions)
    if shots < 0:
        raise ValueError("shots must be non-negative")
    records = dict(records or {})
    seeds = seed_sequence(seed).spawn(len(LEARNING_EXPERIMENTS) + len(TEST_EXPERIMENTS))
    t_g = template.gate_duration * _US
    recs = {}
    fits: dict[str, FitResult] = {}
    for (name, base), s in zip(LEARNING_EXPERIMENTS.items(), seeds):
        rec = records.get(name)
        if rec is None:
            seq = SequenceSpec(base.preparation, base.cycle, reps)
            rec = run_sequence(seq, template, noise, shots, s)
        recs[name] = rec
        x = rec.times * _US
        if x[-1] < 2 * t_g:
            raise ValueError("repetition grid too short to cover a decay")
        fixed = {"omega": 0.0} if name == "free" else None
        fits[name] = fit_db(x, rec.fidelities, fixed=fixed, shots=rec.shots)
    params = extract_db_params(fits, t_g)
    flags = list(params.flags)
    learned_t, learned_n = _learned_model(params, template, noise.qubit_frequency, learned_eta)
    results = {}
    if tests:
        for (name, base), s in zip(TEST_EXPERIMENTS.items(), seeds[len(LEARNING_EXPERIMENTS):]):
            rec = records.get(name)
            if rec is None:
                seq = SequenceSpec(base.preparation, base.cycle, reps)
                rec = run_sequence(seq, template, noise, shots, s)
            recs[name] = rec
            _, pred = exact_fidelities(rec.sequence, learned_t, learned_n)
            resid = np.asarray(rec.fidelities) - pred
            rmse = float(np.sqrt(np.mean(resid**2)))
            floor = float(np.sqrt(np.mean(pred * (1 - pred) / rec.shots))) if rec.shots else 0.0
            results[name] = {"rmse": rmse, "shot_noise": floor,
                             "ratio": rmse / floor if floor > 0 else None, "prediction": pred}
    return DBResult(params, fits, recs, results, learned_t, learned_n, flags)


def db_temperature(a: float, seq: SequenceSpec, template: PulseSpec, noise: NoiseParams) -> float:
    """Thermal energy (an angular frequency, like ``noise.qubit_frequency``) from a measured offset ``a``.

    ``a_0`` is the offset the same sequence would saturate to at zero
    temperature; the polarization is ``a / a_0`` and ``k_B T`` follows from
    ``eta = tanh(omega_01 / 2 k_B T)``.
    """
    a0 = saturation_offset(seq, template, noise.with_eta(1.0))
    if a0 == 0:
        raise ValueError("sequence saturates to zero offset at zero temperature; temperature undefined")
    if a == 0:
        return TEMPERATURE_INFINITE
    if abs(a) >= abs(a0) or a * a0 < 0:
        raise ValueError(f"offset {a} outside the model range (0, {a0})")
    return noise.qubit_frequency / math.log((a0 + a) / (a0 - a))


def db_sequence_preference(template: PulseSpec, noise: NoiseParams,
                           candidates: Mapping[str, SequenceSpec]) -> list:
    """Candidates ranked by zero-temperature offset magnitude, largest first, ties by name."""
    scored = []
    for name, seq in candidates.items():
        scored.append((name, abs(saturation_offset(seq, template, noise.with_eta(1.0)))))
    return sorted(scored, key=lambda item: (-round(item[1], 12), item[0]))
