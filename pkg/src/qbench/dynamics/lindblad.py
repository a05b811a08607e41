"""Density-matrix evolution under the Lindblad master equation.

Vectorization is column stacking, so for the generator

    L = -i (I (x) H - H^T (x) I) + sum_k g_k (conj(L_k) (x) L_k
         - 1/2 I (x) L_k^dag L_k - 1/2 (L_k^dag L_k)^T (x) I).

Qubit and qutrit (leakage) systems share this code. Qubit-sized Lindblad
operators are embedded in the upper-left block when evolving a qutrit.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from ..core import PAULI_1Q, unvec, vec
from ..pulses import LeakageParams, NoiseParams, PulseSpec, lindblad_operators
from .bloch import FreeEvolution, Segment, bloch_to_density
from .integrate import checked_rk4_propagator

__all__ = ["lindbladian", "density_segment_propagator", "evolve_density", "DensityTrajectory", "qutrit_fidelities"]


def _embed(op: np.ndarray, dim: int) -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    if op.shape[0] == dim:
        return op
    out = np.zeros((dim, dim), dtype=complex)
    out[: op.shape[0], : op.shape[1]] = op
    return out


def _dissipator(lops, dim: int) -> np.ndarray:
    eye = np.eye(dim)
    d = np.zeros((dim * dim, dim * dim), dtype=complex)
    for op, rate in lops:
        if rate == 0:
            continue
        a = _embed(op, dim)
        ada = a.conj().T @ a
        d += rate * (np.kron(a.conj(), a) - 0.5 * np.kron(eye, ada) - 0.5 * np.kron(ada.T, eye))
    return d


def lindbladian(h: np.ndarray, lops: Sequence[tuple[np.ndarray, float]]) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    dim = h.shape[0]
    eye = np.eye(dim)
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye)) + _dissipator(lops, dim)


def _hamiltonian_stack(seg: PulseSpec, ts: np.ndarray, leakage: LeakageParams | None) -> np.ndarray:
    # callers only integrate inside the window; clamping guards the last RK4 stage
    ts = np.clip(ts, seg.window_start, seg.window_end)
    f = seg.field_array(ts)
    x, y, z = PAULI_1Q["X"], PAULI_1Q["Y"], PAULI_1Q["Z"]
    h2 = 0.5 * (f[:, 0, None, None] * x + f[:, 1, None, None] * y + f[:, 2, None, None] * z)
    if leakage is None:
        return h2
    k = ts.shape[0]
    h3 = np.zeros((k, 3, 3), dtype=complex)
    h3[:, :2, :2] = h2
    h3[:, 2, 2] = leakage.anharmonicity
    inside = (ts >= seg.window_start) & (ts <= seg.window_end)
    amp = np.where(inside, seg.envelope_value(ts) + seg.amplitude_error, 0.0)
    coupling = 0.5 * leakage.matrix_element_ratio * amp * np.exp(-1j * seg.axis_angle)
    h3[:, 1, 2] = coupling
    h3[:, 2, 1] = np.conj(coupling)
    return h3


def _static_hamiltonian(dim: int, leakage: LeakageParams | None) -> np.ndarray:
    h = np.zeros((dim, dim), dtype=complex)
    if leakage is not None:
        h[2, 2] = leakage.anharmonicity
    return h


def _lops_key(lops):
    return tuple((np.asarray(op, dtype=complex).tobytes(), np.asarray(op).shape, float(r)) for op, r in lops)


def density_segment_propagator(seg: Segment, lops, leakage: LeakageParams | None = None) -> np.ndarray:
    """Superoperator (column-stacked) of one segment."""
    lops = [(np.asarray(op, dtype=complex), float(r)) for op, r in lops]
    return _density_segment_cached(seg, _lops_key(lops), leakage)


@lru_cache(maxsize=1024)
def _density_segment_cached(seg, lkey, leakage):
    lops = [(np.frombuffer(b, dtype=complex).reshape(shape), r) for b, shape, r in lkey]
    dim = 2 if leakage is None else 3
    diss = _dissipator(lops, dim)
    idle_gen = lindbladian(_static_hamiltonian(dim, leakage), []) + diss
    if isinstance(seg, FreeEvolution):
        out = expm(idle_gen * seg.duration)
    else:
        pad = seg.window_start
        idle = expm(idle_gen * pad) if pad > 0 else np.eye(dim * dim)
        if seg.envelope == "square":
            mid = np.array([seg.window_start + 0.5 * seg.active_window])
            h = _hamiltonian_stack(seg, mid, leakage)[0]
            body = expm((lindbladian(h, []) + diss) * seg.active_window)
        else:
            eye = np.eye(dim)

            def gen(ts):
                hs = _hamiltonian_stack(seg, ts, leakage)
                comm = -1j * (np.einsum("ij,kab->kiajb", eye, hs)
                              - np.einsum("kba,ij->kaibj", hs, eye))
                return comm.reshape(len(ts), dim * dim, dim * dim) + diss

            body = checked_rk4_propagator(gen, seg.window_start, seg.window_end)
        out = idle @ body @ idle
    out.setflags(write=False)
    return out


class DensityTrajectory:
    def __init__(self, times, states):
        self.times = np.asarray(times)
        self.states = np.asarray(states)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def evolve_density(segments: Sequence[Segment], lops, rho0, leakage: LeakageParams | None = None
                   ) -> DensityTrajectory:
    """Evolve ``rho0`` through ``segments``; records the state after each segment.

    ``lops`` may be a :class:`NoiseParams`, in which case its Lindblad
    operators are used.
    """
    if isinstance(lops, NoiseParams):
        lops = lindblad_operators(lops)
    rho = np.asarray(rho0, dtype=complex)
    dim = rho.shape[0]
    if dim not in (2, 3) or (dim == 3) != (leakage is not None):
        raise ValueError("qubit states need leakage=None; qutrit states need LeakageParams")
    t = 0.0
    times, states = [0.0], [rho.copy()]
    x = vec(rho)
    for seg in segments:
        x = density_segment_propagator(seg, lops, leakage) @ x
        t += seg.duration if isinstance(seg, FreeEvolution) else seg.gate_duration
        r = unvec(x, dim)
        if abs(np.trace(r) - 1) > 1e-9:
            raise FloatingPointError("trace not preserved")
        times.append(t)
        states.append(r)
    return DensityTrajectory(times, states)


def qutrit_fidelities(seq, template: PulseSpec, leakage: LeakageParams, noise: NoiseParams | None = None,
                      library=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stroboscopic fidelity of a pulse sequence on a transmon truncated to three levels.

    Returns times, the overlap ``<psi0| rho_n |psi0>`` with the prepared qubit
    state, and the population of the third level after each repetition count.
    """
    from .sequences import cycle_segments, preparation_vector, pulse_library

    lops = lindblad_operators(noise) if noise is not None else []
    lib = pulse_library(template) if library is None else library
    segs = cycle_segments(seq, lib)
    cyc = np.eye(9, dtype=complex)
    duration = 0.0
    for seg in segs:
        cyc = density_segment_propagator(seg, lops, leakage) @ cyc
        duration += seg.duration if isinstance(seg, FreeEvolution) else seg.gate_duration
    rho0 = _embed(bloch_to_density(preparation_vector(seq.preparation)), 3)
    x = vec(rho0)
    fid = np.empty(len(seq.repetitions))
    leaked = np.empty(len(seq.repetitions))
    current = 0
    for i, n in enumerate(seq.repetitions):
        x = np.linalg.matrix_power(cyc, n - current) @ x
        current = n
        r = unvec(x, 3)
        fid[i] = float(np.real(np.trace(rho0 @ r)))
        leaked[i] = float(np.real(r[2, 2]))
    return np.asarray(seq.repetitions, float) * duration, fid, leaked
