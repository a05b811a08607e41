"""Bloch-vector dynamics  dv/dt = h(t) x v + R v + c.

The affine equation is homogenized on the 4-vector (1, vx, vy, vz) so that a
segment of evolution is one 4x4 matrix. Piecewise-constant segments (square
pulses, padding, free evolution) use the matrix exponential; cosine envelopes
use the checked RK4 propagator from :mod:`qbench.dynamics.integrate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy.linalg import expm

from ..pulses import NoiseParams, PulseSpec, dissipator_bloch
from .integrate import checked_rk4_propagator

__all__ = [
    "BlochState",
    "BlochTrajectory",
    "FreeEvolution",
    "Segment",
    "bloch_generator",
    "homogeneous_generator",
    "segment_propagator",
    "sequence_propagator",
    "evolve_bloch",
    "bloch_to_density",
    "density_to_bloch",
]


@dataclass(frozen=True)
class FreeEvolution:
    """Undriven evolution for ``duration`` seconds."""

    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be non-negative")


Segment = Union[PulseSpec, FreeEvolution]


@dataclass(frozen=True)
class BlochState:
    v: tuple

    def __post_init__(self):
        arr = np.asarray(self.v, dtype=float)
        if arr.shape != (3,):
            raise ValueError("Bloch vector must have three components")
        if np.linalg.norm(arr) > 1 + 1e-9:
            raise ValueError("Bloch vector longer than one")
        object.__setattr__(self, "v", tuple(float(x) for x in arr))

    def array(self) -> np.ndarray:
        return np.array(self.v)


@dataclass(frozen=True)
class BlochTrajectory:
    times: np.ndarray
    vectors: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.vectors[-1]


def bloch_to_density(v) -> np.ndarray:
    x, y, z = v
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]], dtype=complex)


def density_to_bloch(rho) -> np.ndarray:
    rho = np.asarray(rho)
    return np.array([2 * rho[1, 0].real, 2 * rho[1, 0].imag, (rho[0, 0] - rho[1, 1]).real])


def _cross_matrix(h) -> np.ndarray:
    hx, hy, hz = h
    return np.array([[0.0, -hz, hy], [hz, 0.0, -hx], [-hy, hx, 0.0]])


def bloch_generator(h, noise: NoiseParams) -> tuple[np.ndarray, np.ndarray]:
    """(G, c) with G = [h]_x + R for a constant field ``h``."""
    r, c = dissipator_bloch(noise)
    return _cross_matrix(h) + r, c


def homogeneous_generator(h, noise: NoiseParams) -> np.ndarray:
    g, c = bloch_generator(h, noise)
    m = np.zeros((4, 4))
    m[1:, 0] = c
    m[1:, 1:] = g
    return m


def _homogeneous_stack(fields: np.ndarray, noise: NoiseParams) -> np.ndarray:
    r, c = dissipator_bloch(noise)
    k = fields.shape[0]
    m = np.zeros((k, 4, 4))
    hx, hy, hz = fields[:, 0], fields[:, 1], fields[:, 2]
    m[:, 1:, 0] = c
    m[:, 1, 2], m[:, 1, 3] = -hz, hy
    m[:, 2, 1], m[:, 2, 3] = hz, -hx
    m[:, 3, 1], m[:, 3, 2] = -hy, hx
    m[:, 1:, 1:] += r
    return m


@lru_cache(maxsize=4096)
def _segment_propagator_cached(seg: Segment, noise: NoiseParams) -> np.ndarray:
    if isinstance(seg, FreeEvolution):
        out = expm(homogeneous_generator((0.0, 0.0, 0.0), noise) * seg.duration)
    else:
        pad = seg.window_start
        idle = expm(homogeneous_generator((0.0, 0.0, 0.0), noise) * pad) if pad > 0 else np.eye(4)
        if seg.envelope == "square":
            body = expm(homogeneous_generator(seg.constant_field(), noise) * seg.active_window)
        else:
            def gen(ts):
                # the last RK4 stage can overshoot the window by rounding
                inside = np.clip(ts, seg.window_start, seg.window_end)
                return _homogeneous_stack(seg.field_array(inside), noise)

            body = checked_rk4_propagator(gen, seg.window_start, seg.window_end)
        out = idle @ body @ idle
    out.setflags(write=False)
    return out


def segment_propagator(seg: Segment, noise: NoiseParams) -> np.ndarray:
    """Homogeneous 4x4 propagator of one segment; cached per (segment, noise)."""
    return _segment_propagator_cached(seg, noise)


def sequence_propagator(segments: Sequence[Segment], noise: NoiseParams) -> np.ndarray:
    u = np.eye(4)
    for seg in segments:
        u = segment_propagator(seg, noise) @ u
    return u


def _duration(seg: Segment) -> float:
    return seg.duration if isinstance(seg, FreeEvolution) else seg.gate_duration


def evolve_bloch(segments: Sequence[Segment], noise: NoiseParams, v0) -> BlochTrajectory:
    """Evolve ``v0`` through ``segments`` and record the state after each one."""
    v0 = BlochState(tuple(np.asarray(v0, dtype=float))).array()
    times = [0.0]
    vectors = [v0]
    x = np.concatenate([[1.0], v0])
    t = 0.0
    for seg in segments:
        x = segment_propagator(seg, noise) @ x
        t += _duration(seg)
        if np.linalg.norm(x[1:]) > 1 + 1e-6:
            raise FloatingPointError("Bloch vector left the unit ball")
        times.append(t)
        vectors.append(x[1:].copy())
    return BlochTrajectory(np.array(times), np.array(vectors))


def spherical_bloch(theta: float, phi: float) -> np.ndarray:
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
