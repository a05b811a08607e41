"""Propagators for linear time-dependent ODEs dX/dt = M(t) X.

Both the homogenized Bloch equation and the vectorized Lindblad equation are
linear, so one fixed-step RK4 step is itself a linear map. We build every step
matrix at once and multiply them together with a pairwise reduction, which is
much faster than stepping a state in a Python loop and still deterministic.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

RK4_STEPS = 2000
RK4_TOLERANCE = 1e-9


class IntegrationError(RuntimeError):
    """Raised when the step-halving check of the fixed-step integrator fails."""


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """Return mats[-1] @ ... @ mats[1] @ mats[0] using a balanced reduction."""
    m = np.asarray(mats)
    while m.shape[0] > 1:
        if m.shape[0] % 2:
            tail = m[-1:]
            m = m[:-1]
        else:
            tail = None
        m = np.matmul(m[1::2], m[0::2])
        if tail is not None:
            m = np.concatenate([m, tail], axis=0)
    return m[0]


def rk4_propagator(generator: Callable[[np.ndarray], np.ndarray], t0: float, t1: float,
                   steps: int = RK4_STEPS) -> np.ndarray:
    """Propagator of dX/dt = M(t) X over [t0, t1] with classical RK4.

    ``generator`` maps an array of times of shape (k,) to generators of shape
    (k, d, d).
    """
    h = (t1 - t0) / steps
    starts = t0 + h * np.arange(steps)
    m1 = generator(starts)
    m2 = generator(starts + 0.5 * h)
    m3 = generator(starts + h)
    eye = np.eye(m1.shape[-1])
    a1 = m1
    a2 = m2 @ (eye + 0.5 * h * a1)
    a3 = m2 @ (eye + 0.5 * h * a2)
    a4 = m3 @ (eye + h * a3)
    step = eye + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
    return ordered_product(step)


def checked_rk4_propagator(generator, t0: float, t1: float, steps: int = RK4_STEPS,
                           tol: float = RK4_TOLERANCE, max_steps: int = 16 * RK4_STEPS) -> np.ndarray:
    """RK4 propagator whose accuracy is confirmed by step halving.

    The default grid is accepted when halving its step changes the propagator
    by at most ``tol``. Stiffer generators (a qutrit with a large
    anharmonicity over a long pulse) keep halving until that holds or
    ``max_steps`` is exceeded.
    """
    coarse = rk4_propagator(generator, t0, t1, steps)
    while True:
        fine = rk4_propagator(generator, t0, t1, 2 * steps)
        err = float(np.max(np.abs(fine - coarse)))
        if err <= tol:
            return fine
        steps *= 2
        if 2 * steps > max_steps:
            raise IntegrationError(f"RK4 halving changed the propagator by {err:.2e} > {tol:.0e}")
        coarse = fine
