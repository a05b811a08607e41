"""Closed-form and semi-analytic fidelities for square-pulse sequences.

All formulas assume square pulses with no padding, so the drive is constant
over each gate of length ``t_g``. The total drive amplitude is
``eps_tot = (theta + dtheta) / t_g`` and the detuning is ``delta``.

Closed system (no decoherence), starting from |+>:

* ``YY``: rotation by ``2 theta_err`` per pair about an axis orthogonal to x.
* ``XX``: rotation about an axis tilted out of the xy plane by the detuning.
* ``XXb``: the composite ``X`` then ``Xbar`` rotation, whose net angle is
  ``2 phi_err``.

Open system:

* :func:`analytic_open_yy` gives the exact solution of the YY Bloch equation
  for ``delta = 0``, and :func:`yy_perturbation_bound` bounds how far a
  non-zero detuning moves it.
* :func:`xxbar_recursion` is the exact stroboscopic map for XXb with equal
  relaxation rates. :func:`analytic_open_xxbar` is its first-order scalar
  form.
* :func:`saturation_offset` gives the long-time offset ``a`` of any cycle,
  which carries the temperature dependence through ``eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from ..pulses import NoiseParams, PulseSpec, coherent_errors
from .bloch import _cross_matrix, segment_propagator
from .sequences import SequenceSpec, cycle_segments, preparation_vector, pulse_library

__all__ = [
    "AnalyticParams",
    "analytic_params",
    "closed_fidelity",
    "analytic_open_yy",
    "yy_perturbation_bound",
    "xxbar_generators",
    "xxbar_zeta",
    "xxbar_zeta_printed",
    "xxbar_pq",
    "xxbar_recursion",
    "analytic_open_xxbar",
    "saturation_offset",
    "temperature_map",
    "xxbar_matrix_form",
    "xxbar_power_row",
    "square_template",
    "DefectiveGeneratorError",
]


class DefectiveGeneratorError(ArithmeticError):
    """The generator's eigenvector matrix is too ill-conditioned for the bound."""


def _errors(spec: PulseSpec) -> tuple[float, float, float]:
    dth, dph = coherent_errors(spec)
    return spec.angle, dth, dph


@dataclass(frozen=True)
class AnalyticParams:
    """Derived quantities shared by the analytic formulas (SI units, radians)."""

    eps_tot: float
    delta: float
    theta_err: float
    lam: float
    phi_err: float
    v_inf: float
    gamma_star: float
    omega_star: complex
    omega_prime: float
    vartheta: float


def analytic_params(spec: PulseSpec, noise: NoiseParams | None = None) -> AnalyticParams:
    noise = NoiseParams() if noise is None else noise
    theta, dth, dph = _errors(spec)
    tg = spec.gate_duration
    eps_tot = (theta + dth) / tg
    delta = dph * theta / tg
    theta_err = math.hypot(theta + dth, theta * dph)
    lam = (theta * dph / theta_err) ** 2 * (1 - math.cos(theta_err))
    phi_err = math.atan(2 * theta * (dph / theta_err) * math.sin(theta_err / 2)
                        * math.sqrt(max(1 - lam / 2, 0.0)) / (1 - lam))
    g1, g2 = noise.gamma1, noise.gamma2
    denom = eps_tot**2 + g1 * g2
    v_inf = noise.eta * eps_tot * g1 / denom if denom > 0 else 0.0
    omega_star = complex(eps_tot**2 - 0.25 * (g1 - g2) ** 2) ** 0.5
    omega_prime = math.hypot(eps_tot, delta)
    vartheta = math.atan(2 * math.sin(omega_prime * tg / 2) * delta / omega_prime)
    return AnalyticParams(eps_tot, delta, theta_err, lam, phi_err, v_inf, 0.5 * (g1 + g2),
                          omega_star, omega_prime, vartheta)


# ---------------------------------------------------------------------------
# closed system
# ---------------------------------------------------------------------------


def closed_fidelity(pair: str, n, spec: PulseSpec):
    """Noise-free fidelity after ``n`` pairs of ``YY``, ``XX`` or ``XXb`` on |+>."""
    n = np.asarray(n, dtype=float)
    theta, dth, dph = _errors(spec)
    ap = analytic_params(spec)
    if pair == "YY":
        return np.cos(n * ap.theta_err) ** 2
    if pair == "XX":
        return 1 - (theta * dph * np.sin(n * ap.theta_err) / ap.theta_err) ** 2
    if pair == "XXb":
        return np.cos(n * ap.phi_err) ** 2
    raise ValueError(f"no closed form for pair {pair!r}")


# ---------------------------------------------------------------------------
# YY with decoherence
# ---------------------------------------------------------------------------


def _yy_generator(spec: PulseSpec, noise: NoiseParams, delta: float | None = None) -> np.ndarray:
    ap = analytic_params(spec, noise)
    d = ap.delta if delta is None else delta
    return np.array([
        [-noise.gamma2, -d, ap.eps_tot],
        [d, -noise.gamma2, 0.0],
        [-ap.eps_tot, 0.0, -noise.gamma1],
    ])


def analytic_open_yy(n, spec: PulseSpec, noise: NoiseParams):
    """Decaying YY fidelity; exact when the detuning vanishes."""
    n = np.asarray(n, dtype=float)
    _, dth, _ = _errors(spec)
    ap = analytic_params(spec, noise)
    tn = 2 * n * spec.gate_duration
    return 0.5 * (1 + ap.v_inf) + 0.5 * (1 - ap.v_inf) * np.exp(-ap.gamma_star * tn) * np.cos(2 * n * dth)


def yy_perturbation_bound(t, spec: PulseSpec, noise: NoiseParams, k: float = 2.0):
    """Upper bound on the fidelity change caused by the detuning, at time ``t``.

    Uses ``||exp(G s)|| <= kappa exp(-lambda s)`` from the eigendecomposition
    ``G = S D S^-1`` and ``|v_x(s)| <= |v_inf| + k exp(-gamma* s)`` for the
    detuning-free trajectory.
    """
    t = np.asarray(t, dtype=float)
    ap = analytic_params(spec, noise)
    if ap.delta == 0:
        return np.zeros_like(t)
    g = _yy_generator(spec, noise)
    evals, s = np.linalg.eig(g)
    kappa = np.linalg.cond(s, 2)
    if kappa > 1e12:
        raise DefectiveGeneratorError(f"eigenvector condition number {kappa:.3g}")
    lam = -float(np.max(evals.real))
    gs = ap.gamma_star
    first = (1 - np.exp(-lam * t)) / lam * abs(ap.v_inf)
    if abs(lam - gs) < 1e-12 * max(lam, 1.0):
        second = k * t * np.exp(-lam * t)
    else:
        second = k * (np.exp(-gs * t) - np.exp(-lam * t)) / (lam - gs)
    return 0.5 * kappa * abs(ap.delta) * (first + second)


# ---------------------------------------------------------------------------
# XXbar with equal relaxation rates
# ---------------------------------------------------------------------------


def _require_isotropic(noise: NoiseParams) -> float:
    g1, g2 = noise.gamma1, noise.gamma2
    if abs(g1 - g2) > 1e-9 * max(g1, g2, 1e-300):
        raise ValueError("the XXb analytic forms require gamma1 == gamma2 (T2 == T1)")
    return g1


def xxbar_generators(spec: PulseSpec, noise: NoiseParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(G_plus, G_minus, c) for the X and Xbar halves of the cycle."""
    ap = analytic_params(spec, noise)
    g = noise.gamma2
    out = []
    for s in (1, -1):
        out.append(np.array([
            [-g, -ap.delta, 0.0],
            [ap.delta, -noise.gamma2, -s * ap.eps_tot],
            [0.0, s * ap.eps_tot, -noise.gamma1],
        ]))
    return out[0], out[1], np.array([0.0, 0.0, noise.eta * noise.gamma1])


def _rodrigues(h: np.ndarray, t: float) -> np.ndarray:
    w = float(np.linalg.norm(h))
    if w == 0:
        return np.eye(3)
    nm = _cross_matrix(h / w)
    return np.eye(3) + math.sin(w * t) * nm + (1 - math.cos(w * t)) * (nm @ nm)


def _isotropic_inverse(h: np.ndarray, gamma: float) -> np.ndarray:
    """(K - gamma I)^-1 for K = [h]_x, using K^3 = -|h|^2 K."""
    k = _cross_matrix(h)
    w2 = float(h @ h)
    return -np.eye(3) / gamma - k / (gamma**2 + w2) - (k @ k) / (gamma * (gamma**2 + w2))


def xxbar_zeta(spec: PulseSpec, noise: NoiseParams) -> tuple[np.ndarray, np.ndarray]:
    """Cycle map ``v -> A v - zeta`` for one X then Xbar pair, in closed form.

    Each half is a damped rotation ``exp(G t) = exp(-gamma t) R(t)`` with R
    from Rodrigues' formula, and G^-1 follows from the cubic identity of the
    cross-product matrix, so no numerical matrix exponential is involved.
    """
    gamma = _require_isotropic(noise)
    ap = analytic_params(spec, noise)
    tg = spec.gate_duration
    hp = np.array([ap.eps_tot, 0.0, ap.delta])
    hm = np.array([-ap.eps_tot, 0.0, ap.delta])
    decay = math.exp(-gamma * tg)
    ep = decay * _rodrigues(hp, tg)
    em = decay * _rodrigues(hm, tg)
    a = em @ ep
    if gamma == 0:
        return a, np.zeros(3)
    c = np.array([0.0, 0.0, noise.eta * gamma])
    eye = np.eye(3)
    zeta = (eye - em) @ _isotropic_inverse(hm, gamma) @ c + em @ (eye - ep) @ _isotropic_inverse(hp, gamma) @ c
    return a, zeta


def xxbar_zeta_printed(spec: PulseSpec, noise: NoiseParams) -> np.ndarray:
    """Long-hand component expressions for the XXb offset vector.

    The x and y entries reproduce ``-zeta`` of :func:`xxbar_zeta`; the z entry
    as written does not reproduce the matrix form and is kept only so the
    discrepancy stays testable. :func:`xxbar_recursion` never uses it.
    """
    g = _require_isotropic(noise)
    ap = analytic_params(spec, noise)
    t = spec.gate_duration
    w, d, e, eta = ap.omega_prime, ap.delta, ap.eps_tot, noise.eta
    s2, c2 = math.sin(w * t / 2), math.cos(w * t / 2)
    eg = math.exp(g * t)
    pref = w**4 * (w**2 + g**2)
    base = math.exp(-2 * g * t) / pref
    common = (g * s2 + 0.5 * w * c2) ** 2 + w**2 / 4 * (2 * (1 - eg) - c2**2)
    zx = -4 * eta * base * d * e * (
        w**2 * ((g * s2 + (1 - eg) / 2 * w * c2) ** 2 + w**2 / 4 * ((1 - eg) * s2) ** 2)
        - d**2 * (1 - math.cos(w * t)) * common)
    zy = eta * base * w * e * (
        -4 * d**2 * math.sin(w * t) * common
        + g * w**3 * ((eg - math.cos(w * t)) ** 2 + math.sin(w * t) ** 2))
    zz = eta * base * (
        8 * d**2 * e**2 * s2**2 * ((g * s2 + 0.5 * w * c2) ** 2 - w**2 / 4 * c2**2)
        + eg * g * w**3 * (eg * g * w + 2 * e**2 * math.sin(w * t))
        + d**2 * w**2 * (eg - 1) * (eg * w**2 + (2 * math.cos(w * t) - 1) * e**2 + d**2))
    return np.array([zx, zy, zz])


def xxbar_pq(spec: PulseSpec, noise: NoiseParams) -> dict:
    """Complex eigen-parameters of the XXb cycle map.

    ``p**2`` and ``q**2`` are the complex eigenvalues of ``A`` and the first
    row of ``A**n`` follows from them (see :func:`xxbar_power_row`).
    """
    g = _require_isotropic(noise)
    ap = analytic_params(spec, noise)
    t = spec.gate_duration
    w, d, e = ap.omega_prime, ap.delta, ap.eps_tot
    z = np.exp(1j * w * t)
    chi = np.sqrt(4 * z * w**2 + (1 - z) ** 2 * d**2)
    pre = np.exp(-g * t - 1j * w * t) / (2 * w**2)
    core = (1 + z**2) * d**2 + 2 * z * e**2
    return {"chi": chi, "p": pre * (core + (1 - z) * d * chi), "q": pre * (core - (1 - z) * d * chi),
            "omega_prime": w, "z": z}


def xxbar_power_row(n: int, spec: PulseSpec, noise: NoiseParams) -> np.ndarray:
    """First row of ``A**n`` from the eigen-parameters."""
    pq = xxbar_pq(spec, noise)
    p2n, q2n = pq["p"] ** (2 * n), pq["q"] ** (2 * n)
    ap = analytic_params(spec, noise)
    z, chi, w = pq["z"], pq["chi"], pq["omega_prime"]
    return np.real(np.array([
        0.5 * (p2n + q2n),
        -1j * w * (1 + z) / (2 * chi) * (p2n - q2n),
        -ap.eps_tot * (1 - z) / (2 * chi) * (p2n - q2n),
    ]))


def xxbar_recursion(n, spec: PulseSpec, noise: NoiseParams, v0=(1.0, 0.0, 0.0)):
    """Exact stroboscopic XXb fidelity with the prepared state ``v0``."""
    a, zeta = xxbar_zeta(spec, noise)
    reps = np.atleast_1d(np.asarray(n, dtype=int))
    v0 = np.asarray(v0, dtype=float)
    v = v0.copy()
    out = np.empty(len(reps))
    done = 0
    order = np.argsort(reps)
    for idx in order:
        while done < reps[idx]:
            v = a @ v - zeta
            done += 1
        out[idx] = 0.5 * (1 + v0 @ v)
    return out if np.ndim(n) else float(out[0])


def analytic_open_xxbar(n, spec: PulseSpec, noise: NoiseParams):
    """First-order XXb fidelity ``1/2 + 1/2 exp(-gamma t_n) cos(2 n vartheta)`` on |+>."""
    gamma = _require_isotropic(noise)
    ap = analytic_params(spec, noise)
    n = np.asarray(n, dtype=float)
    tn = 2 * n * spec.gate_duration
    return 0.5 + 0.5 * np.exp(-gamma * tn) * np.cos(2 * n * ap.vartheta)


# ---------------------------------------------------------------------------
# saturation and temperature
# ---------------------------------------------------------------------------


def temperature_map(seq: SequenceSpec, template: PulseSpec, noise: NoiseParams, library=None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """(B, zeta') with ``v_{n+1} = B v_n - eta zeta'`` for one cycle of ``seq``.

    Works for any cycle, including padded and free-evolution segments, because
    the affine part of each segment propagator is proportional to ``eta``.
    """
    lib = pulse_library(template) if library is None else library
    cold = noise.with_eta(1.0)
    u = np.eye(4)
    for seg in cycle_segments(seq, lib):
        u = segment_propagator(seg, cold) @ u
    return u[1:, 1:].copy(), -u[1:, 0].copy()


def saturation_offset(seq: SequenceSpec, template: PulseSpec, noise: NoiseParams, library=None) -> float:
    """Offset ``a`` of the saturated fidelity ``(1 + a) / 2``."""
    b, zeta_p = temperature_map(seq, template, noise, library)
    if np.max(np.abs(np.linalg.eigvals(b))) >= 1:
        raise ValueError("cycle map is not contracting; saturation undefined")
    v0 = preparation_vector(seq.preparation)
    m = b - np.eye(3)
    if np.linalg.cond(m) > 1e14:
        raise np.linalg.LinAlgError("I - B is singular")
    return float(noise.eta * v0 @ np.linalg.solve(m, zeta_p))


def square_template(spec: PulseSpec) -> PulseSpec:
    """Padding-free square version of ``spec`` with the same coherent errors."""
    dth, dph = coherent_errors(spec)
    return replace(spec, envelope="square", active_window=spec.gate_duration).with_errors(dth, dph)


def xxbar_matrix_form(spec: PulseSpec, noise: NoiseParams) -> tuple[np.ndarray, np.ndarray]:
    """A and zeta from numerical matrix exponentials (independent cross-check)."""
    gp, gm, c = xxbar_generators(spec, noise)
    tg = spec.gate_duration
    ep, em = expm(gp * tg), expm(gm * tg)
    eye = np.eye(3)
    zeta = (eye - em) @ np.linalg.solve(gm, c) + em @ (eye - ep) @ np.linalg.solve(gp, c)
    return em @ ep, zeta
