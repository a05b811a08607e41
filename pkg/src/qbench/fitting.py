"""Nonlinear least squares and the decay models used by the protocols.

The optimizer is a bounded Levenberg-Marquardt loop with Marquardt's diagonal
scaling, a x10 / /10 damping schedule and a few undamped polishing steps once
the relative cost change drops below ``1e-12``. It is deterministic: no random
restarts happen inside :func:`fit`; protocols that want multi-start call it
several times (see :func:`fit_db`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "FitModel",
    "FitResult",
    "MODELS",
    "get_model",
    "least_squares",
    "fit",
    "binomial_weights",
    "init_db_model",
    "fit_db",
    "init_rb_model",
    "fit_rb",
    "periodogram",
    "oscillation_peak_ratio",
    "DBParams",
    "extract_db_params",
]


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitModel:
    name: str
    param_names: tuple
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lower: tuple
    upper: tuple
    description: str = ""

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def __call__(self, x, params) -> np.ndarray:
        return self.func(np.asarray(x, float), self._vector(params))

    def _vector(self, params) -> np.ndarray:
        if isinstance(params, Mapping):
            return np.array([params[k] for k in self.param_names], float)
        return np.asarray(params, float)


def _db_fid(x, p):
    a, td, w = p
    return 0.5 * (1 + a) + 0.5 * (1 - a) * np.exp(-x / td) * np.cos(2 * w * x)


def _db_fid_jac(x, p):
    a, td, w = p
    e = np.exp(-x / td)
    c = np.cos(2 * w * x)
    s = np.sin(2 * w * x)
    return np.stack([
        0.5 - 0.5 * e * c,
        # split so that td**2 cannot underflow when td sits at its lower bound
        0.5 * (1 - a) * c * (x / td) * (e / td),
        -(1 - a) * e * s * x,
    ], axis=1)


def _db_spam(x, p):
    amp, base, td, w = p
    return base + amp * np.exp(-x / td) * np.cos(2 * w * x)


def _db_spam_jac(x, p):
    amp, base, td, w = p
    e = np.exp(-x / td)
    c = np.cos(2 * w * x)
    return np.stack([e * c, np.ones_like(x), amp * c * (x / td) * (e / td),
                     -2 * amp * e * np.sin(2 * w * x) * x], axis=1)


def _rb_exp(m, p):
    a, pp, b = p
    return a * pp**m + b


def _rb_exp_jac(m, p):
    a, pp, b = p
    return np.stack([pp**m, a * m * pp ** (m - 1), np.ones_like(m)], axis=1)


def rb_first_order_model(m, a1, b1, c1, p, q):
    """Zeroth-order decay plus the leading gate-dependent correction."""
    m = np.asarray(m, float)
    return a1 * p**m + b1 + c1 * (m - 1) * (q - p * p) * p ** (m - 2)


def _rb_first(m, p):
    return rb_first_order_model(m, *p)


def _rb_first_jac(m, p):
    a1, b1, c1, pp, q = p
    pm2 = pp ** (m - 2)
    d_p = a1 * m * pp ** (m - 1) + c1 * (m - 1) * (-2 * pp * pm2 + (q - pp * pp) * (m - 2) * pp ** (m - 3))
    return np.stack([pp**m, np.ones_like(m), (m - 1) * (q - pp * pp) * pm2, d_p,
                     c1 * (m - 1) * pm2], axis=1)


def _rcs_exp(x, p):
    a, lam = p
    return a * np.exp(-lam * x)


def _rcs_exp_jac(x, p):
    a, lam = p
    e = np.exp(-lam * x)
    return np.stack([e, -a * x * e], axis=1)


_INF = math.inf
MODELS: dict[str, FitModel] = {
    "db_fid": FitModel("db_fid", ("a", "T_D", "omega"), _db_fid, _db_fid_jac,
                       (-1.0, 1e-300, 0.0), (1.0, _INF, _INF),
                       "(1+a)/2 + (1-a)/2 exp(-t/T_D) cos(2 omega t)"),
    "db_fid_spam": FitModel("db_fid_spam", ("A", "B", "T_D", "omega"), _db_spam, _db_spam_jac,
                            (-_INF, -_INF, 1e-300, 0.0), (_INF, _INF, _INF, _INF),
                            "B + A exp(-t/T_D) cos(2 omega t)"),
    "rb_exp": FitModel("rb_exp", ("A", "p", "B"), _rb_exp, _rb_exp_jac,
                       (-_INF, 0.0, -_INF), (_INF, 1.0, _INF), "A p^m + B"),
    "rb_first_order": FitModel("rb_first_order", ("A1", "B1", "C1", "p", "q"), _rb_first, _rb_first_jac,
                               (-_INF, -_INF, -_INF, 1e-12, -_INF), (_INF, _INF, _INF, 1.0, _INF),
                               "A1 p^m + B1 + C1 (m-1)(q-p^2) p^(m-2)"),
    "rcs_exp": FitModel("rcs_exp", ("A", "lambda"), _rcs_exp, _rcs_exp_jac,
                        (-_INF, 0.0), (_INF, _INF), "A exp(-lambda P)"),
}


def get_model(name: str) -> FitModel:
    try:
        return MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class LSQResult:
    x: np.ndarray
    cost: float
    jac: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool
    message: str


def least_squares(residual: Callable[[np.ndarray], np.ndarray], jacobian: Callable[[np.ndarray], np.ndarray],
                  x0, lower=None, upper=None, max_iter: int = 500, ftol: float = 1e-12,
                  lam0: float = 1e-3) -> LSQResult:
    """Bounded Levenberg-Marquardt on ``sum(residual(x)**2)``."""
    x = np.array(x0, dtype=float)
    lo = np.full_like(x, -np.inf) if lower is None else np.asarray(lower, float)
    hi = np.full_like(x, np.inf) if upper is None else np.asarray(upper, float)
    x = np.clip(x, lo, hi)
    r = residual(x)
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise ValueError("non-finite residuals at the starting point")
    lam = lam0
    it = 0
    converged = False
    message = "maximum iterations reached"
    polish = 0
    jac = jacobian(x)
    while it < max_iter:
        it += 1
        g = jac.T @ r
        h = jac.T @ jac
        diag = np.maximum(np.diag(h), 1e-300 + 1e-12 * np.max(np.diag(h), initial=0.0))
        accepted = False
        while lam <= 1e16:
            try:
                step = np.linalg.solve(h + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = np.clip(x + step, lo, hi)
            r_new = residual(x_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            converged = True
            message = "no further decrease possible"
            break
        rel = (cost - cost_new) / max(cost, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        jac = jacobian(x)
        lam = max(lam / 10, 1e-12)
        if rel < ftol or cost == 0.0:
            # a few nearly undamped steps pin the optimum to rounding level
            polish += 1
            lam = 1e-12
            if polish >= 3 or cost == 0.0:
                converged = True
                message = "relative cost change below tolerance"
                break
    return LSQResult(x, cost, jac, r, it, converged, message)


# ---------------------------------------------------------------------------
# curve fitting
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    model: str
    params: dict
    errors: dict
    covariance: np.ndarray
    chi2: float
    dof: int
    rms: float
    converged: bool
    status: str
    iterations: int
    init: dict
    fixed: dict = field(default_factory=dict)
    residuals: np.ndarray | None = None

    def value(self, name: str) -> float:
        return self.params[name]

    def predict(self, x) -> np.ndarray:
        return get_model(self.model)(x, self.params)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "errors": {k: float(v) for k, v in self.errors.items()},
            "chi2": float(self.chi2),
            "dof": int(self.dof),
            "rms": float(self.rms),
            "converged": bool(self.converged),
            "status": self.status,
            "iterations": int(self.iterations),
            "init": {k: float(v) for k, v in self.init.items()},
            "fixed": {k: float(v) for k, v in self.fixed.items()},
        }


def binomial_weights(y, shots: int) -> np.ndarray:
    """Inverse binomial variances with the probability shrunk away from 0 and 1."""
    y = np.asarray(y, float)
    if shots <= 0:
        return np.ones_like(y)
    p = (y * shots + 0.5) / (shots + 1.0)
    return shots / (p * (1 - p))


def fit(model: FitModel | str, x, y, w=None, p0=None, fixed: Mapping[str, float] | None = None,
        max_iter: int = 500) -> FitResult:
    """Weighted least-squares fit of ``model`` to ``(x, y)``.

    ``w`` are inverse variances. With explicit weights the covariance is
    ``(J^T W J)^-1``; without them it is rescaled by the reduced chi-square.
    ``fixed`` pins parameters by name.
    """
    model = get_model(model) if isinstance(model, str) else model
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    fixed = dict(fixed or {})
    names = model.param_names
    free = [k for k in names if k not in fixed]
    if len(x) < len(free) + 2:
        raise ValueError("need at least two more points than free parameters")
    absolute = w is not None
    sw = np.sqrt(np.ones_like(y) if w is None else np.asarray(w, float))
    if p0 is None:
        raise ValueError("an initial guess p0 is required")
    p0 = dict(p0) if isinstance(p0, Mapping) else dict(zip(names, p0))
    idx = [names.index(k) for k in free]
    lo = np.array([model.lower[i] for i in idx])
    hi = np.array([model.upper[i] for i in idx])

    def full(theta):
        vals = dict(fixed)
        vals.update(zip(free, theta))
        return np.array([vals[k] for k in names])

    def residual(theta):
        return sw * (model.func(x, full(theta)) - y)

    def jacobian(theta):
        return sw[:, None] * model.jac(x, full(theta))[:, idx]

    start = np.array([p0[k] for k in free], float)
    res = least_squares(residual, jacobian, start, lo, hi, max_iter=max_iter)
    dof = max(len(x) - len(free), 1)
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    if not absolute:
        cov = cov * res.cost / dof
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    params = dict(zip(names, full(res.x)))
    errors = {k: 0.0 for k in names}
    errors.update(zip(free, errs))
    raw = model.func(x, full(res.x)) - y
    return FitResult(model.name, {k: float(v) for k, v in params.items()},
                     {k: float(v) for k, v in errors.items()}, cov, res.cost, dof,
                     float(np.sqrt(np.mean(raw**2))), res.converged, res.message, res.iterations,
                     {k: float(v) for k, v in p0.items()}, {k: float(v) for k, v in fixed.items()}, raw)


# ---------------------------------------------------------------------------
# spectral helpers and DB initialization
# ---------------------------------------------------------------------------


def periodogram(x, d) -> tuple[np.ndarray, np.ndarray]:
    """Power of ``d`` at frequencies k / (N dx), k = 1..N//2 (cycles per unit of x).

    The sum is evaluated explicitly so mildly irregular grids are allowed.
    """
    x = np.asarray(x, float)
    d = np.asarray(d, float)
    n = len(x)
    span = (x[-1] - x[0]) * n / max(n - 1, 1)
    if span <= 0:
        raise ValueError("degenerate abscissa grid")
    freqs = np.arange(1, n // 2 + 1) / span
    phase = np.exp(-2j * np.pi * np.outer(freqs, x - x[0]))
    power = np.abs(phase @ d) ** 2 / n
    return freqs, power


def _tail_level(y: np.ndarray) -> float:
    k = max(1, int(math.ceil(0.1 * len(y))))
    return float(np.mean(y[-k:]))


def _envelope(x, r) -> tuple[float, float]:
    """Amplitude and decay time from a log-linear fit of |r|."""
    mag = np.abs(r)
    ok = mag > max(1e-12, 1e-3 * np.max(mag, initial=0.0))
    span = x[-1] - x[0]
    if ok.sum() < 3:
        return 0.0, 1e3 * span if span > 0 else 1.0
    slope, icpt = np.polyfit(x[ok], np.log(mag[ok]), 1, w=np.sqrt(mag[ok]))
    amp = math.exp(icpt)
    if slope >= -1e-12 / max(span, 1e-300):
        return amp, 1e3 * span
    return amp, -1.0 / slope


def _smooth(power: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return power
    kernel = np.ones(width) / width
    pad = width // 2
    padded = np.concatenate([power[pad:0:-1], power, power[-2:-pad - 2:-1]]) if pad else power
    return np.convolve(padded, kernel, mode="valid")[: len(power)]


def oscillation_peak_ratio(x, y, smooth: int = 1, detrend: str = "exp") -> float:
    """Peak-to-median power of the detrended series.

    ``detrend="exp"`` removes the best non-oscillating decay model
    ``(1+a)/2 + (1-a)/2 exp(-t/T)`` (with a bounded least-squares fit);
    ``detrend="envelope"`` subtracts the log-linear envelope only.
    ``smooth`` applies a moving average of that many frequency bins.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if detrend == "exp":
        init = init_db_model(x, y)
        res = fit("db_fid", x, y, p0={**init, "omega": 0.0}, fixed={"omega": 0.0})
        d = y - res.predict(x)
    else:
        tail = _tail_level(y)
        amp, td = _envelope(x, y - tail)
        r = y - tail
        d = r - np.sign(np.mean(r)) * amp * np.exp(-(x - x[0]) / td)
    _, power = periodogram(x, d - d.mean())
    power = _smooth(power, smooth)
    med = float(np.median(power))
    return float(np.max(power) / med) if med > 0 else math.inf


def init_db_model(x, y) -> dict:
    """Deterministic starting point ``{a, T_D, omega}`` for the DB decay model."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 8:
        raise ValueError("need at least 8 points to initialize the DB model")
    if np.any(np.diff(x) <= 0):
        raise ValueError("abscissae must be strictly increasing")
    tail = _tail_level(y)
    a = float(np.clip(2 * tail - 1, -1.0, 1.0))
    r = y - tail
    amp, td = _envelope(x, r)
    d = r - np.sign(np.mean(r)) * amp * np.exp(-(x - x[0]) / td) if amp > 0 else r
    freqs, power = periodogram(x, d - d.mean())
    k = int(np.argmax(power))
    omega = 0.0
    if power[k] >= 3.0 * np.median(power) and power[k] > 0:
        omega = float(np.pi * freqs[k])
    return {"a": a, "T_D": float(td), "omega": omega}


def fit_db(x, y, w=None, model: str = "db_fid", fixed: Mapping[str, float] | None = None,
           shots: int = 0, reweight: int = 2) -> FitResult:
    """Fit the DB model with starts at the DFT peak, its two neighbouring bins and zero frequency.

    With ``shots > 0`` and no explicit weights, the fit is repeated ``reweight``
    times with binomial weights evaluated on the current model curve. Weights
    taken from the noisy data themselves would favour points that fluctuated
    away from one half and bias the decay time.
    """
    if shots > 0 and w is None:
        res = _fit_db_starts(x, y, binomial_weights(y, shots), model, fixed)
        for _ in range(reweight):
            res = _fit_db_starts(x, y, binomial_weights(res.predict(x), shots), model, fixed)
        return res
    return _fit_db_starts(x, y, w, model, fixed)


def _fit_db_starts(x, y, w, model, fixed) -> FitResult:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    init = init_db_model(x, y)
    fixed = dict(fixed or {})
    n = len(x)
    span = (x[-1] - x[0]) * n / max(n - 1, 1)
    bin_w = np.pi / span
    if "omega" in fixed:
        omegas = [fixed["omega"]]
    else:
        omegas = sorted({max(init["omega"] + k * bin_w, 0.0) for k in (-1, 0, 1)} | {0.0})
    best = None
    for om in omegas:
        if model == "db_fid":
            p0 = {"a": init["a"], "T_D": init["T_D"], "omega": om}
        else:
            p0 = {"A": 0.5 * (1 - init["a"]), "B": 0.5 * (1 + init["a"]), "T_D": init["T_D"], "omega": om}
        p0.update({k: v for k, v in fixed.items()})
        res = fit(model, x, y, w, p0=p0, fixed=fixed)
        if best is None or res.chi2 < best.chi2 - 1e-12 * max(best.chi2, 1.0):
            best = res
    best.init = {**init, "omega_starts": len(omegas)}
    return best


# ---------------------------------------------------------------------------
# RB initialization
# ---------------------------------------------------------------------------


def init_rb_model(m, y, w=None) -> dict:
    """Starting point for ``A p^m + B``: for each trial ``p`` on a grid the
    amplitudes are linear, so solve for them and keep the best ``p``."""
    m = np.asarray(m, float)
    y = np.asarray(y, float)
    sw = np.sqrt(np.ones_like(y) if w is None else np.asarray(w, float))
    best = None
    for p in 1.0 - np.logspace(-7, 0, 281)[:-1]:
        basis = np.stack([p**m, np.ones_like(m)], axis=1) * sw[:, None]
        coef, *_ = np.linalg.lstsq(basis, sw * y, rcond=None)
        cost = float(np.sum((basis @ coef - sw * y) ** 2))
        if best is None or cost < best[0]:
            best = (cost, {"A": float(coef[0]), "p": float(p), "B": float(coef[1])})
    return best[1]


def fit_rb(m, y, w=None, model: str = "rb_exp") -> FitResult:
    """Fit an RB decay; the first-order model starts from the zeroth-order fit."""
    zeroth = fit("rb_exp", m, y, w, p0=init_rb_model(m, y, w))
    if model == "rb_exp":
        return zeroth
    if model != "rb_first_order":
        raise ValueError(f"{model!r} is not an RB model")
    a, p, b = (zeroth.params[k] for k in ("A", "p", "B"))
    p = min(max(p, 1e-6), 1.0 - 1e-9)
    # start off q = p^2, where C1 and q would be unidentifiable
    p0 = {"A1": a, "B1": b, "C1": 0.1 * a, "p": p, "q": p * p * (1 - 1e-3)}
    return fit("rb_first_order", m, y, w, p0=p0)


# ---------------------------------------------------------------------------
# DB parameter extraction
# ---------------------------------------------------------------------------


@dataclass
class DBParams:
    T1: float
    T2: float
    Tphi: float
    dtheta: float
    dphi: float
    errors: dict
    flags: list

    def to_dict(self) -> dict:
        def num(v):
            return None if not math.isfinite(v) else float(v)

        return {
            "T1": num(self.T1), "T2": num(self.T2), "Tphi": num(self.Tphi),
            "dtheta": float(self.dtheta), "dphi": float(self.dphi),
            "errors": {k: num(v) for k, v in self.errors.items()},
            "flags": list(self.flags),
        }


def extract_db_params(fits: Mapping[str, FitResult], t_g: float) -> DBParams:
    """Map the four learning fits to T1, T2, Tphi, dtheta and dphi.

    ``fits`` needs the keys ``free``, ``XX``, ``YY`` and ``XXb``; times in the
    fits and ``t_g`` must share a unit.
    """
    missing = {"free", "XX", "YY", "XXb"} - set(fits)
    if missing:
        raise ValueError(f"missing fits: {sorted(missing)}")
    flags = [f"{k}_not_converged" for k, f in fits.items() if not f.converged]
    t1, s1 = fits["free"].params["T_D"], fits["free"].errors["T_D"]
    t2, s2 = fits["XX"].params["T_D"], fits["XX"].errors["T_D"]
    w_yy, sw_yy = fits["YY"].params["omega"], fits["YY"].errors["omega"]
    w_xb, sw_xb = fits["XXb"].params["omega"], fits["XXb"].errors["omega"]
    gap = 2 * t1 - t2
    sgap = math.hypot(2 * s1, s2)
    if gap <= 0 or gap <= sgap:
        flags.append("T2_exceeds_2T1")
        tphi, stphi = math.inf, math.inf
    else:
        tphi = 2 * t1 * t2 / gap
        stphi = math.hypot(2 * t2 * t2 / gap**2 * s1, 4 * t1 * t1 / gap**2 * s2)
    return DBParams(
        T1=t1, T2=t2, Tphi=tphi,
        dtheta=2 * w_yy * t_g, dphi=w_xb * t_g,
        errors={"T1": s1, "T2": s2, "Tphi": stphi, "dtheta": 2 * sw_yy * t_g, "dphi": sw_xb * t_g},
        flags=flags,
    )
