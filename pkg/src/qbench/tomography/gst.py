"""Single-qubit gate set tomography.

The gate set is ``{rho, E; Gi, Gx, Gy}`` with ``Gx``/``Gy`` quarter turns
(pi/2 rotations). Fiducials are words in the gates; an experiment prepares
``rho``, applies ``F_j``, the germ ``G_k`` repeated ``l`` times, then ``F_i``,
and records the probability of the effect ``E``.

Each gate is parametrized by a lower-triangular ``T`` with ``chi = T^dagger T``
(positive by construction); ``rho`` and ``E`` by 2x2 Cholesky factors. Trace
preservation of the gates and ``E <= I`` enter the weighted least-squares
objective as quadratic penalties. Gauge freedom is left unfixed, so only
gauge-invariant quantities (predicted probabilities, superoperator spectra,
rotation angles) are compared with a reference.

The optimizer starts from the linear-inversion estimate, moved into the gauge
closest to the target and projected onto positive maps. Starting exactly at a
unitary target would put ``T`` at rank one, where the gradient along the
rank-raising directions vanishes and the search stalls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..core import _chi_basis, _chi_from_superop, depolarizing_channel
from ..dynamics.sequences import make_rng
from ..fitting import least_squares

__all__ = [
    "GATE_NAMES",
    "DEFAULT_FIDUCIALS",
    "GSTDesign",
    "GSTModel",
    "GSTDataset",
    "GSTFit",
    "ideal_gate_unitary",
    "gst_design",
    "gst_long_sequence_design",
    "gst_target_model",
    "gst_simulate_dataset",
    "gst_fit",
    "gst_linear_estimate",
    "gate_rotation_angle",
    "overrotation_uncertainty",
]

GATE_NAMES = ("Gi", "Gx", "Gy")
DEFAULT_FIDUCIALS = ((), ("Gx",), ("Gy",), ("Gx", "Gx"))
PENALTY = 1e4
# relative cost change that ends a fit; tighter values only chase gauge drift
FIT_TOLERANCE = 1e-9

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_VEC_I = np.eye(2, dtype=complex).reshape(-1)


def _rot(axis: np.ndarray, angle: float) -> np.ndarray:
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * axis


def ideal_gate_unitary(name: str, overrotation: float = 0.0) -> np.ndarray:
    if name == "Gi":
        return np.eye(2, dtype=complex)
    if name == "Gx":
        return _rot(_X, math.pi / 2 + overrotation)
    if name == "Gy":
        return _rot(_Y, math.pi / 2 + overrotation)
    raise ValueError(f"unknown gate {name!r}")


def _unitary_superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u.conj(), u)


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GSTDesign:
    """Experiments ``(i, j, k, l)``: measurement fiducial i, preparation fiducial j,
    germ index k (``-1`` for the fiducial-only block) repeated l times."""

    gates: tuple
    fiducials: tuple
    experiments: tuple
    germ_powers: tuple = (1,)

    @property
    def size(self) -> int:
        return len(self.experiments)

    def circuit(self, index: int) -> tuple:
        """Gate names in time order."""
        i, j, k, l = self.experiments[index]
        germ = () if k < 0 else (self.gates[k],) * l
        return tuple(self.fiducials[j]) + germ + tuple(self.fiducials[i])

    def to_dict(self) -> dict:
        return {"gates": list(self.gates), "fiducials": [list(f) for f in self.fiducials],
                "germ_powers": list(self.germ_powers), "experiments": [list(e) for e in self.experiments]}


def _frame_rank(fiducials, gates_superop) -> tuple[int, int]:
    rho = np.array([[1, 0], [0, 0]], dtype=complex).reshape(-1)
    preps, effects = [], []
    for f in fiducials:
        s = np.eye(4, dtype=complex)
        for g in f:
            s = gates_superop[g] @ s
        preps.append(s @ rho)
        effects.append(rho.conj() @ s)
    return np.linalg.matrix_rank(np.array(preps), tol=1e-8), np.linalg.matrix_rank(np.array(effects), tol=1e-8)


def gst_design(gates: Sequence[str] = GATE_NAMES, fiducials: Sequence[Sequence[str]] = DEFAULT_FIDUCIALS,
               include_fiducial_block: bool = True) -> GSTDesign:
    """All ``F_i G_k F_j`` experiments plus (optionally) the germ-free ``F_i F_j`` block.

    Raises when the fiducials applied to |0> (or to the |0> effect) do not span
    the four-dimensional operator space.
    """
    gates = tuple(gates)
    fiducials = tuple(tuple(f) for f in fiducials)
    for f in fiducials:
        for g in f:
            if g not in gates:
                raise ValueError(f"fiducial uses gate {g!r} outside the gate set")
    ideal = {g: _unitary_superop(ideal_gate_unitary(g)) for g in gates}
    rp, re = _frame_rank(fiducials, ideal)
    if rp < 4 or re < 4:
        raise ValueError(f"fiducials are not informationally complete (frame ranks {rp}, {re})")
    nf = len(fiducials)
    exps = []
    if include_fiducial_block:
        exps += [(i, j, -1, 0) for i in range(nf) for j in range(nf)]
    exps += [(i, j, k, 1) for k in range(len(gates)) for i in range(nf) for j in range(nf)]
    return GSTDesign(gates, fiducials, tuple(exps), (1,))


def gst_long_sequence_design(design: GSTDesign, germ_powers: Sequence[int]) -> GSTDesign:
    """Experiments ``F_i (G_k)^l F_j`` for every requested power l."""
    powers = tuple(sorted(set(int(p) for p in germ_powers)))
    if not powers or powers[0] < 1:
        raise ValueError("germ powers must be positive integers")
    nf = len(design.fiducials)
    exps = [e for e in design.experiments if e[2] < 0]
    for l in powers:
        exps += [(i, j, k, l) for k in range(len(design.gates)) for i in range(nf) for j in range(nf)]
    return GSTDesign(design.gates, design.fiducials, tuple(exps), powers)


# ---------------------------------------------------------------------------
# models and data
# ---------------------------------------------------------------------------


@dataclass
class GSTModel:
    rho: np.ndarray
    effect: np.ndarray
    gates: dict

    def probabilities(self, design: GSTDesign) -> np.ndarray:
        return _probabilities(self.rho, self.effect, self.gates, design)

    def chi(self, name: str) -> np.ndarray:
        return _chi_from_superop(self.gates[name])

    def eigenvalue_moduli(self) -> dict:
        return {g: np.sort(np.abs(np.linalg.eigvals(s)))[::-1] for g, s in self.gates.items()}

    def tp_defect(self) -> float:
        return max(float(np.max(np.abs(_VEC_I.conj() @ s - _VEC_I.conj()))) for s in self.gates.values())


def _design_index(design: GSTDesign):
    """Index arrays (i, j, slot) with slot 0 the identity and one slot per (germ, power)."""
    cached = _INDEX_CACHE.get(id(design))
    if cached is not None and cached[0] is design:
        return cached[1]
    keys = sorted({(k, l) for (_, _, k, l) in design.experiments if k >= 0})
    slot = {key: n + 1 for n, key in enumerate(keys)}
    ii = np.array([e[0] for e in design.experiments])
    jj = np.array([e[1] for e in design.experiments])
    ss = np.array([0 if e[2] < 0 else slot[(e[2], e[3])] for e in design.experiments])
    out = (keys, ii, jj, ss)
    _INDEX_CACHE[id(design)] = (design, out)
    return out


_INDEX_CACHE: dict = {}


def _probabilities(rho, effect, gates, design: GSTDesign) -> np.ndarray:
    """p = vec(E)^dagger F_i G_k^l F_j vec(rho), batched over the design."""
    keys, ii, jj, ss = _design_index(design)
    r = np.asarray(rho, dtype=complex).reshape(-1, order="F")
    e = np.asarray(effect, dtype=complex).reshape(-1, order="F").conj()
    fid = []
    for f in design.fiducials:
        s = np.eye(4, dtype=complex)
        for g in f:
            s = gates[g] @ s
        fid.append(s)
    fid = np.array(fid)
    right = fid @ r
    left = e @ fid
    mats = [np.eye(4, dtype=complex)]
    for k, l in keys:
        mats.append(np.linalg.matrix_power(gates[design.gates[k]], l))
    mats = np.array(mats)
    return np.real(np.einsum("ea,eab,eb->e", left[ii], mats[ss], right[jj]))


def gst_target_model(gates: Sequence[str] = GATE_NAMES, overrotation: Mapping[str, float] | None = None,
                     depolarizing: float = 0.0) -> GSTModel:
    """Gate set with optional over-rotations (radians) and depolarizing noise after each gate."""
    over = dict(overrotation or {})
    dep = depolarizing_channel(depolarizing).superop
    sup = {g: dep @ _unitary_superop(ideal_gate_unitary(g, over.get(g, 0.0))) for g in gates}
    ket0 = np.array([[1, 0], [0, 0]], dtype=complex)
    return GSTModel(ket0.copy(), ket0.copy(), sup)


@dataclass
class GSTDataset:
    design: GSTDesign
    m: np.ndarray
    sigma2: np.ndarray
    shots: int
    seed: int | None

    def to_dict(self) -> dict:
        return {"design": self.design.to_dict(), "m": self.m.tolist(), "sigma2": self.sigma2.tolist(),
                "shots": self.shots, "seed": self.seed}


def gst_simulate_dataset(model: GSTModel, design: GSTDesign, shots: int = 2000, seed=None) -> GSTDataset:
    """Binomial counts per experiment; ``shots=0`` records exact probabilities with unit variances."""
    p = np.clip(model.probabilities(design), 0.0, 1.0)
    if shots == 0:
        return GSTDataset(design, p, np.ones_like(p), 0, seed)
    m = make_rng(seed).binomial(shots, p) / shots
    var = np.maximum(m * (1 - m) / shots, 1.0 / (4.0 * shots * shots))
    return GSTDataset(design, m, var, shots, seed)


# ---------------------------------------------------------------------------
# parametrization
# ---------------------------------------------------------------------------

_TRIL4 = np.tril_indices(4, -1)
_N_GATE = 16
_N_SPAM = 4


def _t_from_params(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    t[_TRIL4] = x[4:10] + 1j * x[10:16]
    return t


def _params_from_chi(chi: np.ndarray) -> np.ndarray:
    # chi = T^dagger T with T lower triangular: flip indices to reuse numpy's Cholesky
    j = np.eye(4)[::-1]
    h = 0.5 * (chi + chi.conj().T)
    lo = np.linalg.cholesky(j @ h @ j + 1e-9 * np.eye(4))
    t = j @ lo.conj().T @ j
    return np.concatenate([np.real(np.diag(t)), np.real(t[_TRIL4]), np.imag(t[_TRIL4])])


def _l2(x: np.ndarray) -> np.ndarray:
    return np.array([[x[0], 0], [x[2] + 1j * x[3], x[1]]], dtype=complex)


def _params_from_psd2(m: np.ndarray) -> np.ndarray:
    lo = np.linalg.cholesky(0.5 * (m + m.conj().T) + 1e-6 * np.eye(2))
    return np.array([lo[0, 0].real, lo[1, 1].real, lo[1, 0].real, lo[1, 0].imag])


class _Parametrization:
    def __init__(self, gates: Sequence[str]):
        self.gates = tuple(gates)
        self.size = _N_SPAM * 2 + _N_GATE * len(self.gates)
        self.basis = _chi_basis(2)

    def unpack(self, x: np.ndarray):
        lr = _l2(x[0:4])
        rho = lr @ lr.conj().T
        rho = rho / np.real(np.trace(rho))
        le = _l2(x[4:8])
        effect = le @ le.conj().T
        gates = {}
        for n, g in enumerate(self.gates):
            t = _t_from_params(x[8 + _N_GATE * n: 8 + _N_GATE * (n + 1)])
            chi = t.conj().T @ t
            gates[g] = np.einsum("mn,mnab->ab", chi, self.basis)
        return rho, effect, gates

    def pack(self, model: GSTModel) -> np.ndarray:
        parts = [_params_from_psd2(model.rho), _params_from_psd2(model.effect)]
        parts += [_params_from_chi(_chi_from_superop(model.gates[g])) for g in self.gates]
        return np.concatenate(parts)

    def model(self, x: np.ndarray) -> GSTModel:
        return GSTModel(*self.unpack(x))


def _residual_fn(par: _Parametrization, data: GSTDataset, penalty: float = PENALTY):
    sw = 1.0 / np.sqrt(data.sigma2)
    w = math.sqrt(penalty)

    def residual(x):
        rho, effect, gates = par.unpack(x)
        p = _probabilities(rho, effect, gates, data.design)
        tp = []
        for g in par.gates:
            d = _VEC_I.conj() @ gates[g] - _VEC_I.conj()
            tp.extend([d.real, d.imag])
        over = np.minimum(np.linalg.eigvalsh(np.eye(2) - effect), 0.0)
        return np.concatenate([sw * (p - data.m), w * np.concatenate(tp), w * over])

    return residual


def _fd_jacobian(fn, step: float = 1e-7):
    def jac(x):
        f0 = fn(x)
        out = np.empty((f0.size, x.size))
        for i in range(x.size):
            h = step * max(1.0, abs(x[i]))
            xp = x.copy()
            xp[i] += h
            out[:, i] = (fn(xp) - f0) / h
        return out

    return jac


@dataclass
class GSTFit:
    model: GSTModel
    loss: float
    iterations: int
    converged: bool
    params: np.ndarray
    start_losses: list
    predicted: np.ndarray
    residuals: np.ndarray
    jacobian: np.ndarray = field(repr=False)
    flags: list = field(default_factory=list)
    penalty: float = PENALTY

    def eigenvalue_moduli(self) -> dict:
        return self.model.eigenvalue_moduli()

    def to_dict(self) -> dict:
        from ..core import complex_to_pairs

        return {
            "loss": float(self.loss),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "start_losses": [float(v) for v in self.start_losses],
            "tp_defect": float(self.model.tp_defect()),
            "final_penalty": float(self.penalty),
            "eigenvalue_moduli": {g: [float(v) for v in m] for g, m in self.eigenvalue_moduli().items()},
            "chi": {g: complex_to_pairs(self.model.chi(g)) for g in self.model.gates},
            "rotation_angles_deg": {g: math.degrees(gate_rotation_angle(s)) for g, s in self.model.gates.items()},
            "flags": list(self.flags),
        }


_PTM_BASIS = np.array([m.reshape(-1, order="F") for m in (np.eye(2), _X, _Y, np.diag([1.0, -1.0]))]).T / math.sqrt(2)


def _to_ptm(s: np.ndarray) -> np.ndarray:
    return np.real(_PTM_BASIS.conj().T @ s @ _PTM_BASIS)


def _from_ptm(r: np.ndarray) -> np.ndarray:
    return _PTM_BASIS @ r @ _PTM_BASIS.conj().T


def gst_linear_estimate(data: GSTDataset, target: GSTModel | None = None) -> GSTModel:
    """Linear-inversion estimate from the fiducial-only block and the single-germ block.

    Needs exactly four fiducials so that the Gram matrix is square. The result
    is expressed in the gauge in which the target's fiducial preparations are
    exact, and is generally not a physical (positive, trace-preserving) model.
    """
    design = data.design
    nf = len(design.fiducials)
    if nf != 4:
        raise ValueError("linear inversion needs exactly four fiducials")
    target = target if target is not None else gst_target_model(design.gates)
    gram = np.full((nf, nf), np.nan)
    blocks = {k: np.full((nf, nf), np.nan) for k in range(len(design.gates))}
    for (i, j, k, l), m in zip(design.experiments, data.m):
        if k < 0:
            gram[i, j] = m
        elif l == 1:
            blocks[k][i, j] = m
    if np.isnan(gram).any() or any(np.isnan(b).any() for b in blocks.values()):
        raise ValueError("design lacks the fiducial-only or the single-germ experiments")
    r = target.rho.reshape(-1, order="F")
    preps = []
    for f in design.fiducials:
        s = np.eye(4, dtype=complex)
        for g in f:
            s = target.gates[g] @ s
        preps.append(s @ r)
    b = np.array(preps).T
    b_inv = np.linalg.inv(b)
    gram_inv = np.linalg.inv(gram)
    gates = {design.gates[k]: b @ gram_inv @ blk @ b_inv for k, blk in blocks.items()}
    effect_row = (gram @ b_inv)[0]
    return GSTModel(b[:, 0].reshape(2, 2, order="F"), effect_row.conj().reshape(2, 2, order="F"), gates)


def _gauge_to_target(model: GSTModel, target: GSTModel) -> GSTModel:
    """Apply the invertible real gauge matrix that brings ``model`` closest to ``target``."""
    from scipy.optimize import minimize

    names = list(model.gates)
    r_m = {g: _to_ptm(model.gates[g]) for g in names}
    r_t = {g: _to_ptm(target.gates[g]) for g in names}
    rho_m = np.real(_PTM_BASIS.conj().T @ model.rho.reshape(-1, order="F"))
    rho_t = np.real(_PTM_BASIS.conj().T @ target.rho.reshape(-1, order="F"))
    e_m = np.real(model.effect.reshape(-1, order="F").conj() @ _PTM_BASIS)
    e_t = np.real(target.effect.reshape(-1, order="F").conj() @ _PTM_BASIS)

    def distance(v):
        b = v.reshape(4, 4)
        try:
            b_inv = np.linalg.inv(b)
        except np.linalg.LinAlgError:
            return 1e6
        out = sum(np.sum((b @ r_m[g] @ b_inv - r_t[g]) ** 2) for g in names)
        return out + np.sum((b @ rho_m - rho_t) ** 2) + np.sum((e_m @ b_inv - e_t) ** 2)

    b = minimize(distance, np.eye(4).ravel(), method="BFGS").x.reshape(4, 4)
    b_inv = np.linalg.inv(b)
    gates = {g: _from_ptm(b @ r_m[g] @ b_inv) for g in names}
    rho = (_PTM_BASIS @ (b @ rho_m)).reshape(2, 2, order="F")
    effect = ((e_m @ b_inv) @ _PTM_BASIS.conj().T).conj().reshape(2, 2, order="F")
    return GSTModel(rho, effect, gates)


def _clip_psd(m: np.ndarray, low: float, high: float = np.inf) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.clip(w, low, high)) @ v.conj().T


def _project_physical(model: GSTModel, floor: float = 1e-4) -> GSTModel:
    """Nearby strictly positive model: chi, rho and E eigenvalues clipped away from the boundary."""
    basis = _chi_basis(2)
    gates = {}
    for g, s in model.gates.items():
        chi = _chi_from_superop(s)
        trace = float(np.real(np.trace(chi)))
        chi = _clip_psd(chi, floor)
        gates[g] = np.einsum("mn,mnab->ab", chi * trace / np.real(np.trace(chi)), basis)
    rho = _clip_psd(model.rho, floor)
    return GSTModel(rho / np.real(np.trace(rho)), _clip_psd(model.effect, floor, 1 - floor), gates)


def _initial_models(data: GSTDataset, initial: GSTModel | None) -> list:
    if initial is not None:
        return [initial]
    target = gst_target_model(data.design.gates)
    out = []
    try:
        out.append(_project_physical(_gauge_to_target(gst_linear_estimate(data, target), target)))
    except (ValueError, np.linalg.LinAlgError):
        pass
    out.append(_project_physical(gst_target_model(data.design.gates, depolarizing=0.01)))
    return out


def gst_fit(data: GSTDataset, starts: int = 4, seed=0, max_iter: int = 300, perturbation: float = 0.02,
            initial: GSTModel | None = None, tp_tolerance: float = 1e-6, stage_iter: int = 100) -> GSTFit:
    """Minimize the weighted squared deviation between data and model probabilities.

    Candidate starts are the gauge-fixed linear-inversion estimate and a
    slightly depolarized target (or just ``initial``), followed by random
    perturbations of the first candidate until ``starts`` fits have run. All
    use the base penalty weight; the best fit is then refined with the penalty
    raised a hundredfold at a time (at most ``stage_iter`` iterations each)
    until the trace-preservation defect drops below ``tp_tolerance``.
    ``converged`` refers to the base-penalty fit.
    """
    design = data.design
    par = _Parametrization(design.gates)
    candidates = [par.pack(m) for m in _initial_models(data, initial)]
    rng = make_rng(seed)
    while len(candidates) < max(1, starts):
        candidates.append(candidates[0] + perturbation * rng.standard_normal(candidates[0].size))
    residual = _residual_fn(par, data, PENALTY)
    jac = _fd_jacobian(residual)
    best = None
    losses = []
    for x0 in candidates:
        res = least_squares(residual, jac, x0, max_iter=max_iter, ftol=FIT_TOLERANCE)
        losses.append(res.cost)
        if best is None or res.cost < best.cost:
            best = res
    penalty = PENALTY
    converged = best.converged
    iterations = best.iterations
    # later stages only tighten trace preservation; they need not reach a stationary point
    while par.model(best.x).tp_defect() > tp_tolerance and penalty < 1e12:
        penalty *= 100
        residual = _residual_fn(par, data, penalty)
        best = least_squares(residual, _fd_jacobian(residual), best.x, max_iter=stage_iter, ftol=FIT_TOLERANCE)
        iterations += best.iterations
    model = par.model(best.x)
    flags = [] if converged else ["not_converged"]
    if model.tp_defect() > tp_tolerance:
        flags.append("tp_penalty_active")
    base = _residual_fn(par, data, PENALTY)
    r0 = base(best.x)
    return GSTFit(model, float(r0 @ r0), iterations, converged, best.x, losses,
                  model.probabilities(design), r0, _fd_jacobian(base)(best.x), flags, penalty)


def gate_rotation_angle(superop: np.ndarray) -> float:
    """Rotation angle from the phase of the complex eigenvalue pair (gauge invariant)."""
    w = np.linalg.eigvals(superop)
    return float(np.max(np.abs(np.angle(w))))


def overrotation_uncertainty(fit: GSTFit, data: GSTDataset, gate: str = "Gx", rcond: float = 1e-9) -> float:
    """Linearized 1-sigma uncertainty of a gate's rotation angle.

    Uses the pseudo-inverse of the Gauss-Newton Hessian at the base penalty
    weight; gauge directions fall in its null space and do not move the
    (gauge-invariant) angle.
    """
    par = _Parametrization(data.design.gates)
    jt = fit.jacobian
    cov = np.linalg.pinv(jt.T @ jt, rcond=rcond, hermitian=True)
    x = fit.params

    def angle(v):
        return gate_rotation_angle(par.unpack(v)[2][gate])

    grad = np.empty(x.size)
    for i in range(x.size):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        grad[i] = (angle(xp) - angle(xm)) / (2 * h)
    return float(math.sqrt(max(grad @ cov @ grad, 0.0)))
