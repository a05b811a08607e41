"""Command-line front end.

Every protocol subcommand reads a JSON config, applies ``--override`` edits,
validates the result against a JSON schema and writes two files into the
output directory: ``<protocol>_results.json`` and ``<protocol>_curves.csv``.
Boundary units are nanoseconds, cyclic MHz and degrees.

Exit codes: 0 on success, 2 when the run finished but raised flags (fit
trouble, unphysical estimates), 1 on any error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .core import QuantumChannel, complex_to_pairs, depolarizing_channel, random_channel
from .dynamics.sequences import SequenceSpec, make_rng, run_sequence, sample_fidelities, seed_sequence
from .pulses import (LEAKAGE_SCHEMA, NOISE_SCHEMA, PULSE_SCHEMA, noise_from_config, noise_to_config,
                     pulse_from_config, pulse_to_config)

OUT_DIR_ENV = "QBENCH_OUT_DIR"
PROTOCOLS = ("db", "rb", "irb", "dfe", "pfe", "xeb", "rcs", "tomo", "gst", "simulate", "fit")
# config-level aliases that select a tomography method
_TOMO_ALIASES = ("sqpt", "aapt", "dcqd")
CSV_HEADER = ("curve", "x", "y_mean", "y_sem", "model_prediction")
PLOT_HEADER = ("x", "y_mean", "y_sem", "model_prediction")


class ConfigError(ValueError):
    """Invalid configuration; the message carries JSON-pointer paths."""


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_INT_LIST = {"type": "array", "items": _POS_INT, "minItems": 1}
_CYCLE = {"oneOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}, "minItems": 1}]}
_PREP = {"oneOf": [{"enum": ["0", "1", "+", "-", "+i", "-i"]},
                   {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}]}


def _block(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed"],
    "properties": {
        "protocol": {"enum": list(PROTOCOLS) + list(_TOMO_ALIASES)},
        "seed": {"type": "integer", "minimum": 0},
        "shots": {"type": "integer", "minimum": 0},
        "pulse": PULSE_SCHEMA,
        "noise": NOISE_SCHEMA,
        "leakage": LEAKAGE_SCHEMA,
        "output": _block({"dir": {"type": "string"}}),
        "db": _block({
            "n_max": {"type": "integer", "minimum": 8},
            "repetitions": _INT_LIST,
            "learned_eta": _PROB,
            "tests": {"type": "boolean"},
            "records_file": {"type": "string"},
            "temperature": _block({"preparation": _PREP, "cycle": _CYCLE, "offset": {"type": "number"}}),
        }),
        "rb": _block({
            "depths": _INT_LIST,
            "K": {"type": "integer", "minimum": 2},
            "model": {"enum": ["pulses", "depolarizing", "ideal"]},
            "p": _PROB,
        }),
        "irb": _block({
            "gate": {"type": "integer", "minimum": 0, "maximum": 23},
            "extra_p": _PROB,
        }),
        "dfe": _block({
            "mode": {"enum": ["state", "process"]},
            "n": {"type": "integer", "minimum": 1, "maximum": 6},
            "target": {"enum": ["bell", "ghz", "stabilizer", "zero"]},
            "white_noise": _PROB,
            "epsilon1": {"type": "number", "exclusiveMinimum": 0},
            "epsilon2": {"type": "number", "exclusiveMinimum": 0},
            "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "N": _POS_INT,
            "gate": {"enum": ["H", "S", "T", "X", "Y", "Z", "CNOT", "CZ"]},
            "samples": _POS_INT,
        }),
        "pfe": _block({
            "n": {"type": "integer", "minimum": 1, "maximum": 6},
            "layers": _POS_INT,
            "white_noise": _PROB,
            "m": {"type": "integer", "minimum": 2},
        }),
        "xeb": _block({
            "n": {"type": "integer", "minimum": 2, "maximum": 12},
            "depth": _POS_INT,
            "L": {"type": "integer", "minimum": 2},
            "pauli_noise": _PROB,
        }),
        "rcs": _block({
            "n": {"type": "integer", "minimum": 2, "maximum": 12},
            "depths": _INT_LIST,
            "L": {"type": "integer", "minimum": 2},
            "pauli_noise": _PROB,
            "estimator": {"enum": ["unbiased", "linear"]},
        }),
        "tomo": _block({
            "method": {"enum": ["sqpt", "aapt", "dcqd", "all"]},
            "channel": _block({
                "kind": {"enum": ["random", "depolarizing", "amplitude_damping"]},
                "rank": {"type": "integer", "minimum": 1, "maximum": 4},
                "p": _PROB,
                "gamma": _PROB,
            }),
        }),
        "gst": _block({
            "overrotation_deg": {"type": "object", "additionalProperties": {"type": "number"},
                                 "propertyNames": {"enum": ["Gi", "Gx", "Gy"]}},
            "depolarizing": _PROB,
            "germ_powers": _INT_LIST,
            "starts": _POS_INT,
            "max_iter": _POS_INT,
        }),
        "simulate": _block({
            "preparation": _PREP,
            "cycle": _CYCLE,
            "n_max": _POS_INT,
            "repetitions": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        }),
        "fit": _block({
            "model": {"enum": ["db_fid", "db_fid_spam", "rb_exp", "rb_first_order", "rcs_exp"]},
            "data": {"type": "string"},
            "weights": {"enum": ["none", "sem", "binomial"]},
            "fixed": {"type": "object", "additionalProperties": {"type": "number"}},
            "p0": {"type": "object", "additionalProperties": {"type": "number"}},
        }),
    },
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate_config(cfg: dict) -> None:
    """Raise :class:`ConfigError` listing every violation with its JSON pointer."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)), e.message)):
        path = list(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            allowed = set(err.schema.get("properties", {}))
            for key in sorted(set(err.instance) - allowed):
                problems.append(f"{_pointer(path + [key])}: unknown key")
            continue
        problems.append(f"{_pointer(path)}: {err.message}")
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``dotted.key=value`` edits; values are parsed as JSON when possible."""
    out = copy.deepcopy(cfg)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {item!r}: {_pointer(parts[:parts.index(p) + 1])} is not an object")
            node = nxt
        node[parts[-1]] = _parse_value(value)
    return out


# ---------------------------------------------------------------------------
# JSON / CSV helpers
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, two-space indent, non-finite floats as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        v = float(v)
    return "%.17g" % v


def _curve(name: str, x_label: str, x, y, sem=None, model=None) -> dict:
    x = np.asarray(x, float)
    return {"name": name, "x_label": x_label, "x": x, "y_mean": np.asarray(y, float),
            "y_sem": np.zeros_like(x) if sem is None else np.asarray(sem, float),
            "model_prediction": np.full_like(x, np.nan) if model is None else np.asarray(model, float)}


def write_curves_csv(path: Path, curves) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in curves:
            for row in zip(c["x"], c["y_mean"], c["y_sem"], c["model_prediction"]):
                w.writerow([c["name"]] + [_fmt(v) for v in row])


def _float_or_nan(v) -> float:
    if v is None or v == "":
        return math.nan
    return float(v)


def emit_plotdata(results_path, out_dir) -> list:
    """Write one CSV per curve of a results file; a header-only CSV when it has none."""
    try:
        with open(results_path) as fh:
            data = json.load(fh)
        curves = data["curves"]
        if not isinstance(curves, list):
            raise TypeError("curves must be a list")
        for c in curves:
            for key in ("name",) + PLOT_HEADER:
                if key not in c:
                    raise KeyError(f"curve lacks {key!r}")
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed results file {results_path}: {exc}") from exc
    out_dir = Path(out_dir)
    stem = Path(results_path).stem.removesuffix("_results")
    written = []
    if not curves:
        path = out_dir / f"{stem}_curves.csv"
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(PLOT_HEADER)
        return [path]
    for c in curves:
        path = out_dir / f"{stem}_{c['name']}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PLOT_HEADER)
            for row in zip(*(c[k] for k in PLOT_HEADER)):
                w.writerow([_fmt(_float_or_nan(v)) for v in row])
        written.append(path)
    return written


def read_xy_csv(path) -> dict:
    """Columns by header name from a numeric CSV (``x``, ``y`` or ``y_mean``, optional ``y_sem``)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    cols = {k: np.array([_float_or_nan(r[k]) for r in rows]) for k in rows[0]}
    if "y" not in cols and "y_mean" in cols:
        cols["y"] = cols["y_mean"]
    if "x" not in cols or "y" not in cols:
        raise ConfigError(f"{path}: need columns x and y (or y_mean)")
    return cols


# ---------------------------------------------------------------------------
# protocol runners: each returns (results, curves, flags)
# ---------------------------------------------------------------------------

_NS = 1e3  # microseconds -> nanoseconds


def _shots(cfg, default: int) -> int:
    return int(cfg.get("shots", default))


def _repetitions(block: dict, default_max: int, start: int = 1) -> tuple:
    if "repetitions" in block:
        return tuple(sorted(set(block["repetitions"])))
    return tuple(range(start, int(block.get("n_max", default_max)) + 1))


def _db_params_boundary(params) -> dict:
    def ns(v):
        return None if v is None or not math.isfinite(v) else v * _NS

    err = params.errors
    return {
        "T1_ns": ns(params.T1), "T2_ns": ns(params.T2), "Tphi_ns": ns(params.Tphi),
        "rotation_error_deg": math.degrees(params.dtheta), "phase_error_deg": math.degrees(params.dphi),
        "errors": {
            "T1_ns": ns(err.get("T1", math.nan)), "T2_ns": ns(err.get("T2", math.nan)),
            "Tphi_ns": ns(err.get("Tphi", math.nan)),
            "rotation_error_deg": math.degrees(err.get("dtheta", math.nan)),
            "phase_error_deg": math.degrees(err.get("dphi", math.nan)),
        },
    }


def run_db(cfg: dict, seed: int):
    from .benchmarks.db import db_run, db_temperature
    from .dynamics.sequences import ExperimentRecord

    block = cfg.get("db", {})
    template = pulse_from_config(cfg.get("pulse", {}))
    noise = noise_from_config(cfg.get("noise", {}))
    records = None
    if "records_file" in block:
        with open(block["records_file"]) as fh:
            records = {k: ExperimentRecord.from_dict(v) for k, v in json.load(fh).items()}
    res = db_run(template, noise, _repetitions(block, 300), _shots(cfg, 800), seed, records,
                 tests=block.get("tests", True), learned_eta=block.get("learned_eta", 1.0))
    out = {"params": _db_params_boundary(res.params), "fits_us": {k: f.to_dict() for k, f in res.fits.items()},
           "tests": res.to_dict()["tests"], "learned_pulse": pulse_to_config(res.learned_template),
           "learned_noise": noise_to_config(res.learned_noise)}
    flags = list(res.flags)
    if "temperature" in block:
        t = block["temperature"]
        prep = t.get("preparation", "+")
        seq = SequenceSpec(prep if isinstance(prep, str) else tuple(prep),
                           t.get("cycle", "YbY") if isinstance(t.get("cycle", "YbY"), str) else tuple(t["cycle"]),
                           (1,))
        kt = db_temperature(float(t["offset"]), seq, template, noise)
        out["kT_MHz"] = kt / (2 * math.pi * 1e6)
    curves = [_curve(c["name"], "time_ns", c["x"] * _NS, c["y_mean"], c["y_sem"], c["model_prediction"])
              for c in res.curves()]
    return out, curves, flags


def _rb_model(cfg: dict):
    from .benchmarks.rb import CliffordNoiseModel

    block = cfg.get("rb", {})
    kind = block.get("model", "pulses")
    if kind == "ideal":
        return CliffordNoiseModel.ideal()
    if kind == "depolarizing":
        return CliffordNoiseModel.depolarizing(block.get("p", 0.995))
    return CliffordNoiseModel.from_pulses(pulse_from_config(cfg.get("pulse", {})),
                                          noise_from_config(cfg.get("noise", {})))


def _rb_curve(name: str, r) -> dict:
    model = r.fit.predict(r.depths.astype(float)) if r.fit is not None else np.full(r.depths.size, r.B)
    return _curve(name, "clifford_depth", r.depths, r.mean, r.sem, model)


def _rb_common(cfg: dict):
    from .benchmarks.rb import DEFAULT_DEPTHS

    block = cfg.get("rb", {})
    return block.get("depths", list(DEFAULT_DEPTHS)), block.get("K", 30), _shots(cfg, 800)


def _rb_summary(r) -> dict:
    d = r.to_dict()
    d["r_C_percent"] = 100 * r.r_C
    d["r_C_err_percent"] = 100 * r.r_C_err
    return d


def run_rb(cfg: dict, seed: int):
    from .benchmarks.rb import rb_run

    depths, k, shots = _rb_common(cfg)
    r = rb_run(_rb_model(cfg), depths, k, shots, seed)
    return _rb_summary(r), [_rb_curve("rb", r)], list(r.flags)


def run_irb(cfg: dict, seed: int):
    from .benchmarks.rb import irb_run, rb_run

    depths, k, shots = _rb_common(cfg)
    block = cfg.get("irb", {})
    model = _rb_model(cfg)
    s_base, s_inter = seed_sequence(seed).spawn(2)
    base = rb_run(model, depths, k, shots, s_base)
    gate = int(block.get("gate", 0))
    extra = float(block.get("extra_p", 1.0))
    gate_map = np.diag([1.0, extra, extra, extra]) @ model.maps[gate]
    res = irb_run(model, gate, base, seed=s_inter, gate_map=gate_map)
    out = {"baseline": _rb_summary(base), "irb": res.to_dict(), "gate": gate,
           "r_G_percent": 100 * res.r_G, "E_percent": 100 * res.E}
    out["irb"].pop("interleaved")
    out["interleaved"] = _rb_summary(res.interleaved)
    flags = list(base.flags) + [f"interleaved_{f}" for f in res.interleaved.flags] + list(res.flags)
    return out, [_rb_curve("baseline", base), _rb_curve("interleaved", res.interleaved)], flags


def _dfe_target(kind: str, n: int, rng) -> np.ndarray:
    from .benchmarks.dfe import random_stabilizer_state

    d = 2**n
    psi = np.zeros(d, dtype=complex)
    if kind == "zero":
        psi[0] = 1
    elif kind in ("bell", "ghz"):
        if n < 2:
            raise ConfigError("/dfe/target: bell and ghz states need n >= 2")
        psi[0] = psi[-1] = 1 / math.sqrt(2)
    else:
        psi = random_stabilizer_state(n, rng)
    return np.outer(psi, psi.conj())


_DFE_GATES = {"CNOT": 2, "CZ": 2}


def run_dfe(cfg: dict, seed: int):
    from .benchmarks.dfe import dfe_process, dfe_state
    from .benchmarks.pfe import white_noise_channel
    from .dynamics.statevector import GATES

    block = cfg.get("dfe", {})
    lam = block.get("white_noise", 0.05)
    s_target, s_run = seed_sequence(seed).spawn(2)
    if block.get("mode", "state") == "process":
        name = block.get("gate", "H")
        u = GATES[name]
        n = _DFE_GATES.get(name, 1)
        d = 2**n
        channel = QuantumChannel.from_superop(white_noise_channel(lam, n).superop @ np.kron(u.conj(), u))
        r = dfe_process(u, channel, block.get("samples", 200), _shots(cfg, 0), s_run)
        out = r.to_dict()
        out["gate"] = name
        out["exact_F_proc"] = float(np.real(np.trace(np.kron(u.conj(), u).conj().T @ channel.superop))) / d**2
        return out, [], []
    n = block.get("n", 2)
    sigma = _dfe_target(block.get("target", "bell"), n, make_rng(s_target))
    d = 2**n
    rho = (1 - lam) * sigma + lam * np.eye(d) / d
    shots = cfg.get("shots")
    r = dfe_state(sigma, rho, block.get("epsilon1", 0.01), block.get("epsilon2", 0.01), block.get("delta", 0.1),
                  s_run, block.get("N"), None if not shots else shots, exact=shots == 0)
    out = r.to_dict()
    out["exact_fidelity"] = float(np.real(np.trace(sigma @ rho)))
    return out, [], []


def run_pfe(cfg: dict, seed: int):
    from .benchmarks.pfe import hadamard_cz_circuit, pfe_exact, pfe_run, white_noise_channel

    block = cfg.get("pfe", {})
    n = block.get("n", 3)
    u = hadamard_cz_circuit(n, block.get("layers", 2))
    channel = QuantumChannel.from_superop(white_noise_channel(block.get("white_noise", 0.05), n).superop
                                          @ np.kron(u.conj(), u))
    r = pfe_run(u, channel, block.get("m", 100), _shots(cfg, 0), seed)
    out = r.to_dict()
    out["exact_F_squared"] = pfe_exact(u, channel)
    return out, [], []


def run_xeb(cfg: dict, seed: int):
    from .benchmarks.xeb import rcs_benchmark

    block = cfg.get("xeb", {})
    r = rcs_benchmark(block.get("n", 5), [block.get("depth", 10)], block.get("L", 10), block.get("pauli_noise", 0.0),
                      _shots(cfg, 1000), seed)
    l = r.L
    out = {"n": r.n, "depth": int(r.depths[0]), "M": r.M, "L": l,
           "F_xeb": float(r.f_xeb.mean()), "F_xeb_sem": float(r.f_xeb.std(ddof=1) / math.sqrt(l)),
           "F_uxeb": float(r.f_uxeb.mean()), "F_uxeb_sem": float(r.f_uxeb.std(ddof=1) / math.sqrt(l)),
           "S_log": float(r.s_log.mean()), "denominator": float(r.denominators.mean()),
           "instances": {"F_xeb": r.f_xeb[0], "F_uxeb": r.f_uxeb[0], "S_log": r.s_log[0]}}
    return out, [], []


def run_rcs(cfg: dict, seed: int):
    from .benchmarks.xeb import rcs_benchmark

    block = cfg.get("rcs", {})
    r = rcs_benchmark(block.get("n", 5), block.get("depths", list(range(1, 11))), block.get("L", 10),
                      block.get("pauli_noise", 0.05), _shots(cfg, 1000), seed, block.get("estimator", "unbiased"))
    model = r.fit.predict(r.depths.astype(float)) if r.fit is not None else None
    return r.to_dict(), [_curve("rcs", "layer_depth", r.depths, r.mean, r.sem, model)], list(r.flags)


def _tomo_channel(spec: dict, rng) -> QuantumChannel:
    kind = spec.get("kind", "random")
    if kind == "depolarizing":
        return depolarizing_channel(spec.get("p", 0.1))
    if kind == "amplitude_damping":
        g = spec.get("gamma", 0.1)
        return QuantumChannel.from_kraus([np.array([[1, 0], [0, math.sqrt(1 - g)]]),
                                          np.array([[0, math.sqrt(g)], [0, 0]])])
    return random_channel(2, rng, spec.get("rank", 2))


def run_tomo(cfg: dict, seed: int):
    from .core import process_fidelity
    from .tomography.aapt import aapt
    from .tomography.dcqd import dcqd_single_qubit
    from .tomography.oracle import ChannelOracle
    from .tomography.sqpt import sqpt

    block = cfg.get("tomo", {})
    method = block.get("method", "all")
    methods = ("sqpt", "aapt", "dcqd") if method == "all" else (method,)
    s_chan, *s_methods = seed_sequence(seed).spawn(4)
    truth = _tomo_channel(block.get("channel", {}), make_rng(s_chan))
    runners = {"sqpt": sqpt, "aapt": aapt, "dcqd": dcqd_single_qubit}
    shots = _shots(cfg, 0)
    chis, out, flags = {}, {"methods": {}}, []
    for name, s in zip(methods, s_methods):
        oracle = ChannelOracle(truth, shots, int(s.generate_state(1)[0]))
        pm = runners[name](oracle)
        chi = np.asarray(pm.data)
        chis[name] = chi
        entry = {"chi": complex_to_pairs(chi), "preparations": len(oracle.preparations),
                 "configurations": oracle.configurations}
        try:
            entry["process_fidelity"] = process_fidelity(truth, QuantumChannel.from_chi(pm.project_psd().data,
                                                                                        validate=False))
        except (ValueError, np.linalg.LinAlgError):
            flags.append(f"{name}_fidelity_unavailable")
        out["methods"][name] = entry
    out["pairwise_frobenius"] = {f"{a}-{b}": float(np.linalg.norm(chis[a] - chis[b]))
                                 for a, b in itertools.combinations(methods, 2)}
    out["true_chi"] = complex_to_pairs(truth.chi())
    return out, [], flags


def run_gst(cfg: dict, seed: int):
    from .tomography.gst import (gst_design, gst_fit, gst_long_sequence_design, gst_simulate_dataset,
                                 gst_target_model, overrotation_uncertainty)

    block = cfg.get("gst", {})
    over = {g: math.radians(v) for g, v in block.get("overrotation_deg", {"Gx": 0.5}).items()}
    truth = gst_target_model(overrotation=over, depolarizing=block.get("depolarizing", 0.02))
    design = gst_design()
    powers = block.get("germ_powers", [1])
    if powers != [1]:
        design = gst_long_sequence_design(design, powers)
    s_data, s_fit = seed_sequence(seed).spawn(2)
    shots = _shots(cfg, 2000)
    data = gst_simulate_dataset(truth, design, shots, int(s_data.generate_state(1)[0]))
    fit = gst_fit(data, starts=block.get("starts", 4), seed=int(s_fit.generate_state(1)[0]),
                  max_iter=block.get("max_iter", 300))
    true_mod = truth.eigenvalue_moduli()
    fit_mod = fit.eigenvalue_moduli()
    p_true = truth.probabilities(design)
    sem = np.sqrt(data.sigma2)
    out = fit.to_dict()
    out.update({
        "experiments": design.size,
        "germ_powers": list(design.germ_powers),
        "max_eigenvalue_modulus_error": max(float(np.max(np.abs(fit_mod[g] - true_mod[g]))) for g in true_mod),
        "max_truth_z": float(np.max(np.abs(fit.predicted - p_true) / sem)) if shots else None,
        "overrotation_uncertainty_deg": math.degrees(overrotation_uncertainty(fit, data, "Gx")) if shots else None,
    })
    curve = _curve("probabilities", "experiment", np.arange(design.size), data.m, sem if shots else None,
                   fit.predicted)
    return out, [curve], list(fit.flags)


def _simulate_qutrit(cfg: dict, seq: SequenceSpec, seed: int):
    from .dynamics.lindblad import qutrit_fidelities
    from .pulses import leakage_from_config

    noise = noise_from_config(cfg["noise"]) if "noise" in cfg else None
    times, exact, leaked = qutrit_fidelities(seq, pulse_from_config(cfg.get("pulse", {})),
                                             leakage_from_config(cfg["leakage"]), noise)
    exact = np.clip(exact, 0.0, 1.0)
    shots = _shots(cfg, 800)
    y = sample_fidelities(exact, shots, make_rng(seed)) if shots else exact
    sem = np.sqrt(np.clip(y * (1 - y), 0, None) / shots) if shots else None
    out = {"sequence": seq.to_dict(), "shots": shots, "times_ns": times * 1e9, "fidelities": y,
           "exact_fidelities": exact, "leaked_population": leaked}
    return out, [_curve(seq.name, "time_ns", times * 1e9, y, sem, exact)], []


def run_simulate(cfg: dict, seed: int):
    block = cfg.get("simulate", {})
    prep = block.get("preparation", "+")
    cyc = block.get("cycle", "XX")
    seq = SequenceSpec(prep if isinstance(prep, str) else tuple(prep), cyc if isinstance(cyc, str) else tuple(cyc),
                       _repetitions(block, 300, start=0 if "repetitions" in block else 1))
    if "leakage" in cfg:
        return _simulate_qutrit(cfg, seq, seed)
    rec = run_sequence(seq, pulse_from_config(cfg.get("pulse", {})), noise_from_config(cfg.get("noise", {})),
                       _shots(cfg, 800), seed)
    y = np.asarray(rec.fidelities)
    sem = np.sqrt(np.clip(y * (1 - y), 0, None) / rec.shots) if rec.shots else None
    exact = rec.exact_fidelities if rec.exact_fidelities is not None else y
    out = {"sequence": seq.to_dict(), "shots": rec.shots, "times_ns": rec.times * 1e9, "fidelities": y,
           "exact_fidelities": exact}
    return out, [_curve(seq.name, "time_ns", rec.times * 1e9, y, sem, exact)], []


def run_fit(cfg: dict, seed: int):
    from .fitting import binomial_weights, fit, fit_db, fit_rb
    from .benchmarks.xeb import fit_rcs

    block = cfg.get("fit", {})
    if "data" not in block:
        raise ConfigError("/fit/data: a CSV path is required")
    cols = read_xy_csv(block["data"])
    x, y = cols["x"], cols["y"]
    model = block.get("model", "db_fid")
    wmode = block.get("weights", "sem" if "y_sem" in cols else "none")
    w = None
    if wmode == "sem":
        if "y_sem" not in cols or np.any(cols["y_sem"] <= 0):
            raise ConfigError("/fit/weights: 'sem' needs a positive y_sem column")
        w = 1.0 / cols["y_sem"] ** 2
    elif wmode == "binomial":
        if not cfg.get("shots"):
            raise ConfigError("/shots: binomial weights need a positive shot count")
        w = binomial_weights(y, cfg["shots"])
    fixed = block.get("fixed")
    if "p0" in block:
        fr = fit(model, x, y, w, block["p0"], fixed)
    elif model.startswith("db_"):
        fr = fit_db(x, y, w, model, fixed)
    elif model.startswith("rb_"):
        if fixed:
            raise ConfigError("/fit/fixed: RB models need an explicit p0 when parameters are fixed")
        fr = fit_rb(x, y, w, model)
    else:
        if fixed:
            raise ConfigError("/fit/fixed: rcs_exp needs an explicit p0 when parameters are fixed")
        fr = fit_rcs(x, y, cols.get("y_sem") if wmode == "sem" else None)
    flags = [] if fr.converged else ["fit_not_converged"]
    return fr.to_dict(), [_curve(model, "x", x, y, cols.get("y_sem"), fr.predict(x))], flags


RUNNERS = {"db": run_db, "rb": run_rb, "irb": run_irb, "dfe": run_dfe, "pfe": run_pfe, "xeb": run_xeb,
           "rcs": run_rcs, "tomo": run_tomo, "gst": run_gst, "simulate": run_simulate, "fit": run_fit}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("/: config must be a JSON object")
    return cfg


def resolve_protocol(command: str, cfg: dict) -> str:
    declared = cfg.get("protocol")
    if command == "run":
        if declared is None:
            raise ConfigError("/protocol: required by the run subcommand")
        proto = declared
    else:
        proto = command
        if declared is not None and declared != command and not (command == "tomo" and declared in _TOMO_ALIASES):
            raise ConfigError(f"/protocol: config declares {declared!r} but subcommand is {command!r}")
    if proto in _TOMO_ALIASES:
        tomo = cfg.setdefault("tomo", {})
        if tomo.setdefault("method", proto) != proto:
            raise ConfigError(f"/tomo/method: conflicts with protocol {proto!r}")
        proto = "tomo"
    return proto


def execute(command: str, cfg: dict, out_dir: Path) -> int:
    """Run one protocol from a validated config and write its outputs."""
    proto = resolve_protocol(command, cfg)
    validate_config(cfg)
    if not out_dir.is_dir():
        raise ConfigError(f"output directory {out_dir} does not exist")
    results, curves, flags = RUNNERS[proto](cfg, cfg["seed"])
    doc = {"toolkit": "qbench", "version": __version__, "protocol": proto, "seed": cfg["seed"], "config": cfg,
           "results": results, "flags": flags,
           "curves": [{k: v for k, v in c.items()} for c in curves]}
    (out_dir / f"{proto}_results.json").write_text(dumps(doc))
    write_curves_csv(out_dir / f"{proto}_curves.csv", curves)
    return 2 if flags else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbench", description="Noisy-gate simulation and benchmarking protocols.")
    parser.add_argument("--version", action="version", version=f"qbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run",) + PROTOCOLS:
        p = sub.add_parser(name, help="protocol from the config's 'protocol' key" if name == "run" else None)
        if name == "run":
            p.add_argument("config_path", nargs="?", help="config file (same as --config)")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV} or the working directory)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--shots", type=int, help="overrides the config shot count; 0 selects exact expectations")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap; protocols currently run serially, so any value >= 1 gives the same output")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config edit, value parsed as JSON (repeatable)")
    p = sub.add_parser("plotdata", help="one CSV per curve from a results JSON")
    p.add_argument("results", help="results JSON written by a protocol run")
    p.add_argument("--out", help="output directory (default: next to the results file)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plotdata":
            out = Path(args.out) if args.out else Path(args.results).resolve().parent
            if not out.is_dir():
                raise ConfigError(f"output directory {out} does not exist")
            for path in emit_plotdata(args.results, out):
                print(path)
            return 0
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        path = args.config or getattr(args, "config_path", None)
        cfg = apply_overrides(load_config(path), args.override)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.shots is not None:
            cfg["shots"] = args.shots
        out_dir = Path(args.out or cfg.get("output", {}).get("dir") or os.environ.get(OUT_DIR_ENV) or ".")
        return execute(args.command, cfg, out_dir)
    except Exception as exc:  # any failure maps to exit code 1 with a readable message
        print(f"qbench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
