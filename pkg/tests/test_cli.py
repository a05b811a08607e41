import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from qbench import __version__
from qbench.cli import ConfigError, apply_overrides, emit_plotdata, main, validate_config

pytestmark = pytest.mark.invariant

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_DB = {"protocol": "db", "seed": 7, "shots": 200,
            "pulse": {"gate_duration_ns": 88, "rotation_error_deg": 0.398, "phase_error_deg": 0.426},
            "noise": {"T1_ns": 23360, "T2_ns": 44130},
            "db": {"n_max": 300, "tests": False}}
SMALL_RB = {"protocol": "rb", "seed": 3, "shots": 100,
            "rb": {"model": "depolarizing", "p": 0.99, "K": 4, "depths": [2, 4, 8, 16, 32, 64]}}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def _run(tmp_path, cfg, *extra, out=None):
    out = out or tmp_path
    code = main(["run", str(_write(tmp_path, cfg)), "--out", str(out), *extra])
    return code


def _results(directory, proto):
    return json.loads((directory / f"{proto}_results.json").read_text())


def test_same_seed_gives_byte_identical_results(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert _run(tmp_path, SMALL_DB, out=a) == 0
    assert _run(tmp_path, SMALL_DB, out=b) == 0
    assert (a / "db_results.json").read_bytes() == (b / "db_results.json").read_bytes()
    assert (a / "db_curves.csv").read_bytes() == (b / "db_curves.csv").read_bytes()


def test_results_carry_config_version_and_seed(tmp_path):
    assert _run(tmp_path, SMALL_RB, "--seed", "21") == 0
    doc = _results(tmp_path, "rb")
    assert doc["version"] == __version__
    assert doc["seed"] == 21
    assert doc["config"]["seed"] == 21
    assert doc["config"]["rb"] == SMALL_RB["rb"]


def test_config_echo_reproduces_the_run(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    first.mkdir(), second.mkdir()
    assert _run(tmp_path, SMALL_RB, "--override", "rb.K=3", "--shots", "50", out=first) == 0
    echo = _results(first, "rb")["config"]
    assert main(["run", str(_write(tmp_path, echo, "echo.json")), "--out", str(second)]) == 0
    assert (first / "rb_results.json").read_bytes() == (second / "rb_results.json").read_bytes()


def test_shots_override_selects_exact_mode(tmp_path):
    assert _run(tmp_path, SMALL_RB, "--override", "shots=0") == 0
    doc = _results(tmp_path, "rb")
    assert doc["config"]["shots"] == 0
    assert doc["results"]["p"] == pytest.approx(0.99, abs=1e-6)


def test_overrides_parse_json_values():
    cfg = apply_overrides({"a": {"b": 1}}, ["a.b=2.5", "a.c=[1,2]", "d=text", "e.f=true"])
    assert cfg == {"a": {"b": 2.5, "c": [1, 2]}, "d": "text", "e": {"f": True}}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides({"a": 1}, ["a.b=2"])


def test_schema_errors_name_json_pointers():
    with pytest.raises(ConfigError) as info:
        validate_config({"protocol": "rb", "seed": 1, "rb": {"K": 0, "colour": "red"}})
    message = str(info.value)
    assert "/rb/K:" in message
    assert "/rb/colour: unknown key" in message
    with pytest.raises(ConfigError, match="seed"):
        validate_config({"protocol": "rb"})
    with pytest.raises(ConfigError, match="/bogus: unknown key"):
        validate_config({"protocol": "rb", "seed": 1, "bogus": 0})


def test_error_exit_codes(tmp_path, capsys):
    assert _run(tmp_path, {"protocol": "rb"}) == 1
    assert "seed" in capsys.readouterr().err
    assert _run(tmp_path, SMALL_RB, out=tmp_path / "missing") == 1
    assert "does not exist" in capsys.readouterr().err
    assert main(["rb", "--config", str(tmp_path / "absent.json")]) == 1
    assert main(["db", "--config", str(_write(tmp_path, SMALL_RB)), "--out", str(tmp_path)]) == 1
    assert _run(tmp_path, SMALL_RB, "--threads", "0") == 1


def test_flagged_fit_exits_with_two(tmp_path):
    cfg = dict(SMALL_RB, rb={"model": "ideal", "K": 2, "depths": [2, 4, 8, 16]}, shots=0)
    assert _run(tmp_path, cfg) == 2
    assert _results(tmp_path, "rb")["flags"] == ["flat_curve"]


def test_output_directory_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    target.mkdir()
    monkeypatch.setenv("QBENCH_OUT_DIR", str(target))
    assert main(["rb", "--config", str(_write(tmp_path, SMALL_RB))]) == 0
    assert (target / "rb_results.json").exists()


def test_threads_flag_does_not_change_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert _run(tmp_path, SMALL_RB, "--threads", "1", out=a) == 0
    assert _run(tmp_path, SMALL_RB, "--threads", "4", out=b) == 0
    assert (a / "rb_results.json").read_bytes() == (b / "rb_results.json").read_bytes()


def test_plotdata_round_trip_is_exact(tmp_path):
    assert _run(tmp_path, SMALL_DB) == 0
    doc = _results(tmp_path, "db")
    paths = emit_plotdata(tmp_path / "db_results.json", tmp_path)
    assert [p.name for p in paths] == [f"db_{c['name']}.csv" for c in doc["curves"]]
    for path, curve in zip(paths, doc["curves"]):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x", "y_mean", "y_sem", "model_prediction"]
        for k, col in enumerate(("x", "y_mean", "y_sem", "model_prediction")):
            parsed = [float(r[k]) for r in rows[1:]]
            expected = [float(v) for v in curve[col]]
            assert all(p == e or (math.isnan(p) and math.isnan(e)) for p, e in zip(parsed, expected))


def test_plotdata_of_empty_curve_list_is_header_only(tmp_path):
    results = tmp_path / "none_results.json"
    results.write_text(json.dumps({"curves": []}))
    assert main(["plotdata", str(results)]) == 0
    assert (tmp_path / "none_curves.csv").read_text() == "x,y_mean,y_sem,model_prediction\n"


def test_plotdata_rejects_malformed_results(tmp_path):
    bad = tmp_path / "bad_results.json"
    bad.write_text(json.dumps({"curves": [{"name": "a", "x": [1]}]}))
    assert main(["plotdata", str(bad)]) == 1
    bad.write_text("not json")
    assert main(["plotdata", str(bad)]) == 1


def test_fit_subcommand_reads_plotdata_csv(tmp_path):
    assert _run(tmp_path, dict(SMALL_RB, shots=0)) == 0
    (path,) = emit_plotdata(tmp_path / "rb_results.json", tmp_path)
    cfg = {"protocol": "fit", "seed": 0, "fit": {"model": "rb_exp", "data": str(path), "weights": "none"}}
    assert _run(tmp_path, cfg) == 0
    fitted = _results(tmp_path, "fit")["results"]["params"]
    assert fitted["p"] == pytest.approx(0.99, abs=1e-6)


def test_leakage_config_runs(tmp_path):
    cfg = json.loads((CONFIGS / "leakage.json").read_text())
    cfg["simulate"]["n_max"] = 20
    assert _run(tmp_path, cfg) == 0
    results = _results(tmp_path, "simulate")["results"]
    assert len(results["leaked_population"]) == 20
    assert max(results["leaked_population"]) > 0


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_validate(name):
    validate_config(json.loads((CONFIGS / name).read_text()))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qbench.cli", "run", str(_write(tmp_path, SMALL_RB)),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "rb_results.json").exists()
