from __future__ import annotations

import csv
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from kamgrid import ConfigurationError
from kamgrid.cli import main
from kamgrid.config import load_config, parse_config

BASE = """\
[problem]
dimension = 1
N = {N}

[lagrangian]
exponents = [2.0]
weights = [1.0]

[[lagrangian.potential.modes]]
k = [1]
amplitude = 1.0
phase = 0.7

[solver]
lam = 0.5
tolerance = 1e-10
"""


@pytest.fixture(scope="module")
def schema():
    text = resources.files("kamgrid").joinpath("schema/output.schema.json").read_text()
    return json.loads(text)


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def run_cli(tmp_path, command, text, *extra):
    cfg = write(tmp_path, text)
    out = tmp_path / f"{command}.json"
    code = main([command, "--config", str(cfg), "--out", str(out), "--quiet", *extra])
    payload = json.loads(out.read_text()) if out.exists() else None
    return code, payload, out


# ---------------------------------------------------------------- parsing


def test_parse_defaults():
    cfg = parse_config(BASE.format(N=8))
    assert cfg.d == 1 and cfg.N == [8] and cfg.lam == 0.5
    assert cfg.schedule.min_lam == 1e-14
    assert cfg.seed == 0


@pytest.mark.parametrize(
    "bad,field,line",
    [
        ("N = 1", "problem.N", 3),
        ("N = 8\nanchor = -1", "problem.anchor", 4),
    ],
)
def test_errors_carry_line_and_field(bad, field, line):
    text = BASE.format(N=8).replace("N = 8", bad)
    with pytest.raises(ConfigurationError) as err:
        parse_config(text)
    assert err.value.field == field
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


@pytest.mark.parametrize(
    "old,new,field",
    [
        ("exponents = [2.0]", "exponents = [1.0]", "lagrangian.exponents"),
        ("weights = [1.0]", "weights = [-1.0]", "lagrangian.weights"),
        ("tolerance = 1e-10", "tolerance = 0", "solver.tolerance"),
        ("lam = 0.5", "lam = -0.5", "solver.lam"),
        ("tolerance = 1e-10", 'tolerance = 1e-10\nmethod = "newton"', "solver.method"),
    ],
)
def test_field_validation(old, new, field):
    with pytest.raises(ConfigurationError) as err:
        parse_config(BASE.format(N=8).replace(old, new))
    assert err.value.field == field
    assert err.value.line is not None


def test_unknown_section_and_malformed_toml():
    with pytest.raises(ConfigurationError) as err:
        parse_config(BASE.format(N=8) + "\n[bogus]\nx = 1\n")
    assert err.value.line == 18
    with pytest.raises(ConfigurationError) as err:
        parse_config("[problem\nN = 3")
    assert err.value.line == 1


def test_schedule_and_simulate_validation():
    with pytest.raises(ConfigurationError):
        parse_config(BASE.format(N=8) + "\n[schedule]\nratio = 1.5\n")
    with pytest.raises(ConfigurationError):
        parse_config(BASE.format(N=8) + '\n[simulate]\nkind = "teleport"\n')
    with pytest.raises(ConfigurationError):
        parse_config(BASE.format(N=8) + "\n[simulate]\ntimes = [-1.0]\n")


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "nope.toml")


# ---------------------------------------------------------------- commands


@pytest.mark.parametrize(
    "command,extra",
    [
        ("solve-discounted", ""),
        ("weak-kam", "\n[output]\nextension_samples = 32\n"),
        ("mather", "\n[mather]\nvelocity_step = 0.5\n"),
        ("simulate", "\n[simulate]\nsamples = 200\ntimes = [0.5, 1.0]\n"),
        ("simulate", '\n[simulate]\nkind = "cost"\nsamples = 200\n'),
        ("simulate", '\n[simulate]\nkind = "path"\nhorizon = 2.0\n'),
        ("converge", "\n[converge]\nvalues = [4, 8, 16]\n"),
        ("converge", '\n[converge]\nsweep = "discounted_N"\nvalues = [4, 8, 16]\n'),
        ("converge", '\n[converge]\nsweep = "lambda"\nvalues = [1.0, 0.1, 0.01]\n'),
        ("reference", ""),
    ],
)
def test_commands_write_valid_output(tmp_path, schema, command, extra):
    code, payload, out = run_cli(tmp_path, command, BASE.format(N=8) + extra)
    assert code == 0
    jsonschema.validate(payload, schema)
    assert payload["status"] == "ok"
    meta = payload["metadata"]
    assert meta["command"] == command
    assert meta["config"]["problem"]["N"] == 8
    # round trip: the output is plain JSON that re-validates after reloading
    again = json.loads(json.dumps(payload))
    jsonschema.validate(again, schema)


def test_converge_csv_header(tmp_path):
    code, payload, out = run_cli(tmp_path, "converge", BASE.format(N=8) + "\n[converge]\nvalues = [4, 8, 16]\n")
    assert code == 0
    with open(payload["result"]["csv"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sweep_var", "error", "bound", "slope_partial"]
    assert [r[0] for r in rows[1:]] == ["4", "8", "16"]


def test_simulate_csv_header(tmp_path):
    code, payload, _ = run_cli(tmp_path, "simulate", BASE.format(N=8) + "\n[simulate]\nsamples = 50\n")
    with open(payload["result"]["csv"]) as fh:
        assert next(csv.reader(fh)) == ["t", "mean", "stderr", "bound", "pass"]


def test_converge_refuses_two_points(tmp_path):
    code, payload, _ = run_cli(tmp_path, "converge", BASE.format(N=8) + "\n[converge]\nvalues = [4, 8]\n")
    assert code == 2


def test_seed_override(tmp_path):
    text = BASE.format(N=8) + "\n[simulate]\nsamples = 100\n"
    _, a, _ = run_cli(tmp_path, "simulate", text, "--seed", "7")
    _, b, _ = run_cli(tmp_path, "simulate", text, "--seed", "7")
    _, c, _ = run_cli(tmp_path, "simulate", text, "--seed", "8")
    assert a["metadata"]["seed"] == 7
    assert a["result"]["mean"] == b["result"]["mean"]
    assert a["result"]["mean"] != c["result"]["mean"]


def test_validation_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, BASE.format(N=1))
    code = main(["weak-kam", "--config", str(cfg), "--out", str(tmp_path / "o.json")])
    assert code == 2
    assert "line 3, field 'problem.N'" in capsys.readouterr().err
    assert main(["no-such-command", "--config", str(cfg), "--out", "x"]) == 2
    # solve-discounted without a discount
    cfg = write(tmp_path, BASE.format(N=8).replace("lam = 0.5\n", ""))
    assert main(["solve-discounted", "--config", str(cfg), "--out", str(tmp_path / "o.json"), "--quiet"]) == 2


def test_convergence_failure_exit_code(tmp_path, schema):
    text = BASE.format(N=16) + "max_policy_iter = 1\n"
    code, payload, _ = run_cli(tmp_path, "solve-discounted", text)
    assert code == 3
    assert payload["status"] == "convergence_failure"
    assert payload["best"] is not None
    jsonschema.validate(payload, schema)


def test_console_script_entry_point(tmp_path):
    cfg = write(tmp_path, BASE.format(N=4))
    out = tmp_path / "r.json"
    proc = subprocess.run(
        [sys.executable, "-m", "kamgrid.cli", "reference", "--config", str(cfg), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["result"]["hbar"] == pytest.approx(1.0, abs=1e-9)
