"""Config validation rules and the command-line contract.

Every CLI test runs main() in-process with explicit argv, asserting the
documented exit codes (0 ok, 1 invalid config, 2 runtime verification
failure, 64 usage, 66 unreadable input), the single machine-parsable
stdout line, seed precedence, and byte-identical report replays.
"""

import json
import os
from dataclasses import replace
from pathlib import Path

import pytest

from levykinetics.cli import main
from levykinetics.config import RunConfig, load_config, validate_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

HARMONIC_SIM = """
[system]
n_particles = 1
dim = 1
gamma = 1.0

[system.potential]
kind = "harmonic"

[system.noise]
alpha = 1.5

[lyapunov]
case = "case1"
theta = 0.7

[simulation]
h = 1e-3
t_final = 0.1
n_trajectories = 4
snapshots = [0.05, 0.1]
seed = 13

[drift]
n_states = 40
estimate_samples = 300
"""


def write_config(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cli(tmp_path, args, capsys):
    report = tmp_path / "report.json"
    csv = tmp_path / "data.csv"
    rc = main(list(args) + ["--report", str(report), "--csv", str(csv)])
    out = capsys.readouterr()
    return rc, out, report, csv


# ------------------------------------------------------------ config layer


def test_shipped_configs_are_valid():
    paths = sorted(CONFIG_DIR.glob("*.toml"))
    assert len(paths) >= 4
    for p in paths:
        cfg = load_config(str(p))
        assert validate_config(cfg) == [], p.name


def test_load_config_reads_reference_fields():
    cfg = load_config(str(CONFIG_DIR / "lj_reference.toml"))
    assert cfg.n_particles == 2 and cfg.dim == 3
    assert cfg.potential_kind == "lennard_jones"
    assert cfg.alpha == (1.5, 1.5)
    assert cfg.case == "case1" and cfg.theta == 0.7
    assert cfg.seed == 20260816
    assert cfg.snapshots == (1.0, 2.0, 4.0, 8.0, 16.0)
    assert cfg.x0 is not None and cfg.control_x1 is not None


@pytest.mark.parametrize(
    "changes,field,snippet",
    [
        (dict(gamma=0.0), "system.gamma", "strictly positive friction"),
        (dict(n_particles=0), "system.n_particles", "at least one particle"),
        (dict(dim=0), "system.dim", "positive dimension"),
        (dict(potential_kind="bogus"), "system.potential.kind", "unknown potential kind"),
        (dict(potential_kind="coulomb", dim=2), "system.potential.kind", "dim >= 3"),
        (dict(potential_kind="log_coulomb", dim=3), "system.potential.kind", "planar"),
        (dict(c0=0.0), "system.potential.c0", "confinement strength"),
        (dict(alpha=(1.5, 1.5)), "system.noise.alpha", "stability indices"),
        (dict(alpha=(2.5,)), "system.noise.alpha[0]", "(0, 2]"),
        (dict(alpha=(0.0,)), "system.noise.alpha[0]", "(0, 2]"),
        (dict(case="case3"), "lyapunov.case", "case1"),
        (dict(theta=0.0), "lyapunov.theta", "must be positive"),
        (dict(alpha=(1.5,), theta=1.5), "lyapunov.theta", "min alpha"),
        (dict(case="case2", potential_kind="lennard_jones"), "lyapunov.case", "mean-field"),
        (dict(scheme="rk4"), "simulation.scheme", "unknown scheme"),
        (dict(h=0.0), "simulation.h", "positive step"),
        (dict(t_final=0.0), "simulation.t_final", "horizon"),
        (dict(n_trajectories=0), "simulation.n_trajectories", ">= 1"),
        (dict(snapshots=(2.0,), t_final=1.0), "simulation.snapshots", "outside"),
    ],
)
def test_validation_rule_fires(changes, field, snippet):
    cfg = replace(RunConfig(), **changes)
    violations = validate_config(cfg)
    assert any(v.field == field and snippet in str(v) for v in violations), [
        str(v) for v in violations
    ]


def test_violation_string_format():
    cfg = replace(RunConfig(), gamma=-1.0)
    v = validate_config(cfg)[0]
    assert str(v) == f"{v.field}: {v.rule} [{v.assumption}]"


def test_default_config_is_valid():
    assert validate_config(RunConfig()) == []


# -------------------------------------------------------------- exit codes


def test_usage_errors_exit_64(tmp_path, capsys):
    assert main([]) == 64
    out = capsys.readouterr().out
    assert out.startswith("command=none status=usage")

    assert main(["frobnicate", "x.toml"]) == 64
    capsys.readouterr()

    cfg = write_config(tmp_path, HARMONIC_SIM)
    assert main(["simulate", cfg, "--no-such-flag"]) == 64
    capsys.readouterr()

    assert main(["simulate", cfg, "--threads", "0"]) == 64
    out = capsys.readouterr().out
    assert "thread count" in out


def test_unreadable_config_exits_66(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "missing.toml")]) == 66
    out = capsys.readouterr().out
    assert out.startswith("command=simulate status=unreadable")

    broken = write_config(tmp_path, "[system\nngamma = ", name="broken.toml")
    assert main(["simulate", broken]) == 66
    capsys.readouterr()


def test_invalid_config_exits_1(tmp_path, capsys):
    bad = HARMONIC_SIM.replace("gamma = 1.0", "gamma = 0.0")
    cfg = write_config(tmp_path, bad)
    rc, out, _, _ = run_cli(tmp_path, ["simulate", cfg], capsys)
    assert rc == 1
    assert out.out.startswith("command=simulate status=invalid")
    assert "system.gamma" in out.err


def test_uncertified_drift_exits_2(tmp_path, capsys):
    # an absurdly small cap on the drift constant cannot dominate the
    # generator near the well bottom, so certification must fail honestly
    cfg = write_config(tmp_path, HARMONIC_SIM.replace("[drift]", "[drift]\nc_cap = 1e-12"))
    rc, out, report, _ = run_cli(tmp_path, ["verify-drift", cfg], capsys)
    assert rc == 2
    assert out.out.startswith("command=verify-drift status=failed")
    body = json.loads(report.read_text())
    assert body["certified"] is False
    assert body["violations"]


def test_verify_drift_certifies_harmonic(tmp_path, capsys):
    cfg = write_config(tmp_path, HARMONIC_SIM)
    rc, out, report, _ = run_cli(tmp_path, ["verify-drift", cfg], capsys)
    assert rc == 0
    first = out.out.splitlines()[0]
    assert first.startswith("command=verify-drift status=certified")
    body = json.loads(report.read_text())
    assert body["certified"] is True and body["lambda"] > 0.0
    assert body["violations"] == []
    assert body["n_states"] == 40


# ---------------------------------------------------------- stdout contract


def test_stdout_is_one_machine_line(tmp_path, capsys):
    cfg = write_config(tmp_path, HARMONIC_SIM)
    rc, out, report, _ = run_cli(tmp_path, ["estimate-constants", cfg], capsys)
    assert rc == 0
    line = out.out.strip()
    assert "\n" not in line
    assert line.startswith('command=estimate-constants status=ok case="case1" ')
    assert " kappa=" in line and " report=" in line


# ------------------------------------------------------------------- seeds


def test_seed_precedence(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("LEVYKINETICS_SEED", raising=False)
    cfg = write_config(tmp_path, HARMONIC_SIM)  # config seed = 13

    def seed_of(args):
        rc, _, report, _ = run_cli(tmp_path, args, capsys)
        assert rc == 0
        return json.loads(report.read_text())["seed"]

    assert seed_of(["estimate-constants", cfg, "--seed", "99"]) == 99
    assert seed_of(["estimate-constants", cfg]) == 13

    no_seed = write_config(tmp_path, HARMONIC_SIM.replace("seed = 13\n", ""), name="ns.toml")
    monkeypatch.setenv("LEVYKINETICS_SEED", "55")
    assert seed_of(["estimate-constants", no_seed]) == 55
    monkeypatch.delenv("LEVYKINETICS_SEED")
    assert seed_of(["estimate-constants", no_seed]) == 0


def test_thread_limit_env_handling(tmp_path, capsys, monkeypatch):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        monkeypatch.delenv(var, raising=False)
    monkeypatch.delenv("LEVYKINETICS_THREADS", raising=False)
    cfg = write_config(tmp_path, HARMONIC_SIM)

    rc, _, _, _ = run_cli(tmp_path, ["estimate-constants", cfg, "--threads", "2"], capsys)
    assert rc == 0
    assert os.environ["OMP_NUM_THREADS"] == "2"
    assert os.environ["NUMEXPR_NUM_THREADS"] == "2"

    monkeypatch.setenv("LEVYKINETICS_THREADS", "3")
    rc, _, _, _ = run_cli(tmp_path, ["estimate-constants", cfg], capsys)
    assert rc == 0
    assert os.environ["MKL_NUM_THREADS"] == "3"


# ------------------------------------------------------------ report files


def test_simulate_reports_replay_byte_identically(tmp_path, capsys):
    cfg = write_config(tmp_path, HARMONIC_SIM)
    rc1, out1, report, csv = run_cli(tmp_path, ["simulate", cfg], capsys)
    assert rc1 == 0
    assert out1.out.startswith("command=simulate status=ok")
    first_json, first_csv = report.read_bytes(), csv.read_bytes()

    rc2, _, _, _ = run_cli(tmp_path, ["simulate", cfg], capsys)
    assert rc2 == 0
    assert report.read_bytes() == first_json
    assert csv.read_bytes() == first_csv

    rc3, _, _, _ = run_cli(tmp_path, ["simulate", cfg, "--seed", "99"], capsys)
    assert rc3 == 0
    assert csv.read_bytes() != first_csv

    body = json.loads(first_json)
    assert body["schema_version"] >= 1
    assert body["command"] == "simulate"
    assert body["seed"] == 13
    assert body["stats"]["n_steps"] == 100
    header = first_csv.decode().splitlines()[0]
    assert header == "trajectory,time,x_0_0,v_0_0"
