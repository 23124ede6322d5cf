import json
import math
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from pssmp.harness import ConfigError, emit_config, load_config, parse_config, run
from pssmp.harness.cli import main
from pssmp.harness.config import PARAM_DEFAULTS, RUN_DEFAULTS, TRIPLET_DEFAULTS
from pssmp import levy

MINIMAL = "[run]\nseed = 7\n"


# -- configuration --------------------------------------------------------------------

def test_minimal_config_applies_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.seed == 7 and cfg.experiment == "simulate"
    assert cfg.step == RUN_DEFAULTS["step"] and cfg.n_paths == RUN_DEFAULTS["n_paths"]
    assert cfg.triplet == TRIPLET_DEFAULTS and cfg.params == PARAM_DEFAULTS
    assert cfg.levy_triplet() == levy.bessel_squared_triplet(6.0)


def test_scientific_notation_and_lists():
    cfg = parse_config("[run]\nseed = 1\nstep = 2.5e-4\n[params]\nqs = 1, 2.5,4\n")
    assert cfg.step == 2.5e-4 and cfg.params["qs"] == [1.0, 2.5, 4.0]


@pytest.mark.parametrize("text,fragment", [
    ("[run]\nseed = 1\nseed = 2\n", "line 3"),
    ("[run]\nseed = 1\nbogus = 2\n", "line 3: unknown key 'bogus'"),
    ("[run]\nstep = 0.1\n", "missing mandatory key 'seed'"),
    ("[run]\nseed = 1\n\nstep = abc\n", "line 4: cannot parse step"),
    ("[run]\nseed = 1\nstep = -1\n", "line 3: step must be > 0"),
    ("[run]\nseed = 1\nexperiment = fly\n", "unknown experiment"),
    ("[run]\nseed = 18446744073709551616\n", "64 bits"),
    ("[run]\nseed = 1\n[extras]\nx = 1\n", "unknown section"),
    ("[run]\nseed = 1\n[triplet]\njumps = wormhole\n", "unknown jump kind"),
    ("[run]\nseed = 1\n[triplet]\ngaussian_var = -1\n", "invalid [triplet]"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert fragment in str(exc.value)


def test_largest_seed_accepted():
    assert parse_config(f"[run]\nseed = {2**64 - 1}\n").seed == 2 ** 64 - 1


def test_triplet_kinds():
    base = "[run]\nseed = 1\n[triplet]\ndrift = 0\ngaussian_var = 0\n"
    cp = parse_config(base + "jumps = compound-poisson\nrate = 2\nlaw = neg-exponential\n"
                             "law_rate = 3\n").levy_triplet()
    assert cp.jumps == levy.CompoundPoisson(2.0, levy.NegExponential(3.0))
    ts = parse_config(base + "jumps = tempered-stable\nbeta = 0.5\n").levy_triplet()
    assert ts.jumps == levy.TemperedStable(0.5, 1.0, 1.0)
    nts = parse_config(base + "jumps = negated-tempered-stable\n").levy_triplet()
    assert isinstance(nts.jumps, levy.NegatedTemperedStable)
    two = parse_config(base + "jumps = compound-poisson\nlaw = two-sided-exponential\n"
                              "p_up = 0.25\n").levy_triplet()
    assert two.jumps.law == levy.TwoSidedExponential(1.0, 1.0, 0.25)


def test_round_trip_fixture_file(tmp_path):
    text = ("[run]\nexperiment = decomposition\nseed = 99\nstep = 0.002\n"
            "[triplet]\ndrift = -1\ngaussian_var = 0\njumps = compound-poisson\nrate = 4\n"
            "law = exponential\nlaw_rate = 2\n[params]\nlevels = 0.5, 0.25\nz_fraction = 0.5\n")
    cfg = parse_config(text)
    emitted = emit_config(cfg)
    again = parse_config(emitted)
    assert again == cfg and emit_config(again) == emitted
    f = tmp_path / "c.ini"
    f.write_text(emitted)
    assert load_config(f) == cfg


@settings(max_examples=50)
@given(st.integers(0, 2 ** 64 - 1), st.floats(1e-6, 1.0), st.integers(1, 10 ** 6),
       st.floats(-10, 10), st.lists(st.floats(1e-3, 1e3), max_size=5),
       st.sampled_from(["simulate", "tail", "lil"]))
def test_round_trip_property(seed, step, n, drift, qs, exp):
    text = (f"[run]\nseed = {seed}\nstep = {step!r}\nn_paths = {n}\nexperiment = {exp}\n"
            f"[triplet]\ndrift = {drift!r}\n[params]\nqs = {', '.join(map(repr, qs))}\n")
    cfg = parse_config(text)
    assert parse_config(emit_config(cfg)) == cfg
    assert cfg.fingerprint() == parse_config(emit_config(cfg)).fingerprint()


# -- runs ------------------------------------------------------------------------------

def _cfg(text):
    return parse_config(text)


def test_simulate_zero_triplet_gives_flat_path(tmp_path):
    cfg = _cfg("[run]\nseed = 1\nhorizon = 1\nstep = 0.1\n"
               "[triplet]\ndrift = 0\ngaussian_var = 0\n")
    rep = run(cfg, tmp_path)
    assert rep.passed
    rows = (tmp_path / "levy_path.csv").read_text().splitlines()[1:]
    assert {r.split(",")[1] for r in rows} == {"0.0"}
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["passed"] and doc["config_fingerprint"] == cfg.fingerprint()
    for c in doc["checks"]:
        assert c["n"] > 0 and c["seed_stream"] and c["source"]


def test_same_config_gives_identical_artifacts(tmp_path):
    text = ("[run]\nexperiment = tail\nseed = 5\nn_paths = 200\nstep = 0.01\n"
            "[params]\nqs = 1, 2\n")
    a, b = tmp_path / "a", tmp_path / "b"
    run(_cfg(text), a)
    run(_cfg(text), b)
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert "samples.csv" in csvs and "tail_q2.csv" in csvs
    for name in csvs + ["config.ini"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_tail_run_has_oracle_and_sandwich_checks(tmp_path):
    rep = run(_cfg("[run]\nexperiment = tail\nseed = 3\nn_paths = 500\n"), tmp_path)
    names = [c.name for c in rep.checks]
    assert "I vs Dufresne oracle (KS)" in names
    assert sum(n.startswith("F_q sandwich") for n in names) == 3
    assert rep.passed


def test_integral_test_run(tmp_path):
    base = "[run]\nexperiment = integral-test\nseed = 1\n[params]\ngamma = 2\nb = -0.4\n"
    assert run(_cfg(base + "expect = diverges\n"), tmp_path / "a").passed
    assert not run(_cfg(base + "expect = converges\n"), tmp_path / "b").passed
    v = json.loads((tmp_path / "a" / "verdict.json").read_text())
    assert v["outcome"] == "diverges"


def test_experiment_errors_are_wrapped(tmp_path):
    cfg = _cfg("[run]\nexperiment = lil\nseed = 1\n[triplet]\njumps = tempered-stable\n")
    with pytest.raises(RuntimeError, match="lil"):
        run(cfg, tmp_path)


def test_report_aggregates_sub_runs(tmp_path):
    run(_cfg("[run]\nseed = 1\nhorizon = 1\nstep = 0.1\n"), tmp_path / "sim")
    run(_cfg("[run]\nexperiment = integral-test\nseed = 1\n"), tmp_path / "it")
    rep = run(_cfg("[run]\nexperiment = report\nseed = 1\n"), tmp_path)
    assert len(rep.checks) == 2 and rep.passed


def test_report_on_empty_directory_fails(tmp_path):
    assert not run(_cfg("[run]\nexperiment = report\nseed = 1\n"), tmp_path).passed


# -- command line --------------------------------------------------------------------------

def _write(tmp_path, text):
    f = tmp_path / "cfg.ini"
    f.write_text(text)
    return str(f)


def test_cli_success_and_output_dir(tmp_path, capsys):
    cfg = _write(tmp_path, "[run]\nseed = 1\nhorizon = 1\nstep = 0.1\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "report.json").exists()
    assert "ALL PASS" in capsys.readouterr().out


def test_cli_failure_exit_code(tmp_path):
    cfg = _write(tmp_path, "[run]\nseed = 1\n[params]\nb = -0.4\nexpect = converges\n")
    assert main(["integral-test", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "[run]\nstep = 1\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2


def test_cli_seed_override(tmp_path):
    cfg = _write(tmp_path, "[run]\nseed = 1\nhorizon = 1\nstep = 0.1\n[triplet]\n")
    assert main(["simulate", "--config", cfg, "--seed", "42", "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["seed"] == 42
    assert main(["simulate", "--config", cfg, "--seed", str(2 ** 64)]) == 2


def test_cli_experiment_argument_wins(tmp_path):
    cfg = _write(tmp_path, "[run]\nexperiment = lil\nseed = 1\n")
    assert main(["integral-test", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


def test_env_var_sets_output_dir_only(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "[run]\nseed = 1\nhorizon = 1\nstep = 0.1\n")
    monkeypatch.setenv("PSSMP_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--config", cfg]) == 0
    assert (tmp_path / "env" / "report.json").exists()
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "report.json").exists()


def test_cli_unknown_experiment(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    with pytest.raises(SystemExit):
        main(["teleport", "--config", cfg])


def test_console_script_module(tmp_path):
    cfg = _write(tmp_path, "[run]\nseed = 1\nhorizon = 1\nstep = 0.1\n")
    r = subprocess.run([sys.executable, "-m", "pssmp.harness.cli", "simulate", "--config", cfg,
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0 and "PASS" in r.stdout
