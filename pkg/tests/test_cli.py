import json

import pytest

from rieszflow import ParameterError
from rieszflow.cli import main, parse_config

SMALL = {"grid": {"n": 256, "R_dom": 4.0}}


def write(tmp_path, doc, name="run.json"):
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(path)


def run_cli(tmp_path, command, doc, *extra):
    code = main([command, "--config", write(tmp_path, doc), "--out", str(tmp_path / "out"),
                 *extra])
    reports = sorted((tmp_path / "out").glob(f"{command}-*/report.json"))
    return code, [json.loads(p.read_text()) for p in reports]


def test_defaults_resolve():
    cfg = parse_config("{}")
    assert cfg.model.s == 0.4 and cfg.grid == {"n": 1024, "R_dom": 4.0}
    assert cfg.seed == 0
    assert cfg == parse_config('{"seed": 0}')


def test_all_violations_are_reported():
    text = json.dumps({"model": {"s": 0.6, "chii": 1}, "grid": {"n": 1},
                       "solver": {"tau": "big"}, "extra": 1})
    with pytest.raises(ParameterError) as info:
        parse_config(text, "bad.json")
    msgs = info.value.violations
    assert any("unknown key 'extra'" in m for m in msgs)
    assert any("model.chii" in m for m in msgs)
    assert any("s*p" in m for m in msgs)
    assert any("n must be >= 2" in m for m in msgs)
    assert any("solver.tau" in m for m in msgs)
    assert all(m.startswith("bad.json: ") for m in msgs)


def test_syntax_error_carries_position():
    with pytest.raises(ParameterError) as info:
        parse_config('{"model": {"N": 1,\n  "s": 0.4,,}}', "x.json")
    assert "line 2, column 12" in str(info.value)


def test_explicit_s_list_is_range_checked():
    with pytest.raises(ParameterError):
        parse_config(json.dumps({"model": {"p": 3, "s": 0.2}, "sweep": {"s_list": [0.4, 0.1]}}))
    # untouched defaults are only checked by the commands that use them
    parse_config(json.dumps({"model": {"p": 3, "s": 0.2}}))


def test_steady_command_report(tmp_path):
    code, (rep,) = run_cli(tmp_path, "steady", SMALL)
    assert code == 0 and rep["ok"]
    assert rep["config"]["grid"] == SMALL["grid"]
    assert rep["config"]["model"]["m"] == 3.0
    assert len(rep["operators"][0]["content_hash"]) == 64
    assert rep["result"]["status"] == "converged"


def test_bad_config_exit_code(tmp_path, capsys):
    code = main(["steady", "--config", write(tmp_path, {"model": {"m": -1}, "oops": 1}),
                 "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert err.count("error:") == 2


def test_missing_config_file(tmp_path):
    assert main(["steady", "--config", str(tmp_path / "nope.json")]) == 2


def test_unstable_fixed_step_is_numerical_failure(tmp_path):
    doc = dict(SMALL, evolve={"dt": 10.0, "init": "bump", "init_radius": 1.0, "t_end": 0.1})
    code, _ = run_cli(tmp_path, "evolve", doc)
    assert code == 3


def test_critical_mass_needs_critical_exponent(tmp_path):
    code, _ = run_cli(tmp_path, "mc", SMALL)
    assert code == 2


def test_blowup_exit_code(tmp_path):
    doc = {"model": {"m": 1.2, "M": 11.13}, "grid": {"n": 256, "R_dom": 4.0},
           "evolve": {"init": "indicator", "init_radius": 0.3, "t_end": 10.0}}
    code, (rep,) = run_cli(tmp_path, "evolve", doc)
    assert code == 4 and rep["result"]["status"] == "blowup_suspected"


def test_evolve_from_perturbed_state_is_deterministic(tmp_path):
    doc = dict(SMALL, evolve={"t_end": 50.0}, seed=7)
    first = run_cli(tmp_path / "a", "evolve", doc)
    second = run_cli(tmp_path / "b", "evolve", doc)
    assert first[0] == 0
    assert first[1] == second[1]
    a = next((tmp_path / "a" / "out").glob("evolve-*"))
    b = next((tmp_path / "b" / "out").glob("evolve-*"))
    assert a.name == b.name
    for name in ("report.json", "trajectory.csv", "final.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_flag_changes_run_directory(tmp_path):
    doc = dict(SMALL, evolve={"t_end": 0.01})
    main(["evolve", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o"), "--seed", "1"])
    main(["evolve", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o"), "--seed", "2"])
    dirs = list((tmp_path / "o").glob("evolve-*"))
    assert len(dirs) == 2
    seeds = sorted(json.loads((d / "report.json").read_text())["config"]["seed"] for d in dirs)
    assert seeds == [1, 2]


def test_energy_command(tmp_path):
    code, (rep,) = run_cli(tmp_path, "energy", {"model": {"s": 0.2, "p": 3, "m": 2.5}, **SMALL})
    assert code == 0
    assert rep["contracts"] == {"scaling_law_1e-6": True, "kappa_identity_1e-8": True}


def test_hls_command_csv(tmp_path):
    doc = {"model": {"m": 1.2}, "grid": {"n": 512, "R_dom": 10.0}, "hls": {"samples": 5}}
    run_cli(tmp_path, "hls", doc)
    out = next((tmp_path / "out").glob("hls-*"))
    assert (out / "extremal.csv").read_text().startswith("r,value")


def test_cache_environment_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("RIESZFLOW_CACHE", str(tmp_path / "cache"))
    run_cli(tmp_path, "steady", {"grid": {"n": 64, "R_dom": 4.0}})
    assert list((tmp_path / "cache").glob("*.npz"))


@pytest.mark.parametrize("command,doc,table", [
    ("sweep-s", {"model": {"chi": 2.0, "M": 2.0}, "grid": {"n": 512, "R_dom": 2.0},
                 "sweep": {"s_list": [0.4, 0.1]}}, "sweep.csv"),
    ("fair-limit", {"model": {"m": 2.0, "chi": 4.0}, "grid": {"n": 512, "R_dom": 4.0},
                    "sweep": {"s_list": [0.4, 0.2]}}, "sweep.csv"),
    ("gamma", {"model": {"chi": 2.0, "M": 2.0}, "grid": {"n": 512, "R_dom": 4.0},
               "gamma": {"s_list": [0.2, 0.05]}}, "gamma.csv"),
])
def test_sweep_commands_write_tables(tmp_path, command, doc, table):
    code, (rep,) = run_cli(tmp_path, command, doc)
    out = next((tmp_path / "out").glob(f"{command}-*"))
    assert (out / table).exists()
    failed = [k for k, v in rep["contracts"].items() if not v]
    assert code == (0 if not failed else 3)
