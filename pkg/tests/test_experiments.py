import json

import pytest

from convexsc import cli
from convexsc.experiments import (
    REGISTRY,
    ConfigError,
    ScenarioConfig,
    list_scenarios,
    run_scenario,
)

FAST = ["example1", "hemisphere-asa", "duality-identity", "lower-sc", "mass-identity", "weakstar", "weighted-asa"]


def test_registry_listing_is_stable():
    names = [e["name"] for e in list_scenarios()]
    assert names == sorted(REGISTRY)
    assert len(names) == 8
    assert all(e["anchor"] for e in list_scenarios())


@pytest.mark.parametrize("name", FAST)
def test_scenarios_match_expectations(name, tmp_path):
    rep = run_scenario(ScenarioConfig(name), out_dir=tmp_path)
    assert rep.as_expected, rep.verdicts
    assert (tmp_path / name / "report.json").exists()
    assert (tmp_path / name / "timing.json").exists()


def test_report_is_byte_identical(tmp_path):
    run_scenario(ScenarioConfig("weakstar"), out_dir=tmp_path / "a")
    run_scenario(ScenarioConfig("weakstar"), out_dir=tmp_path / "b")
    a = (tmp_path / "a" / "weakstar" / "report.json").read_bytes()
    b = (tmp_path / "b" / "weakstar" / "report.json").read_bytes()
    assert a == b
    body = json.loads(a)
    assert set(body) == {"as_expected", "config", "identity_gaps", "trajectories", "verdicts", "version"}


def test_example1_csv(tmp_path):
    run_scenario(ScenarioConfig("example1"), out_dir=tmp_path)
    lines = (tmp_path / "example1" / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "k,Z_k,lipschitz_k,support_radius_k"
    assert len(lines) == 10


@pytest.mark.parametrize("bad", [
    {"scenario": "nope"},
    {"scenario": "weakstar", "n": 2},
    {"scenario": "example1", "schedule": [4, 2]},
    {"scenario": "example1", "extra": 1},
    {"scenario": "example1", "zeta": {"kind": "power", "q": 2.0}},
    {"n": 1},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(bad)


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CONVEXSC_OUT", str(tmp_path))
    run_scenario(ScenarioConfig("hemisphere-asa"))
    assert (tmp_path / "hemisphere-asa" / "report.json").exists()


def test_cli_run_and_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "--scenario", "hemisphere-asa", "--out", str(tmp_path)]) == 0
    assert "value" in capsys.readouterr().out
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "mass-identity", "samples": 5, "n": 2}))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path), "--seed", "3"]) == 0
    assert cli.main(["run", "--scenario", "nope"]) == 2
    assert cli.main(["bogus"]) == 2
    assert cli.main(["run", "--scenario", "weakstar", "--out", "/proc/forbidden"]) == 2


def test_cli_deviation_exit_code(tmp_path):
    # log(1 + t) also blows up along the family, so expectations still hold
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "example1", "zeta": {"kind": "log1p"}}))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    # the hemisphere reference value only holds for the matching exponent
    cfg.write_text(json.dumps({"scenario": "hemisphere-asa", "zeta": {"kind": "power", "q": 0.5}}))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_cli_list_and_validate(tmp_path, capsys):
    assert cli.main(["list", "--json"]) == 0
    listed = json.loads(capsys.readouterr().out)
    assert [e["name"] for e in listed] == sorted(REGISTRY)
    good = tmp_path / "g.json"
    good.write_text(json.dumps({"scenario": "example1", "n": 2}))
    assert cli.main(["validate-config", str(good)]) == 0
    bad = tmp_path / "b.json"
    bad.write_text("{not json")
    assert cli.main(["validate-config", str(bad)]) == 2
