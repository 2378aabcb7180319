import csv
import json

import pytest

from morse_ruelle.cli import ConfigError, Pipeline, RunConfig, main, run
from morse_ruelle.manifold import BadParams

SMALL = """
output_dir = "{out}"
tasks = ["analyze", "spectrum", "basins"]

[model]
kind = "torus"
params = {{ c1 = 1.0, c2 = 1.4142135623730951 }}

[grids]
basin_density = 8

[spectrum]
degrees = [0, 1]
cutoff = 2.5
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"model": {"kind": "torus"}, "colour": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"model": {"kind": "torus"}, "tolerances": {"rtoll": 1e-9}})


@pytest.mark.parametrize("bad", [{"tolerances": {"rtol": -1.0}}, {"tasks": ["dance"]}, {"jobs": 0},
                                 {"model": {"params": {}}}])
def test_invalid_values_rejected(bad):
    data = {"model": {"kind": "torus"}, **bad}
    with pytest.raises(ConfigError):
        RunConfig.from_mapping(data)


def test_zero_coefficient_fails_before_computation(tmp_path):
    cfg = RunConfig.from_mapping({"model": {"kind": "torus", "params": {"c1": 0.0}}, "output_dir": str(tmp_path / "o")})
    with pytest.raises(BadParams):
        Pipeline(cfg)
    assert not (tmp_path / "o").exists()
    assert main(["analyze", "--model", "torus", "--param", "c1=0", "--out", str(tmp_path / "o")]) == 1


def test_run_writes_outputs_and_is_reproducible(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        cfg = _write(tmp_path, SMALL.format(out=out), f"cfg{i}.toml")
        assert run(cfg) == 0
        outs.append(out)
    for name in ("critical.json", "spectrum_k0.json", "spectrum_k1.json", "basins.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    text = (outs[0] / "critical.json").read_text()
    data = json.loads(text)
    assert text == json.dumps(data, sort_keys=True, indent=2) + "\n"
    assert len(data["critical_points"]) == 4
    spec = json.loads((outs[0] / "spectrum_k0.json").read_text())
    assert [e["multiplicity"] for e in spec["entries"]] == [1, 2, 2, 2, 4]
    raw = (outs[0] / "basins.csv").read_bytes()
    assert raw.count(b"\r\n") == 65
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["x1", "x2", "alpha_id", "omega_id"]


def test_stage_failure_record(tmp_path):
    out = tmp_path / "fail"
    cfg = _write(tmp_path, f'output_dir = "{out}"\ntasks = ["correlate"]\n[model]\nkind = "torus"\n')
    assert run(cfg) == 1
    rec = json.loads((out / "failure.json").read_text())
    assert rec["stage"] == "correlate" and rec["error"] == "ConfigError"


def test_correlate_subcommand(tmp_path, capsys):
    cfg = _write(tmp_path, '[model]\nkind = "torus"\n[grids]\ncorrelation_nodes = [48, 48]\n')
    code = main(["correlate", "--config", str(cfg), "--out", str(tmp_path / "c"),
                 "--psi1", "cos(th1) + cos(th2) + 0.8*sin(th1) + 0.5*sin(th2)",
                 "--psi2", "1 + 0.3*sin(th1) + 0.2*cos(th2)", "--tmax", "20", "--samples", "201", "--rates", "2"])
    assert code == 0
    fit = json.loads((tmp_path / "c" / "fit.json").read_text())
    assert fit["fit"]["rates"][0] == pytest.approx(1.0, rel=0.02)
    assert fit["limit_consistent"] and fit["comparison"]["passed"]
    lines = (tmp_path / "c" / "correlation.csv").read_text().splitlines()
    assert lines[0] == "t,C" and len(lines) == 202


def test_model_check_subcommand(tmp_path, capsys):
    assert main(["model-check", "--random", "20", "--dump", "2", "1", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS] cartan formula" in out
    assert "D^(1)[delta]" in out
