import json

import numpy as np
import pytest

from shellspec.cli import main
from shellspec.config import ConfigError, load_config, parse_complex


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def manifest(tmp_path):
    return json.loads((tmp_path / "manifest.json").read_text())


def test_defaults_and_overrides(tmp_path):
    cfg = load_config()
    assert cfg.seed == 42 and cfg.mass == 1.0
    assert cfg.geometry.kind == "sphere"
    path = tmp_path / "c.toml"
    path.write_text('mass = 2.0\n[geometry]\nkind = "torus"\nresolution = 2\n[coupling]\nfamily = "kappa"\nstrengths = [1.0, 0.5, 0.0]\n')
    cfg = load_config(path, {"spectral.n_samples": "12", "geometry.params.r": "0.4"})
    assert cfg.mass == 2.0
    assert cfg.section("spectral")["n_samples"] == 12
    assert cfg.geometry.params == {"R": 2.0, "r": 0.4}
    assert cfg.coupling.family == "combined"
    assert cfg.digest() != load_config().digest()


def test_cauchy_coupling_inherits_mass():
    cfg = load_config(None, {"coupling.family": '"cauchy"', "coupling.strengths": "[0.3, 4.0]", "mass": "1.5"})
    assert cfg.coupling.mass == 1.5


@pytest.mark.parametrize("over", [{"mass": "-1"}, {"spectral.margin": "1.5"},
                                  {"tolerances.jump": "0"}, {"geometry.kind": '"blob"'}])
def test_invalid_config(over):
    with pytest.raises(ConfigError):
        load_config(None, over)


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("mass = = 1")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config(bad)


def test_parse_complex():
    assert parse_complex("0.3+0.2j") == 0.3 + 0.2j
    assert parse_complex([1, -2]) == 1 - 2j
    assert parse_complex(2) == 2
    with pytest.raises(ConfigError):
        parse_complex("abc")


def test_cli_usage_errors(tmp_path):
    assert run(tmp_path, "identities", "--mass", "0") == 1
    assert run(tmp_path, "identities", "--set", "noequals") == 1
    assert main(["bogus"]) == 1


def test_cli_critical_refused(tmp_path):
    code = run(tmp_path, "spectrum", "--set", 'coupling.family="anomalous_magnetic"',
               "--set", "coupling.strengths=[2.0]")
    assert code == 3
    m = manifest(tmp_path)
    assert m["exit_code"] == 3 and "critical" in m["message"]


def test_cli_resolvent(tmp_path):
    assert run(tmp_path, "resolvent", "--threads", "1") == 0
    rep = json.loads((tmp_path / "resolvent.json").read_text())
    assert rep["boundary_condition_defect"] <= 1e-8
    assert len(rep["values"]) == 2
    m = manifest(tmp_path)
    assert len(m["config_sha256"]) == 64 and "numpy" in m["versions"] and m["timings"]["total"] > 0


def test_cli_resolvent_singular_refused(tmp_path):
    code = run(tmp_path, "resolvent", "--set", 'coupling.family="sandwiched_cauchy"',
               "--set", "coupling.strengths=[0.0, 4.0]", "--set", 'resolvent.z="0"')
    assert code == 3


def test_cli_diagnostics(tmp_path):
    code = run(tmp_path, "diagnostics", "--set", 'diagnostics.operators=["K"]',
               "--set", "diagnostics.factors=[1]", "--set", "coupling.strengths=[0.5]")
    assert code == 0
    rep = json.loads((tmp_path / "diagnostics.json").read_text())
    key = next(iter(rep["profiles"]))
    assert rep["profiles"][key]["sigma"][0] == pytest.approx(0.5, abs=1e-2)
    assert rep["eta_inverse"]["scalar_defect"] <= 5e-2
    assert (tmp_path / "diagnostics.md").exists()


def test_cli_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["resolvent", "--out", str(d), "--threads", "1"]) == 0
    ra = json.loads((a / "resolvent.json").read_text())
    rb = json.loads((b / "resolvent.json").read_text())
    assert ra["values"] == rb["values"]


@pytest.mark.slow
def test_cli_identities(tmp_path):
    assert run(tmp_path, "identities") == 0
    rep = json.loads((tmp_path / "identities.json").read_text())
    assert [lvl["N"] for lvl in rep["levels"]] == [216, 864]
    assert rep["failures"] == [] and not rep["lower_order_fallback"]
    assert rep["levels"][0]["jump"]["interior"] <= 1e-2


@pytest.mark.slow
def test_cli_spectrum_magnetic(tmp_path):
    code = run(tmp_path, "spectrum", "--set", 'coupling.family="magnetic"', "--set", "coupling.strengths=[1.0]",
               "--set", "spectral.n_samples=24")
    assert code == 0
    rep = json.loads((tmp_path / "scan.json").read_text())
    assert rep["roots"] == []
    assert rep["correspondence"]["mapped_roots"] == []
    assert (tmp_path / "scan.csv").read_text().startswith("a,")
    assert np.all(np.abs(rep["a_samples"]) < 1)
