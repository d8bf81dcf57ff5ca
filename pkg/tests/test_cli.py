import numpy as np
import pytest

from surfstefan import cli

SMALL = """
[mesh]
level = 2
[time]
T = 0.25
steps = 8
[regularization]
epsilon = 0.1
[data]
u0 = -0.5 + z
f = 0.2*x
[checks]
run = conservation, linfty, interface, time_translate
"""


def test_presets_parse():
    for name in cli.PRESETS:
        cfg = cli.load_preset(name)
        assert cfg.T > 0 and cfg.steps >= 1 and cfg.checks


def test_one_phase_preset_fields():
    cfg = cli.load_preset("one_phase_sphere")
    assert (cfg.level, cfg.steps, cfg.T, cfg.epsilon) == (4, 64, 0.5, 0.05)
    assert cfg.data.u0 == "2 + z" and cfg.exact == "2 + exp(-2*t)*z"


@pytest.mark.parametrize("text, where", [
    ("[time]\nT = -1\n[data]\ne0 = 0", "[time]"),
    ("[time]\nsteps = many\n[data]\ne0 = 0", "[time] steps"),
    ("[data]\ne0 = 1\nu0 = 2", "[data]"),
    ("[data]\ne0 = import os", "[data] e0"),
    ("[checks]\nrun = everything\n[data]\ne0 = 0", "[checks]"),
    ("[regularization]\nepsilon = 0\n[data]\ne0 = 0", "[regularization]"),
    ("[velocity]\npreset = swirl\n[data]\ne0 = 0", "[velocity]"),
    ("[solver]\ninner_scheme = picard\n[data]\ne0 = 0", "[solver]"),
    ("not an ini file", ""),
])
def test_config_errors_name_the_field(text, where):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(text)
    assert where in str(info.value)


def test_run_writes_artifacts_and_is_deterministic(tmp_path):
    cfg = cli.parse_config(SMALL, "small")
    r1 = cli.run(cfg, tmp_path / "a")
    r2 = cli.run(cfg, tmp_path / "b")
    assert not r1.failed
    for name in ("ledger.csv", "reports.csv", "u.stfield", "e.stfield", "interface.csv",
                 "manifest.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = (tmp_path / "a" / "manifest.txt").read_text()
    assert "config_sha256" in manifest and "u0 + 1 for u0 > 0" in manifest
    assert np.array_equal(r1.solution.u.values, r2.solution.u.values)


def test_exit_status_follows_asserted_reports(tmp_path):
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text(SMALL)
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 0
    failing = SMALL.replace("[checks]", "[exact]\nu = 5\ntolerance = 1e-6\n[checks]") \
                   .replace("time_translate", "manufactured")
    cfg_path.write_text(failing)
    assert cli.main(["run", "--config", str(cfg_path)]) == 1
    assert cli.main(["run", "--config", str(tmp_path / "missing.ini")]) == 2


def test_pair_scenarios_report_companion_checks():
    cfg = cli.load_preset("shifted_pair")
    res = cli.run(cli.replace(cfg, level=2, steps=8))
    names = [r.name for r in res.reports]
    assert "l1_contraction_shifted" in names and "conservation_pair" in names
    assert not res.failed


def test_sweep_tau_rate(tmp_path):
    cfg = cli.replace(cli.load_preset("one_phase_sphere"), level=2)
    rows = cli.sweep(cfg, "tau", [4, 8, 16], out=tmp_path)
    assert (tmp_path / "sweep_tau.csv").read_text().startswith("value,error_or_distance,rate")
    assert rows[-1][2] > 0.8
    with pytest.raises(ValueError):
        cli.sweep(cfg, "tau", [4, 8])


def test_eps_sweep_without_exact_solution():
    cfg = cli.parse_config(SMALL)
    rows = cli.sweep(cfg, "eps", [0.2, 0.1, 0.05])
    assert len(rows) == 2 and rows[0][1] > rows[1][1]
    with pytest.raises(cli.ConfigError):
        cli.sweep(cfg, "h", [1, 2, 3])


def test_rough_study_with_bounded_data_is_trivial():
    cfg = cli.replace(cli.parse_config(SMALL), clamp_levels=[2, 4, 8])
    res = cli.rough_data_study(cfg)
    assert res.distances == [0.0, 0.0] and res.report.passed


def test_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in cli.PRESETS)
