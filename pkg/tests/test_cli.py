import csv

import pytest

from attbench.cli import main
from attbench.scenario import bundled_scenarios


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_scenarios_subcommand_lists_bundled(capsys):
    assert main(["scenarios"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == list(bundled_scenarios())


def test_simulate_writes_csv(tmp_path, capsys):
    target = tmp_path / "sim.csv"
    code = main(["simulate", "euler_crosscheck", "-o", str(target)])
    assert code == 0
    assert "simulate: euler_crosscheck" in capsys.readouterr().out
    rows = read_rows(target)
    assert len(rows) == 300 + 1  # header plus one row per step
    assert rows[0][0] == "t"


def test_quiet_suppresses_chatter(tmp_path, capsys):
    target = tmp_path / "sim.csv"
    assert main(["simulate", "euler_crosscheck", "-o", str(target), "--quiet"]) == 0
    assert capsys.readouterr().out == ""


def test_estimate_on_euler_scenario_is_a_config_error(tmp_path, capsys):
    code = main(["estimate", "euler_crosscheck", "-o", str(tmp_path / "x.csv")])
    assert code == 1
    assert "configuration error" in capsys.readouterr().err


def test_unknown_scenario_is_a_config_error(tmp_path, capsys):
    code = main(["estimate", "warp_drive", "-o", str(tmp_path / "x.csv")])
    assert code == 1
    assert "configuration error" in capsys.readouterr().err


def test_missing_output_flag_exits_one(capsys):
    with pytest.raises(SystemExit) as err:
        main(["estimate", "zero_noise"])
    assert err.value.code == 1
    capsys.readouterr()


def test_unwritable_output_is_a_runtime_error(tmp_path, capsys):
    target = tmp_path / "no_such_dir" / "out.csv"
    code = main(["estimate", "zero_noise", "-o", str(target)])
    assert code == 2
    assert "runtime error" in capsys.readouterr().err


def test_overrides_change_the_horizon(tmp_path):
    target = tmp_path / "short.csv"
    assert main(["estimate", "zero_noise", "-o", str(target),
                 "--t-end", "5.0", "--quiet"]) == 0
    assert len(read_rows(target)) == 50 + 1


def test_seed_override_changes_the_noise(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path, seed in ((a, "1"), (b, "2")):
        assert main(["estimate", "nominal_calibration", "-o", str(path),
                     "--t-end", "5.0", "--seed", seed, "--quiet"]) == 0
    assert read_rows(a) != read_rows(b)


def test_fdir_reports_detection_edges(tmp_path, capsys):
    target = tmp_path / "spike.csv"
    assert main(["fdir", "spike_detect", "-o", str(target)]) == 0
    out = capsys.readouterr().out
    assert "fault detected" in out
    assert "flag cleared" in out
    assert "mode=single" in out


def test_compare_writes_one_csv_per_filter(tmp_path, capsys):
    outdir = tmp_path / "cmp"
    code = main(["compare", "nominal_calibration", "-o", str(outdir),
                 "--filters", "ekf,ukf", "--jobs", "2", "--t-end", "20.0"])
    assert code == 0
    out = capsys.readouterr().out
    assert "filter" in out and "ekf" in out and "ukf" in out
    for kind in ("ekf", "ukf"):
        rows = read_rows(outdir / ("nominal_calibration_%s.csv" % kind))
        assert len(rows) == 200 + 1


def test_compare_rejects_unknown_filter(tmp_path, capsys):
    code = main(["compare", "zero_noise", "-o", str(tmp_path / "cmp"),
                 "--filters", "ekf,enkf"])
    assert code == 1
    assert "configuration error" in capsys.readouterr().err


def test_compare_rejects_bad_job_count(tmp_path, capsys):
    code = main(["compare", "zero_noise", "-o", str(tmp_path / "cmp"),
                 "--jobs", "0"])
    assert code == 1
    capsys.readouterr()
