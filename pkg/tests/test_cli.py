import csv
import io
import subprocess
import sys
from math import exp, sqrt

import pytest
from scipy.optimize import brentq

from diqkd import bell_keyrate as bk
from diqkd.cli import COLUMNS, SweepSpec, main, read_config

OPERATING_POINT = ["--kappa-ratio", "6", "--t-over-tau", "0.01", "--eta-her", "0.855", "--eta-d", "0.855"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_keyrate_operating_point_is_positive(capsys):
    code, out, err = run(["keyrate", "--variant", "symmetric", *OPERATING_POINT, "--L", "10", "--rep-rate", "1e8"], capsys)
    assert code == 0
    (row,) = rows(out)
    assert list(row) == list(COLUMNS)
    assert float(row["key_per_second"]) > 0
    assert "key_per_second" in err


def test_zero_rate_is_not_an_error(capsys):
    code, out, _ = run(["keyrate", "--t-over-tau", "50", "--p", "1e-3"], capsys)
    assert code == 0
    assert float(rows(out)[0]["key_per_second"]) == 0


@pytest.mark.parametrize(
    "argv, flag",
    [
        (["keyrate", "--eta-d", "1.2"], "--eta-d"),
        (["keyrate", "--eta-her", "-0.1"], "--eta-her"),
        (["keyrate", "--kappa-ratio", "0"], "--kappa-ratio"),
        (["keyrate", "--p", "0.9"], "--p"),
        (["keyrate", "--L", "-3"], "--L"),
        (["keyrate", "--order", "3"], "--order"),
        (["keyrate", "--jobs", "0"], "--jobs"),
        (["keyrate", "--t-over-tau", "0.1", "--tm-s", "1e-5"], "--t-over-tau"),
        (["sweep", "--param", "L", "--range", "0:150:1"], "--range"),
        (["sweep", "--param", "L", "--range", "10:0:5"], "--range"),
        (["sweep", "--param", "t_over_tau", "--range", "0:1:5:log"], "--range"),
        (["grid", "--kappa-range", "6:6:1", "--t-range", "0.01:0.01:1"], "--kappa-range"),
    ],
)
def test_invalid_values_exit_2_naming_the_flag(argv, flag, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert flag in capsys.readouterr().err


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["keyrate", "--warp-factor", "9"])
    assert exc.value.code == 2


def test_sweep_spec_validation():
    assert list(SweepSpec("L", 0, 10, 3).values()) == [0, 5, 10]
    with pytest.raises(ValueError):
        SweepSpec("L", 0, 10, 1)
    with pytest.raises(ValueError):
        SweepSpec("colour", 0, 10, 3)
    with pytest.raises(ValueError):
        SweepSpec("L", 0, 10, 3, "log")


def test_distance_sweep_is_monotone(capsys):
    code, out, _ = run(["sweep", "--param", "L", "--range", "0:150:76", *OPERATING_POINT, "--jobs", "4"], capsys)
    assert code == 0
    table = rows(out)
    assert len(table) == 76
    assert [float(r["L_km"]) for r in table] == pytest.approx([2.0 * i for i in range(76)])
    kpu = [float(r["key_per_use"]) for r in table]
    assert all(b <= a for a, b in zip(kpu, kpu[1:]))


def test_cavity_sweep_is_non_decreasing(capsys):
    code, out, _ = run(["sweep", "--param", "kappa_ratio", "--range", "2:100:8:log", "--t-over-tau", "0.01",
                        "--p", "1e-3"], capsys)
    kpu = [float(r["key_per_use"]) for r in rows(out)]
    assert all(b >= a - 1e-9 for a, b in zip(kpu, kpu[1:]))
    assert kpu[-1] > 0


def test_csv_deterministic_across_runs_and_jobs(capsys):
    argv = ["sweep", "--param", "t_over_tau", "--range", "0.001:0.05:6:log", *OPERATING_POINT[:2], "--L", "20"]
    _, serial, _ = run(argv, capsys)
    _, again, _ = run(argv, capsys)
    _, parallel, _ = run(argv + ["--jobs", "3"], capsys)
    assert serial == again == parallel


def test_numbers_use_twelve_significant_digits(capsys):
    _, out, _ = run(["keyrate", *OPERATING_POINT, "--L", "10", "--p", "0.003"], capsys)
    row = rows(out)[0]
    mantissa = row["key_per_use"].split("e")[0].replace(".", "").replace("-", "").lstrip("0")
    assert len(mantissa) <= 12
    assert float(row["p_opt"]) == 0.003


def test_grid_contains_positive_points_and_matches_keyrate(capsys):
    argv = ["grid", "--kappa-range", "3:13:3", "--t-range", "0.001:0.03:3:log", "--L", "10",
            "--eta-her", "0.855", "--eta-d", "0.855"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    table = rows(out)
    assert len(table) == 9
    assert any(float(r["key_per_second"]) > 0 for r in table)
    pick = table[4]
    _, single, _ = run(["keyrate", "--kappa-ratio", pick["kappa_ratio"], "--t-over-tau", pick["t_over_tau"],
                        "--L", "10", "--eta-her", "0.855", "--eta-d", "0.855"], capsys)
    assert rows(single)[0] == pick


def test_boundary_ideal_cavity_matches_werner_oracle(capsys):
    def r(t):
        v = exp(-2 * t)
        return bk.keyrate_factor(0.0, (1 - v) / 2, 2 * sqrt(2) * v)

    t_star = brentq(r, 1e-6, 1.0, xtol=1e-14)
    code, out, _ = run(["boundary", "--kappa-range", "1e9:2e9:2", "--order", "1"], capsys)
    assert code == 0
    for row in rows(out):
        assert float(row["t_over_tau_max"]) == pytest.approx(t_star, rel=1.1e-3)


def test_boundary_marks_missing_region(capsys):
    _, out, _ = run(["boundary", "--kappa-range", "1.999:2.001:2"], capsys)
    table = rows(out)
    assert [r["t_over_tau_max"] for r in table] == ["", ""]


def test_boundary_saturates_beyond_ten(capsys):
    _, out, _ = run(["boundary", "--kappa-range", "10:100:2"], capsys)
    t10, t100 = (float(r["t_over_tau_max"]) for r in rows(out))
    assert abs(t100 - t10) / t10 < 0.2


def test_config_file_merges_under_flags(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# operating point\nkappa-ratio = 6\neta_her = 0.855\nL = 10\np = 0.002\n")
    _, out, _ = run(["keyrate", "--config", str(cfg)], capsys)
    row = rows(out)[0]
    assert (row["kappa_ratio"], row["eta_her"], row["L_km"], row["p_opt"]) == ("6", "0.855", "10", "0.002")
    _, out, _ = run(["keyrate", "--config", str(cfg), "--L", "20"], capsys)
    assert rows(out)[0]["L_km"] == "20"


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("eta_d = 3\n")
    with pytest.raises(SystemExit):
        main(["keyrate", "--config", str(bad)])
    assert "--eta-d" in capsys.readouterr().err
    bad.write_text("warp = 9\n")
    with pytest.raises(SystemExit):
        main(["keyrate", "--config", str(bad)])
    bad.write_text("no equals sign\n")
    with pytest.raises(ValueError):
        read_config(str(bad))


def test_output_file_and_module_entry_point(tmp_path):
    target = tmp_path / "out.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "diqkd", "keyrate", "--p", "1e-3", "--out", str(target)],
        capture_output=True, text=True, check=True,
    )
    assert proc.stdout == ""
    assert target.read_text().splitlines()[0] == ",".join(COLUMNS)
