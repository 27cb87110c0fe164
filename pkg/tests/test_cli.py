import csv
import hashlib
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from latticeshift import read_signal_csv, read_sites_csv
from latticeshift.cli import (RESONANCE_COLUMNS, SWEEP_COLUMNS, VARIANCE_COLUMNS, ConfigError, main, parse_number,
                              parse_vector)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(lines))))


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------- parsing

@pytest.mark.parametrize("text,want", [("0.25", 0.25), ("pi/4", math.pi / 4), ("2*pi", 2 * math.pi),
                                       ("-pi", -math.pi), ("1e4", 1e4), ("3/2", 1.5)])
def test_parse_number(text, want):
    assert parse_number(text) == pytest.approx(want, rel=1e-15)


@pytest.mark.parametrize("text", ["abc", "__import__('os')", "pi()", "", "2**"])
def test_parse_number_rejects(text):
    with pytest.raises((ValueError, ConfigError)):
        parse_number(text)


def test_parse_vector():
    np.testing.assert_allclose(parse_vector("0, 0, pi"), [0, 0, math.pi])
    with pytest.raises((ValueError, ConfigError)):
        parse_vector("1,2")


# ---------------------------------------------------------------- subcommands

def test_resonances_table(capsys):
    code, out, _ = run(capsys, "resonances", "--kappa", "1.07", "--max-index", "3")
    assert code == 0
    table = rows(out)
    assert tuple(table[0]) == RESONANCE_COLUMNS
    got = [round(float(r[3]), 4) for r in table[1:]]
    assert 0.1161 in got and 0.1797 in got
    assert all(abs(float(r[4])) <= 1e-10 for r in table[1:])


def test_oracle_command(capsys, tmp_path):
    code, out, _ = run(capsys, "oracle", "--n", 2, "--sep", "0,0,pi", "--eps", 0, "--gt", 0.01)
    assert code == 0
    footer = [ln for ln in out.splitlines() if ln.startswith("# eq18=")][0]
    fields = dict(kv.split("=") for kv in footer[2:].split())
    assert float(fields["rel_err"]) <= 0.02
    assert float(fields["oracle"]) == pytest.approx(float(fields["eq18"]), rel=0.02)
    path = tmp_path / "oracle.csv"
    code, _, _ = run(capsys, "oracle", "--positions", "0,0,0;0,0,pi", "--eps", 0, "--gt", 0.01,
                     "--delta-points", 21, "--out", path)
    assert code == 0
    curve, peak = read_signal_csv(path)
    assert len(curve.detuning) == 21
    assert peak == pytest.approx(float(fields["oracle"]), rel=1e-12)


def test_shift_rejects_overfull_lattice(capsys):
    code, _, err = run(capsys, "shift", "--filling", 1.5)
    assert code == 1
    assert err.startswith("error[config]") and "filling" in err


def test_bad_flag_value_is_user_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["shift", "--eps", "abc"])
    assert exc.value.code == 1
    assert "error[config]" in capsys.readouterr().err


def test_theta_outside_range(capsys):
    code, _, err = run(capsys, "sweep", "--theta-min", 0.3, "--theta-max", 0.6, "--points", 3)
    assert code == 1 and "theta" in err


def test_oracle_capacity_exit_code(capsys):
    code, _, err = run(capsys, "oracle", "--n", 7, "--gt", 0.01)
    assert code == 2 and err.startswith("error[capacity]")


def test_unwritable_output(capsys, tmp_path):
    code, _, err = run(capsys, "shift", "--n", 100, "--theta", 0.15, "--out", tmp_path / "no" / "x.csv")
    assert code == 1 and "out" in err


def test_single_point_sweep_equals_shift(capsys):
    args = ["--n", 500, "--filling", 0.4, "--eps", 0.1, "--gt", 0.01, "--seed", 3]
    _, a, _ = run(capsys, "sweep", *args, "--theta-min", 0.15, "--theta-max", 0.15, "--points", 1)
    _, b, _ = run(capsys, "shift", *args, "--theta", 0.15)
    assert a == b


def test_sweep_schema_round_trip(capsys, tmp_path):
    path = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--n", 300, "--filling", 0.5, "--points", 5, "--gt", 0.01, "--out", path)
    assert code == 0
    table = rows(path.read_text())
    assert tuple(table[0]) == SWEEP_COLUMNS
    assert len(table) == 6
    data = np.array(table[1:], dtype=float)
    assert data.shape == (5, 5)
    np.testing.assert_allclose(data[:, 0], np.linspace(0.05, 0.25, 5), rtol=1e-15)
    assert np.all(np.isfinite(data))
    assert np.all(data[:, 4] > 0)


def test_sweep_scaled_zeroth_matches_library(capsys):
    from latticeshift import DensityProfile, build_six_beam_lattice, shift_restructured_perfect
    _, out, _ = run(capsys, "shift", "--n", 800, "--theta", 0.2, "--eps", 0.2)
    val = float(rows(out)[1][1])
    g = build_six_beam_lattice(0.2 * math.pi)
    want = shift_restructured_perfect(g, DensityProfile.for_geometry(g, 800), 0.2).zeroth
    assert val == pytest.approx(2 * want / 0.2, rel=1e-10)


def test_large_sample_uses_restructured_sum(capsys):
    _, out, _ = run(capsys, "shift", "--n", 5000, "--theta", 0.15)
    r = rows(out)[1]
    assert r[2] == "nan" and math.isfinite(float(r[1]))


def test_reproducible_outputs(capsys, tmp_path):
    paths = [tmp_path / f"s{i}.csv" for i in range(3)]
    for p, seed in zip(paths, (11, 11, 12)):
        run(capsys, "sweep", "--n", 400, "--filling", 0.3, "--points", 4, "--seed", seed, "--out", p)
    assert digest(paths[0]) == digest(paths[1])
    assert digest(paths[0]) != digest(paths[2])


def test_threaded_sweep_keeps_order(capsys):
    args = ["sweep", "--n", 300, "--filling", 0.5, "--points", 6]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args, "--threads", 3)
    assert a == b


def test_variance_command(capsys):
    code, out, _ = run(capsys, "variance", "--n", 1000, "--filling", 0.05, "--points", 3)
    assert code == 0
    table = rows(out)
    assert tuple(table[0]) == VARIANCE_COLUMNS
    data = np.array(table[1:], dtype=float)
    assert np.all(data[:, 2] > 0)
    np.testing.assert_allclose(data[:, 2], data[:, 3], rtol=0.15)


def test_kernels_command(capsys):
    code, out, _ = run(capsys, "kernels", "--v", "0,0,pi")
    assert code == 0
    vals = dict(ln.split("=") for ln in out.splitlines())
    assert float(vals["f"]) == pytest.approx(3 / math.pi**2, rel=1e-14)
    assert float(vals["g"]) == pytest.approx(3 / math.pi**3, rel=1e-14)
    assert float(vals["U"]) == pytest.approx(3 / math.pi**3, rel=1e-14)


def test_sites_round_trip(capsys, tmp_path):
    path = tmp_path / "sites.csv"
    code, _, _ = run(capsys, "sites", "--n", 200, "--filling", 0.5, "--seed", 4, "--out", path)
    assert code == 0
    idx, pos = read_sites_csv(path)
    _, out, _ = run(capsys, "sites", "--n", 200, "--filling", 0.5, "--seed", 4)
    again = np.array(rows(out)[1:], dtype=float)
    np.testing.assert_array_equal(idx, again[:, :3].astype(int))
    np.testing.assert_array_equal(pos, again[:, 3:])


# ---------------------------------------------------------------- config files

def test_config_file_with_flag_override(capsys, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("n: 400\nfilling: 0.5\ntheta: 0.15\neps: 0.2\nseed: 9\n")
    _, a, _ = run(capsys, "shift", "--config", cfg)
    _, b, _ = run(capsys, "shift", "--n", 400, "--filling", 0.5, "--theta", 0.15, "--eps", 0.2, "--seed", 9)
    assert a == b
    _, c, _ = run(capsys, "shift", "--config", cfg, "--eps", 0.1)
    _, d, _ = run(capsys, "shift", "--n", 400, "--filling", 0.5, "--theta", 0.15, "--eps", 0.1, "--seed", 9)
    assert c == d


def test_config_accepts_dashed_keys_and_pi(capsys, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("theta-min: 0.1\ntheta-max: 0.2\npoints: 2\nn: 200\nkappa: 1.07\n")
    code, out, _ = run(capsys, "sweep", "--config", cfg)
    assert code == 0
    assert [float(r[0]) for r in rows(out)[1:]] == [0.1, 0.2]


def test_config_unknown_key_reports_line(capsys, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("n: 400\n\nfiling: 0.5\n")
    code, _, err = run(capsys, "shift", "--config", cfg)
    assert code == 1
    assert ":3:" in err and "filing" in err


def test_config_bad_value_names_field(capsys, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("eps: 2.5\n")
    code, _, err = run(capsys, "shift", "--config", cfg)
    assert code == 1 and "eps" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "latticeshift", "kernels", "--v", "1,0,0"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.startswith("f=")
