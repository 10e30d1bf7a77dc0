from __future__ import annotations

import io
import json
import subprocess
import sys

import numpy as np
import pytest

from gridcpd.cli import main, parse_rows, preprocess, read_config
from gridcpd.detectors import DetectorConfig, OnlineDetector, run_to_alarm
from gridcpd.errors import DomainError, ParseError
from gridcpd.grid import dynamic_grid
from oracles import brute_first_alarm, uni_reference


def write_csv(path, rows, header=None):
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in np.atleast_1d(row)) + "\n")
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# -- parsing and preprocessing -------------------------------------------------


def test_parse_rows_basic():
    rows = [v.tolist() for _, _, v in parse_rows(io.StringIO("1.0,2.0\n3.0,4.0"))]
    assert rows == [[1.0, 2.0], [3.0, 4.0]]


def test_parse_rows_header_and_trailing_newline():
    parsed = list(parse_rows(io.StringIO("a,b\n1,2\n3,4\n\n"), header=True))
    assert [r for r, _, _ in parsed] == [1, 2] and parsed[1][2].tolist() == [3.0, 4.0]


def test_parse_rows_semicolons_and_id():
    parsed = list(parse_rows(io.StringIO("2000-01-03;1.5;2\n2000-01-04;1.25;3\n"), delimiter=";", id_col=0))
    assert parsed[1][1] == "2000-01-04" and parsed[1][2].tolist() == [1.25, 3.0]


def test_parse_rows_errors_carry_position():
    with pytest.raises(ParseError) as info:
        list(parse_rows(io.StringIO("1,2\n3,x\n")))
    assert (info.value.line, info.value.column) == (2, 2)
    with pytest.raises(ParseError) as info:
        list(parse_rows(io.StringIO("1,2\n3,4,5\n")))
    assert info.value.line == 2
    with pytest.raises(ParseError):
        list(parse_rows(io.StringIO("1,nan\n")))


def test_preprocess_examples():
    assert [r.tolist() for r in preprocess([[2, 4], [4, 8]], ["baseline_normalize"])] == [[1, 1], [2, 2]]
    assert [r.tolist() for r in preprocess([[1], [3], [6]], ["first_difference"])] == [[2], [3]]


def test_preprocess_composition_by_hand():
    rows = [[2.0, 4.0], [4.0, 8.0], [5.0, 6.0]]
    # normalise: [1,1], [2,2], [2.5,1.5]; then difference: [1,1], [0.5,-0.5]
    out = [r.tolist() for r in preprocess(rows, ["baseline_normalize", "first_difference"])]
    assert out == [[1.0, 1.0], [0.5, -0.5]]
    # the other order: difference [2,4], [1,-2]; normalise by [2,4]
    out = [r.tolist() for r in preprocess(rows, ["first_difference", "baseline_normalize"])]
    assert out == [[1.0, 1.0], [0.5, -0.5]]


def test_preprocess_zero_baseline():
    with pytest.raises(DomainError):
        list(preprocess([[0.0, 1.0], [1.0, 1.0]], ["baseline_normalize"]))


def test_read_config(tmp_path):
    cfg = tmp_path / "c.conf"
    cfg.write_text("# detector\nkind = uni_mean\nlam=2.5  # inline\n\nauto-reset = true\n")
    assert read_config(str(cfg)) == {"kind": "uni_mean", "lam": "2.5", "auto_reset": "true"}


# -- grid ----------------------------------------------------------------------


def test_grid_command(capsys):
    code, out, _ = run(["grid", "--t", "20"], capsys)
    assert code == 0 and out.split() == [str(g) for g in dynamic_grid(20)]
    code, out, _ = run(["grid", "--t", "9", "--static"], capsys)
    assert out == "1\n2\n4\n8\n"
    code, _, err = run(["grid", "--t", "1"], capsys)
    assert code == 2 and "t >= 2" in err


# -- monitor -------------------------------------------------------------------


def test_constant_input_no_alarm(tmp_path, capsys):
    path = write_csv(tmp_path / "c.csv", [3.0] * 500)
    code, out, _ = run(["monitor", path, "--kind", "uni_mean", "--mode", "calibrated", "--lam", "1.6"], capsys)
    assert code == 0 and out == ""


def test_single_jump_one_alarm_matches_batch(tmp_path, capsys):
    rng = np.random.default_rng(0)
    y = rng.standard_normal(400)
    y[250:] += 3.0
    path = write_csv(tmp_path / "j.csv", y)
    code, out, _ = run(["monitor", path, "--kind", "uni_mean", "--lam", "2.0"], capsys)
    lines = out.splitlines()
    assert code == 0 and len(lines) == 1
    alarm = json.loads(lines[0])
    expected = brute_first_alarm(uni_reference, y, dynamic_grid, 400, lam=2.0)
    assert alarm["t"] == alarm["row"] == expected > 250
    assert list(alarm) == ["t", "row", "g", "stat", "threshold", "detector"]
    assert alarm["stat"] > alarm["threshold"] and alarm["detector"] == "uni_mean"


def test_reset_boundary_concatenation(tmp_path, capsys):
    cfg = DetectorConfig(kind="uni_mean", lam=1.0)
    first = np.zeros(300)
    first[200:] = 5.0
    end = run_to_alarm(OnlineDetector(cfg), first, 300)
    first = first[:end]  # alarm lands on the final row
    second = np.random.default_rng(1).standard_normal(300)
    second[150:] += 2.5
    args = ["--kind", "uni_mean", "--lam", "1.0", "--auto-reset"]
    _, out_a, _ = run(["monitor", write_csv(tmp_path / "a.csv", first), *args], capsys)
    _, out_b, _ = run(["monitor", write_csv(tmp_path / "b.csv", second), *args], capsys)
    _, out_ab, _ = run(["monitor", write_csv(tmp_path / "ab.csv", np.concatenate([first, second])), *args], capsys)
    combined = [json.loads(x) for x in out_a.splitlines()]
    for rec in map(json.loads, out_b.splitlines()):
        rec["row"] += end
        combined.append(rec)
    assert [json.loads(x) for x in out_ab.splitlines()] == combined and len(combined) >= 2


def test_config_file_and_flag_precedence(tmp_path, capsys):
    y = np.zeros(300)
    y[200:] = 4.0
    path = write_csv(tmp_path / "y.csv", y)
    conf = tmp_path / "d.conf"
    conf.write_text("kind=uni_mean\nlam=1e9\ndetector_id=from-file\n")
    _, out, _ = run(["monitor", path, "--config", str(conf)], capsys)
    assert out == ""
    _, out, _ = run(["monitor", path, "--config", str(conf), "--lam", "1.0"], capsys)
    assert json.loads(out)["detector"] == "from-file"


def test_id_column_and_header(tmp_path, capsys):
    path = tmp_path / "ids.csv"
    lines = ["date,value"] + [f"day{i},{0.0 if i < 100 else 6.0}" for i in range(150)]
    path.write_text("\n".join(lines) + "\n")
    _, out, _ = run(["monitor", str(path), "--kind", "uni_mean", "--header", "--id-col", "0"], capsys)
    rec = json.loads(out)
    assert rec["id"] == f"day{rec['row'] - 1}" and rec["row"] > 100


def test_differencing_shifts_rows(tmp_path, capsys):
    level = np.concatenate([np.zeros(100), np.arange(1, 51, dtype=float) * 5.0])
    path = write_csv(tmp_path / "lvl.csv", level)
    _, out, _ = run(["monitor", path, "--kind", "uni_mean", "--preprocess", "first_difference"], capsys)
    rec = json.loads(out)
    assert rec["row"] == rec["t"] + 1


def test_output_file(tmp_path, capsys):
    y = np.zeros(200)
    y[100:] = 9.0
    dest = tmp_path / "alarms.jsonl"
    code, out, _ = run(["monitor", write_csv(tmp_path / "y.csv", y), "--kind", "uni_mean", "--output", str(dest)],
                       capsys)
    assert code == 0 and out == "" and len(dest.read_text().splitlines()) == 1


@pytest.mark.parametrize(
    "content, extra, needle",
    [
        ("1,2\n3,oops\n", [], "line 2, column 2"),
        ("1,2\n3,4,5\n", [], "line 2"),
        ("0,1\n1,1\n", ["--preprocess", "baseline_normalize"], "zero"),
        ("1\n2\n", ["--preprocess", "smooth"], "smooth"),
        ("1\n2\n3\n", ["--training-prefix", "5"], "training_prefix"),
    ],
)
def test_input_errors_exit_2(tmp_path, capsys, content, extra, needle):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    code, _, err = run(["monitor", str(path), "--kind", "chad_mean", *extra], capsys)
    assert code == 2 and needle in err


def test_missing_file_and_bad_config(tmp_path, capsys):
    code, _, _ = run(["monitor", str(tmp_path / "nope.csv"), "--kind", "uni_mean"], capsys)
    assert code == 2
    conf = tmp_path / "x.conf"
    conf.write_text("kind=uni_mean\nwobble=3\n")
    path = write_csv(tmp_path / "y.csv", [1.0, 2.0])
    code, _, err = run(["monitor", path, "--config", str(conf)], capsys)
    assert code == 2 and "wobble" in err
    code, _, _ = run(["monitor", path], capsys)
    assert code == 2


def test_numeric_error_exit_1(tmp_path, capsys):
    path = write_csv(tmp_path / "z.csv", [[0.0, 0.0]] * 5)
    code, _, err = run(["monitor", path, "--kind", "cov_opnorm"], capsys)
    assert code == 1 and "numerical" in err


def test_stdin_input(monkeypatch, capsys):
    monkeypatch.setattr(sys, "stdin", io.StringIO("0\n" * 50 + "10\n" * 20))
    code, out, _ = run(["monitor", "-", "--kind", "uni_mean"], capsys)
    assert code == 0 and len(out.splitlines()) == 1


# -- calibrate / simulate / bench ----------------------------------------------------


def test_calibrate_command(tmp_path, capsys):
    dest = tmp_path / "cal.json"
    code, _, _ = run(["calibrate", "--kind", "uni_mean", "--mode", "calibrated", "--N", "100", "--K", "100",
                      "--seed", "3", "--output", str(dest)], capsys)
    doc = json.loads(dest.read_text())
    assert code == 0 and doc["constants"]["lam"] > 0 and doc["quantile_index"]["main"] == 95
    code, _, _ = run(["calibrate", "--kind", "uni_mean", "--K", "10"], capsys)
    assert code == 2


def test_calibration_file_feeds_monitor(tmp_path, capsys):
    dest = tmp_path / "cal.json"
    run(["calibrate", "--kind", "uni_mean", "--mode", "calibrated", "--N", "100", "--K", "100",
         "--output", str(dest)], capsys)
    lam = json.loads(dest.read_text())["constants"]["lam"]
    y = np.zeros(200)
    y[120:] = 5.0
    _, out, _ = run(["monitor", write_csv(tmp_path / "y.csv", y), "--kind", "uni_mean",
                     "--calibration", str(dest)], capsys)
    rec = json.loads(out)
    big_l = np.log(rec["t"] / 0.05)
    assert rec["threshold"] == pytest.approx(1 + lam * (big_l + np.sqrt(big_l)))
    code, _, err = run(["monitor", write_csv(tmp_path / "y2.csv", y), "--kind", "poisson_rate",
                        "--calibration", str(dest)], capsys)
    assert code == 2 and "calibration" in err


def test_simulate_command(tmp_path, capsys):
    csv_path = tmp_path / "delay.csv"
    code, out, _ = run(["simulate", "--kind", "uni_mean", "--lam", "1.0", "--N", "200", "--tau", "100",
                        "--phi", "1,3", "--M", "50", "--emit-csv", str(csv_path)], capsys)
    doc = json.loads(out)
    assert code == 0 and len(doc["reports"]) == 2
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "phi,mean_delay" and rows[1].startswith("1.0,")
    assert doc["reports"][1]["mean_delay"] < doc["reports"][0]["mean_delay"]


def test_bench_command(tmp_path, capsys):
    csv_path = tmp_path / "cost.csv"
    code, out, _ = run(["bench", "--kind", "uni_mean", "--checkpoints", "100,400", "--repetitions", "1",
                        "--window", "50", "--emit-csv", str(csv_path)], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["checkpoints"] == [100, 400]
    assert csv_path.read_text().splitlines()[0] == "t,seconds_per_update"


def test_console_entry_point_exit_codes():
    ok = subprocess.run([sys.executable, "-m", "gridcpd.cli", "grid", "--t", "18"], capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout.split() == ["1", "2", "3", "5", "7", "9", "13"]
    bad = subprocess.run([sys.executable, "-m", "gridcpd.cli", "grid"], capture_output=True, text=True)
    assert bad.returncode == 2
