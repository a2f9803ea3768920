import json

import pytest

from leastgrad import io
from leastgrad.cli import EXIT_INPUT, EXIT_OK, EXIT_UNMET, main


def test_solve_constant_bundle(tmp_path, capsys):
    path = io.demo_bundle("constant", tmp_path / "b", 24)
    assert main(["solve", "--bundle", str(path), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "objective 0 " in capsys.readouterr().out
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["objective"] == 0.0 and rep["converged"]
    assert (tmp_path / "o" / "solution.csv").is_file()


def test_solve_annulus_bundle(tmp_path):
    path = io.demo_bundle("annulus", tmp_path / "b", 64)
    assert main(["solve", "--bundle", str(path), "--out", str(tmp_path / "o")]) == EXIT_OK
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert abs(rep["objective"] - 6.283185307179586) / 6.283185307179586 <= 0.02


def test_solve_reruns_byte_identical(tmp_path):
    path = io.demo_bundle("constant", tmp_path / "b", 16)
    for d in ("o1", "o2"):
        assert main(["solve", "--bundle", str(path), "--out", str(tmp_path / d)]) == EXIT_OK
    for name in ("solution.csv", "report.json"):
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()


def test_not_converged_exit_code(tmp_path):
    path = io.demo_bundle("annulus", tmp_path / "b", 32)
    raw = json.loads(path.read_text())
    raw["solver"] = {"max_iters": 5}
    path.write_text(json.dumps(raw))
    assert main(["solve", "--bundle", str(path), "--out", str(tmp_path / "o")]) == EXIT_UNMET


def test_missing_csv_names_path(tmp_path, capsys):
    path = io.demo_bundle("constant", tmp_path / "b", 16)
    (tmp_path / "b" / "boundary.csv").unlink()
    assert main(["solve", "--bundle", str(path)]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert err.startswith("error: input:") and "boundary.csv" in err


def test_unknown_suite_lists_available(capsys):
    assert main(["check", "--suite", "bogus", "--seed", "1"]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "adjointness" in err and "calibration" in err


@pytest.mark.parametrize("argv", [["check", "--suite", "coarea"], ["check", "--suite", "coarea", "--seed", "-1"],
                                  ["frobnicate"]])
def test_usage_errors_exit_one(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_INPUT
    assert capsys.readouterr().err.startswith("error: usage:")


def test_check_submodularity_seed7(capsys):
    assert main(["check", "--suite", "submodularity", "--seed", "7"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert "500/500" in out


def test_check_adjointness_writes_report(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["check", "--suite", "adjointness", "--seed", "3", "--count", "10", "--out", str(out)]) == EXIT_OK
    first = (out / "check_adjointness.json").read_bytes()
    assert main(["check", "--suite", "adjointness", "--seed", "3", "--count", "10", "--out", str(out)]) == EXIT_OK
    assert (out / "check_adjointness.json").read_bytes() == first


def test_barrier_disk_and_cassini(tmp_path, capsys):
    assert main(["barrier", "--shape", "disk", "--h", "0.03125", "--out", str(tmp_path / "d")]) == EXIT_OK
    assert "barrier condition: SATISFIED" in capsys.readouterr().out
    assert main(["barrier", "--shape", "cassini", "--h", "0.03125", "--out", str(tmp_path / "c")]) == EXIT_UNMET
    assert "barrier condition: VIOLATED" in capsys.readouterr().out
    data = json.loads((tmp_path / "c" / "barrier.json").read_text())
    assert data["minimum"] < 0


def test_barrier_bundle_levelset_samples(tmp_path, capsys):
    import numpy as np

    xs = np.linspace(-1.5, 1.5, 61)
    rows = ["x,y,f"] + [f"{x!r},{y!r},{0.5 * (1 - x * x - y * y)!r}" for x in xs.tolist() for y in xs.tolist()]
    (tmp_path / "ls.csv").write_text("\n".join(rows) + "\n")
    (tmp_path / "p.json").write_text(json.dumps({"levelset": {"kind": "samples", "file": "ls.csv"},
                                                 "h": 0.0625, "out": "o"}))
    assert main(["barrier", "--bundle", str(tmp_path / "p.json")]) == EXIT_OK
    assert (tmp_path / "o" / "indicator.csv").is_file()


def test_counterexample_outputs(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["counterexample", "--n", "64", "--sigma", "0.25", "--no-solve", "--out", str(out)]) == EXIT_OK
    table = json.loads((out / "table.json").read_text())
    assert table["sigmas"] == [0.0, 0.25, 0.5, 1.0]
    assert table["spread"] <= table["tolerance"]
    for name in ("a.csv", "J.csv", "u_sigma.csv"):
        assert (out / name).is_file()


@pytest.mark.parametrize("argv", [["--theta", "0.3"], ["--sigma", "1.5"]])
def test_counterexample_bad_parameters(argv, tmp_path, capsys):
    assert main(["counterexample", "--n", "64", "--no-solve", "--out", str(tmp_path)] + argv) == EXIT_INPUT
    assert capsys.readouterr().err.startswith("error: input:")


def test_cdii_demo(tmp_path, capsys):
    assert main(["cdii", "--n", "24", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["sigma_error"] < 0.05
    assert (tmp_path / "sigma_rec.csv").is_file()
