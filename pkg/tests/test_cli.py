import filecmp
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from cfslope import VariableRoles, generate, load_dataset, make_dgp, run_ge
from cfslope.cli import main


@pytest.fixture(scope="module")
def ge_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("fixtures") / "dgp_a.csv"
    sample = generate(make_dgp("A_continuous", 20_000, 7))
    sample.dataset.to_frame().to_csv(path, index=False)
    return path


@pytest.fixture(scope="module")
def st_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("fixtures") / "dgp_c.csv"
    sample = generate(make_dgp("C_sequential", 6000, 7))
    sample.dataset.to_frame().to_csv(path, index=False)
    return path


def ge_args(csv, out, seed="7"):
    return ["analyze", "--input", str(csv), "--y", "y", "--d", "d", "--g", "g",
            "--x", "g,z", "--analysis", "ge", "--seed", seed, "--out", str(out)]


def test_analyze_ge_fixture_matches_oracle_difference(ge_csv, tmp_path):
    out = tmp_path / "ge"
    assert main(ge_args(ge_csv, out)) == 0
    tests = pd.read_csv(out / "tests.csv")
    sf = tests.loc[tests["name"] == "GE_selection_free", "point"].item()
    # truth: linear_cf(0) - linear_cf(1) = 0.65 - 0.45
    assert abs(sf - 0.20) < 0.05
    est = pd.read_csv(out / "estimates.csv")
    assert set(est.columns) == {"estimand", "target_d", "population", "point",
                                "se", "ci_low", "ci_high", "p_value", "n"}
    log = (out / "run.log").read_text()
    assert "seed = 7" in log and "rows analyzed = 20000" in log


def test_analyze_matches_library_exactly(ge_csv, tmp_path):
    out = tmp_path / "ge_lib"
    assert main(ge_args(ge_csv, out)) == 0
    est = pd.read_csv(out / "estimates.csv",
                      float_precision="round_trip").set_index("estimand")
    roles = VariableRoles("y", "d", "g", covariate_cols=["g", "z"])
    data = load_dataset(ge_csv, roles)
    res = run_ge(data, seed=7)
    for key, slope in res.slopes.items():
        assert est.loc[key, "point"] == slope.point
        assert est.loc[key, "se"] == slope.se


def test_analyze_rerun_is_byte_identical(ge_csv, tmp_path):
    out = tmp_path / "det"
    assert main(ge_args(ge_csv, out)) == 0
    snap = tmp_path / "det_snap"
    shutil.copytree(out, snap)
    assert main(ge_args(ge_csv, out)) == 0
    for name in ("estimates.csv", "tests.csv", "run.log"):
        assert (out / name).read_bytes() == (snap / name).read_bytes(), name


def test_conditional_without_p_errors(st_csv, tmp_path, capsys):
    code = main(["analyze", "--input", str(st_csv), "--y", "y", "--d", "d",
                 "--g", "g", "--x", "g,z", "--analysis", "st",
                 "--st-formulation", "conditional_alt",
                 "--seed", "1", "--out", str(tmp_path / "bad")])
    assert code != 0
    assert "P column" in capsys.readouterr().err


def test_plot_data_series_and_grid(ge_csv, st_csv, tmp_path):
    out = tmp_path / "plots_ge"
    args = ge_args(ge_csv, out)
    args[0] = "plot-data"
    assert main(args + ["--grid", "101"]) == 0
    lines = pd.read_csv(out / "lines.csv")
    assert sorted(lines["series"].unique()) == ["Y0|G", "Y1|G", "Y|G,D=0", "Y|G,D=1"]
    data = pd.read_csv(ge_csv)
    assert lines["g"].min() == pytest.approx(data["g"].min())
    assert lines["g"].max() == pytest.approx(data["g"].max())
    assert (lines.groupby("series").size() == 101).all()

    out2 = tmp_path / "plots_st"
    assert main(["plot-data", "--input", str(st_csv), "--y", "y", "--d", "d",
                 "--g", "g", "--p", "p", "--x", "g,z", "--analysis", "st",
                 "--seed", "1", "--out", str(out2)]) == 0
    st_lines = pd.read_csv(out2 / "lines.csv")
    assert sorted(st_lines["series"].unique()) == ["D|G", "Y1|G", "Y|G,D=1"]


def test_simulate_smoke_run(tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", "--dgp", "A_continuous", "--n", "2000", "--reps", "50",
                 "--analysis", "linear_cf", "--seed", "11",
                 "--oracle-draws", "2000000", "--out", str(out)])
    assert code == 0
    summary = pd.read_csv(out / "summary.csv")
    assert list(summary.columns) == ["estimand", "truth", "mean_est", "bias",
                                     "emp_sd", "mean_se", "coverage"]
    reps = pd.read_csv(out / "replications.csv")
    assert len(reps) == 50
    row = summary.iloc[0]
    assert abs(row["bias"]) < 0.05
    assert 0.8 <= row["coverage"] <= 1.0


def test_simulate_rerun_byte_identical(tmp_path):
    args = ["simulate", "--dgp", "null_GE", "--n", "600", "--reps", "3",
            "--analysis", "linear_cf", "--seed", "2",
            "--oracle-draws", "1000000", "--out"]
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(args + [str(out1)]) == 0
    assert main(args + [str(out2)]) == 0
    for name in ("replications.csv", "summary.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_simulate_unknown_dgp_lists_names(tmp_path, capsys):
    code = main(["simulate", "--dgp", "nope", "--n", "100", "--reps", "1",
                 "--seed", "1", "--out", str(tmp_path / "x")])
    assert code != 0
    err = capsys.readouterr().err
    assert "A_continuous" in err and "null_ST" in err


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "cfslope.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "analyze" in proc.stdout
