"""CSV ingestion, basis recipes, and the command-line interface."""

import json
import warnings

import numpy as np
import pytest

from ivlate.cli import main
from ivlate.errors import (
    DegenerateKnot,
    DuplicateColumn,
    MissingColumn,
    NonBinaryInstrument,
    NonBinaryTreatment,
    ParseError,
)
from ivlate.io import BasisRecipe, Schema, expand_basis, load_dataset, write_dataset
from ivlate.model import Dataset

SCHEMA = Schema(y_col="y", d_col="d", z_col="z", x_cols=("x1", "x2"))


def write_csv(path, text):
    path.write_text(text)
    return str(path)


def test_load_basic(tmp_path):
    p = write_csv(tmp_path / "a.csv", "y,d,z,x1,x2\n1.5,1,1,0.2,3\n0,0,0,-1,4\n")
    ds = load_dataset(p, SCHEMA)
    np.testing.assert_array_equal(ds.y, [1.5, 0.0])
    np.testing.assert_array_equal(ds.d, [1.0, 0.0])
    np.testing.assert_array_equal(ds.x, [[0.2, 3.0], [-1.0, 4.0]])
    assert ds.column_names == ("x1", "x2")
    assert ds.missing_mask is None


def test_mean_imputation_and_indicator(tmp_path):
    p = write_csv(
        tmp_path / "b.csv",
        "y,d,z,x1,x2\n1,1,1,NA,3\n0,0,0,2,5\n0,1,0,4,NA\n",
    )
    ds = load_dataset(p, SCHEMA)
    # x1 missing in row 1 -> imputed with mean(2, 4) = 3; indicator appended
    np.testing.assert_array_equal(ds.x[:, 0], [3.0, 2.0, 4.0])
    np.testing.assert_array_equal(ds.x[:, 1], [3.0, 5.0, 4.0])
    assert ds.column_names == ("x1", "x2", "x1_missing", "x2_missing")
    np.testing.assert_array_equal(ds.x[:, 2], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(ds.x[:, 3], [0.0, 0.0, 1.0])
    assert ds.missing_mask[0, 0] and ds.missing_mask[2, 1]

    ds2 = load_dataset(
        p,
        Schema(y_col="y", d_col="d", z_col="z", x_cols=("x1", "x2"),
               add_missing_indicators=False),
    )
    assert ds2.column_names == ("x1", "x2")


def test_parse_errors(tmp_path):
    with pytest.raises(ParseError, match="row 2"):
        load_dataset(
            write_csv(tmp_path / "c.csv", "y,d,z,x1,x2\nfoo,1,1,0,0\n"), SCHEMA
        )
    with pytest.raises(ParseError):
        load_dataset(write_csv(tmp_path / "d.csv", ""), SCHEMA)
    with pytest.raises(ParseError):
        load_dataset(write_csv(tmp_path / "e.csv", "y,d,z,x1,x2\n"), SCHEMA)
    with pytest.raises(MissingColumn):
        load_dataset(
            write_csv(tmp_path / "f.csv", "y,d,z,x1\n1,1,1,0\n"), SCHEMA
        )
    with pytest.raises(DuplicateColumn):
        load_dataset(
            write_csv(tmp_path / "g.csv", "y,d,z,x1,x1\n1,1,1,0,0\n"), SCHEMA
        )
    with pytest.raises(NonBinaryTreatment):
        load_dataset(
            write_csv(tmp_path / "h.csv", "y,d,z,x1,x2\n1,2,1,0,0\n"), SCHEMA
        )
    with pytest.raises(NonBinaryInstrument):
        load_dataset(
            write_csv(tmp_path / "i.csv", "y,d,z,x1,x2\n1,1,0.5,0,0\n"), SCHEMA
        )
    # y may not be missing
    with pytest.raises(ParseError, match="missing"):
        load_dataset(
            write_csv(tmp_path / "j.csv", "y,d,z,x1,x2\nNA,1,1,0,0\n"), SCHEMA
        )


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(
        y=rng.standard_normal(5),
        d=(rng.random(5) < 0.5).astype(float),
        z=(rng.random(5) < 0.5).astype(float),
        x=rng.standard_normal((5, 3)),
        column_names=("a", "b", "c"),
    )
    p = tmp_path / "rt.csv"
    write_dataset(str(p), ds)
    back = load_dataset(
        str(p), Schema(y_col="y", d_col="d", z_col="z", x_cols=("a", "b", "c"))
    )
    np.testing.assert_array_equal(back.y, ds.y)
    np.testing.assert_array_equal(back.x, ds.x)


def test_hinge_quantile_oracle():
    # values 0.1..0.8: the 1/4, 2/4, 3/4 quantiles under linear interpolation
    # are 0.275, 0.45, 0.625
    vals = np.arange(0.1, 0.81, 0.1)
    n = len(vals)
    ds = Dataset(
        y=np.zeros(n),
        d=np.tile([0.0, 1.0], n // 2),
        z=np.tile([1.0, 0.0], n // 2),
        x=np.column_stack([vals, np.linspace(-1, 1, n)]),
    )
    recipe = BasisRecipe(hinge_cols=(0,), knots=3)
    spec, designs = expand_basis(ds, recipe)
    knots = [t.knot for t in spec.f_terms if t.kind == "hinge"]
    np.testing.assert_allclose(knots, [0.275, 0.45, 0.625], atol=1e-12)
    # hinge columns evaluate to (x - knot)_+
    f = designs["f"].matrix
    np.testing.assert_allclose(f[:, 3], np.maximum(vals - 0.275, 0.0), atol=1e-12)


def test_degenerate_knot_dropped():
    # upper quantiles sit at the maximum, so those hinges would be all-zero
    n = 8
    x0 = np.array([0.0, 0.0] + [1.0] * 6)
    ds = Dataset(
        y=np.zeros(n),
        d=np.tile([0.0, 1.0], n // 2),
        z=np.tile([1.0, 0.0], n // 2),
        x=np.column_stack([x0, np.linspace(-1, 1, n)]),
    )
    with pytest.warns(DegenerateKnot):
        spec, _ = expand_basis(ds, BasisRecipe(hinge_cols=(0,), knots=3))
    kinds = [t.kind for t in spec.f_terms]
    assert kinds.count("hinge") == 1


def test_recipe_validation_and_m2():
    with pytest.raises(ValueError):
        BasisRecipe(mode="M9")
    with pytest.raises(ValueError):
        BasisRecipe(knots=0)
    n = 10
    ds = Dataset(
        y=np.zeros(n),
        d=np.tile([0.0, 1.0], n // 2),
        z=np.tile([1.0, 0.0], n // 2),
        x=np.random.default_rng(1).standard_normal((n, 2)),
    )
    spec, designs = expand_basis(ds, BasisRecipe(mode="M2"))
    assert "h" not in designs  # fitted values not supplied yet
    assert len(spec.h_terms) == len(spec.f_terms) + 8
    spec2, designs2 = expand_basis(
        ds,
        BasisRecipe(mode="M2"),
        fitted_m={"m_d0": np.linspace(0.1, 0.9, n), "m_d1": np.linspace(0.2, 0.8, n)},
    )
    assert "h" in designs2


def simulate_csv(tmp_path, n=250, p=6, scenario="C4", seed=5):
    prefix = str(tmp_path / "sim")
    rc = main([
        "simulate", "--scenario", scenario, "--n", str(n), "--p", str(p),
        "--seed", str(seed), "--out", prefix,
    ])
    assert rc == 0
    return f"{prefix}_rep0.csv"


def test_cli_simulate_and_fit(tmp_path, capsys):
    path = simulate_csv(tmp_path)
    xcols = ",".join(f"x{j}" for j in range(1, 7))
    out = str(tmp_path / "report.json")
    rc = main([
        "fit", "--data", path, "--y-col", "y", "--d-col", "d", "--z-col", "z",
        "--x-cols", xcols, "--method", "RCAL", "--seed", "1", "--out", out,
    ])
    assert rc == 0
    payload = json.loads(open(out).read())
    assert payload["method"] == "RCAL"
    assert "theta1" in payload["targets"]
    entry = payload["targets"]["theta1"]
    assert entry["ci95"][0] < entry["est"] < entry["ci95"][1]
    assert "kkt" in payload and "boundedness" in payload


def test_cli_ipw_fit(tmp_path, capsys):
    path = simulate_csv(tmp_path)
    capsys.readouterr()  # clear the simulate command's path listing
    xcols = ",".join(f"x{j}" for j in range(1, 7))
    rc = main([
        "fit", "--data", path, "--y-col", "y", "--d-col", "d", "--z-col", "z",
        "--x-cols", xcols, "--method", "IPW",
    ])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["method"] == "IPW"


def test_cli_diagnose(tmp_path, capsys):
    path = simulate_csv(tmp_path)
    xcols = ",".join(f"x{j}" for j in range(1, 7))
    prefix = str(tmp_path / "diag")
    rc = main([
        "diagnose", "--data", path, "--y-col", "y", "--d-col", "d",
        "--z-col", "z", "--x-cols", xcols, "--seed", "1", "--out", prefix,
    ])
    assert rc == 0
    checks = json.loads(open(f"{prefix}_checks.json").read())
    assert "kkt" in checks and "boundedness" in checks
    assert (tmp_path / "diag_calibration.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    # validation: missing file
    rc = main([
        "fit", "--data", str(tmp_path / "nope.csv"), "--y-col", "y",
        "--d-col", "d", "--z-col", "z", "--x-cols", "x1",
    ])
    assert rc == 2
    # validation: non-binary treatment
    bad = tmp_path / "bad.csv"
    bad.write_text("y,d,z,x1,x2\n1,2,1,0,1\n0,0,0,1,0\n")
    rc = main([
        "fit", "--data", str(bad), "--y-col", "y", "--d-col", "d",
        "--z-col", "z", "--x-cols", "x1,x2",
    ])
    assert rc == 2
    capsys.readouterr()


def test_cli_degenerate_exit_code(tmp_path, capsys):
    # everyone treated: the IPW complier-share denominator is exactly zero
    rng = np.random.default_rng(2)
    n = 80
    rows = ["y,d,z,x1,x2"]
    for i in range(n):
        rows.append(
            f"{rng.standard_normal():.6f},1,{i % 2},"
            f"{rng.standard_normal():.6f},{rng.standard_normal():.6f}"
        )
    p = tmp_path / "deg.csv"
    p.write_text("\n".join(rows) + "\n")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rc = main([
            "fit", "--data", str(p), "--y-col", "y", "--d-col", "d",
            "--z-col", "z", "--x-cols", "x1,x2", "--method", "IPW",
        ])
    assert rc == 4
    capsys.readouterr()


def test_cli_empty_cell_exit_code(tmp_path, capsys):
    # no one treated: the treated outcome cell is empty -> validation error
    rng = np.random.default_rng(3)
    n = 80
    rows = ["y,d,z,x1,x2"]
    for i in range(n):
        rows.append(
            f"0.0,0,{i % 2},{rng.standard_normal():.6f},{rng.standard_normal():.6f}"
        )
    p = tmp_path / "empty.csv"
    p.write_text("\n".join(rows) + "\n")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rc = main([
            "fit", "--data", str(p), "--y-col", "y", "--d-col", "d",
            "--z-col", "z", "--x-cols", "x1,x2", "--method", "RCAL",
        ])
    assert rc == 2
    capsys.readouterr()


def test_cli_study_smoke(tmp_path, capsys):
    prefix = str(tmp_path / "study")
    rc = main([
        "study", "--scenario", "C4", "--n", "300", "--p", "6", "--seed", "2",
        "--reps", "3", "--estimators", "IPW", "--out", prefix,
    ])
    assert rc == 0
    assert (tmp_path / "study_summary.csv").exists()
    prov = json.loads(open(f"{prefix}_provenance.json").read())
    assert prov["config"]["replications"] == 3
    capsys.readouterr()


def test_cli_oracle_constants_smoke(capsys):
    rc = main(["oracle-constants", "--draws", "20000"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert "w_means" in out and "w_sds" in out
    np.testing.assert_allclose(out["w_means"], [1.132, 10.0, 0.2189, 402.0], rtol=0.05)
