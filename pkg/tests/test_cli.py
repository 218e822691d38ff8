import json

import numpy as np
import pytest

from oatk.cli import main
from oatk.io import write_matrix


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((100, 10))
    y = 3 * X[:, 0] - 3 * X[:, 4] + rng.standard_normal(100)
    write_matrix(tmp_path / "X.csv", X, [f"v{k}" for k in range(10)])
    write_matrix(tmp_path / "Xraw.csv", X)
    write_matrix(tmp_path / "y.csv", y[:, None])
    write_matrix(tmp_path / "yshort.csv", y[:90, None])
    return tmp_path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_select_report(dataset, capsys):
    code, out, _ = run(["select", "-X", dataset / "X.csv", "-y", dataset / "y.csv", "--seed", 1], capsys)
    assert code == 0
    rep = json.loads(out)
    assert len(rep["w"]) == 10 and len(rep["sigma_sq"]) == 10
    assert rep["seed"] == 1 and rep["lambda"] > 0
    assert {0, 4} <= set(rep["rejected"])
    assert rep["rejected_names"] == [f"v{k}" for k in rep["rejected"]]
    assert list(rep) == sorted(rep)


def test_select_round_trip_and_determinism(dataset, capsys):
    args = ["select", "-X", dataset / "Xraw.csv", "-y", dataset / "y.csv", "--seed", 3]
    _, a, _ = run(args, capsys)
    _, b, _ = run(args, capsys)
    assert a == b
    rep = json.loads(a)
    w = np.array(rep["w"])
    t = rep["threshold"]
    expected = [] if t is None else np.flatnonzero(w >= t).tolist()
    assert rep["rejected"] == expected
    assert "names" not in rep


def test_seed_from_environment(dataset, capsys, monkeypatch):
    monkeypatch.setenv("OATK_SEED", "77")
    _, out, _ = run(["select", "-X", dataset / "X.csv", "-y", dataset / "y.csv"], capsys)
    assert json.loads(out)["seed"] == 77


def test_wrong_response_length(dataset, capsys):
    code, _, err = run(["select", "-X", dataset / "X.csv", "-y", dataset / "yshort.csv"], capsys)
    assert code == 3 and "90 rows" in err


def test_parse_error(dataset, capsys):
    bad = dataset / "bad.csv"
    bad.write_text("1,2\n3,oops\n")
    code, _, err = run(["select", "-X", bad, "-y", dataset / "y.csv"], capsys)
    assert code == 2 and "row 2, column 1" in err


def test_wide_design(dataset, capsys):
    write_matrix(dataset / "wide.csv", np.random.default_rng(1).standard_normal((5, 8)))
    write_matrix(dataset / "y5.csv", np.ones((5, 1)))
    code, _, _ = run(["select", "-X", dataset / "wide.csv", "-y", dataset / "y5.csv"], capsys)
    assert code == 3


def test_bad_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["select", "--method", "lasso", "-X", "a", "-y", "b"])
    assert exc.value.code == 2


@pytest.mark.parametrize("method, key", [("oatk_multi", "p_values"), ("bh", "p_values"), ("gm", "w")])
def test_other_methods(dataset, capsys, method, key):
    code, out, _ = run(["select", "-X", dataset / "X.csv", "-y", dataset / "y.csv", "--method", method, "--seed", 2], capsys)
    assert code == 0
    rep = json.loads(out)
    assert len(rep[key]) == 10 and rep["method"] == method


def test_fixed_lambda(dataset, capsys):
    _, out, _ = run(["select", "-X", dataset / "X.csv", "-y", dataset / "y.csv", "--lambda", 0.5, "--seed", 1], capsys)
    assert json.loads(out)["lambda"] == 0.5


def test_derandomize_single_draw_equals_select(dataset, capsys):
    base = ["-X", dataset / "X.csv", "-y", dataset / "y.csv", "--seed", 4]
    _, a, _ = run(["select", *base], capsys)
    _, b, _ = run(["derandomize", *base, "--m-copies", 1], capsys)
    sel, der = json.loads(a), json.loads(b)
    for key in ("rejected", "w", "threshold", "lambda", "sigma_sq", "seed"):
        assert sel[key] == der[key]
    assert der["frequencies"] == [float(j in sel["rejected"]) for j in range(10)]


def test_calibrate_null_data(dataset, capsys):
    rng = np.random.default_rng(5)
    write_matrix(dataset / "ynull.csv", rng.standard_normal((100, 1)))
    code, out, _ = run(
        ["calibrate", "-X", dataset / "X.csv", "-y", dataset / "ynull.csv", "--seed", 1, "--mc-replicates", 20],
        capsys,
    )
    rep = json.loads(out)
    assert code == 0 and rep["rejected"] == []
    assert rep["e_value_sum"] == pytest.approx(sum(rep["e_values"]))


def test_output_file(dataset, capsys):
    out_path = dataset / "r.json"
    code, out, _ = run(["select", "-X", dataset / "X.csv", "-y", dataset / "y.csv", "--seed", 1, "-o", out_path], capsys)
    assert code == 0 and out == ""
    assert json.loads(out_path.read_text())["seed"] == 1


def test_clean_flag(dataset, capsys):
    rng = np.random.default_rng(2)
    M = (rng.random((200, 6)) < 0.3).astype(float)
    M[:, 5] = 0
    M[:3, 5] = 1  # rare mutation, dropped at min-count 10
    y = M[:, 0] * 2 + rng.standard_normal(200)
    rows = [",".join(f"{v:g}" for v in r) for r in M]
    rows[7] = rows[7].split(",", 1)[0] + "," + ",".join([""] * 5)
    (dataset / "mut.csv").write_text("a,b,c,d,e,f\n" + "\n".join(rows) + "\n")
    write_matrix(dataset / "ym.csv", y[:, None])
    code, out, err = run(["select", "-X", dataset / "mut.csv", "-y", dataset / "ym.csv", "--clean", "--seed", 0], capsys)
    assert code == 0, err
    rep = json.loads(out)
    assert rep["names"] == ["a", "b", "c", "d", "e"]
    assert rep["n"] <= 199


def test_simulate(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 80, "p": 20, "p1": 5, "replicates": 2, "methods": ["oatk", "bh"]}))
    out_csv = tmp_path / "o.csv"
    code, out, _ = run(["simulate", "-c", cfg, "-o", out_csv, "--seed", 1], capsys)
    assert code == 0
    assert len(out_csv.read_text().strip().splitlines()) == 5
    assert "oatk" in out and "FDR" in out
    first = out_csv.read_text()
    run(["simulate", "-c", cfg, "-o", out_csv, "--seed", 1, "--threads", 2], capsys)
    assert out_csv.read_text() == first


def test_simulate_errors(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 80, "p": 20, "p1": 5, "replicates": 2, "methods": ["oatk", "lasso"]}))
    code, _, err = run(["simulate", "-c", cfg], capsys)
    assert code == 2 and "lasso" in err
    cfg.write_text(json.dumps({"n": 80, "nested": {"a": 1}}))
    code, _, err = run(["simulate", "-c", cfg], capsys)
    assert code == 2 and "nested" in err
    cfg.write_text("{not json")
    code, _, _ = run(["simulate", "-c", cfg], capsys)
    assert code == 2
    code, _, _ = run(["simulate", "-c", tmp_path / "missing.json"], capsys)
    assert code == 2
