import csv
import json

import numpy as np
import pytest

from dvqr import io as model_io
from dvqr import oracles
from dvqr.cli import main, read_table
from dvqr.dvine import predict_quantile
from vine_builders import WORKED_SIGMA


def _write_csv(path, names, data, delimiter=","):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(names)
        w.writerows(data)


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    raw = oracles.sample_mvn(oracles.MvnSpec(np.zeros(4), WORKED_SIGMA), 500, 0)
    _write_csv(d / "train.csv", ["y", "x1", "x2", "x3"], raw)
    assert main(["fit", "--input", str(d / "train.csv"), "--response", "y", "--output", str(d / "model.json")]) == 0
    x = np.random.default_rng(1).standard_normal((30, 3))
    _write_csv(d / "new.csv", ["x1", "x2", "x3"], x)
    return d


def test_fit_prints_order(workdir, capsys):
    out = workdir / "again.json"
    assert main(["fit", "--input", str(workdir / "train.csv"), "--response", "y", "--output", str(out)]) == 0
    text = capsys.readouterr().out
    assert "order: V-U2-U1 (x2, x1)" in text
    assert "tree 1 V,U2: gaussian" in text
    assert "aic path:" in text
    assert out.read_bytes() == (workdir / "model.json").read_bytes()


def test_fit_empty_order_notice(tmp_path, capsys):
    raw = np.random.default_rng(2).standard_normal((300, 2))
    _write_csv(tmp_path / "d.csv", ["y", "x"], raw)
    assert main(["fit", "--input", str(tmp_path / "d.csv"), "--response", "y", "--output", str(tmp_path / "m.json")]) == 0
    assert "no covariates selected" in capsys.readouterr().out
    _write_csv(tmp_path / "n.csv", ["x"], raw[:7, 1:])
    assert main(["predict", "--model", str(tmp_path / "m.json"), "--input", str(tmp_path / "n.csv"),
                 "--output", str(tmp_path / "p.csv")]) == 0
    _, q = _read_csv(tmp_path / "p.csv")
    median = model_io.load_model(tmp_path / "m.json").response_margin.ppf(0.5)
    np.testing.assert_allclose(q[:, 0], median, atol=1e-12)


def test_predict_columns_and_non_crossing(workdir):
    out = workdir / "pred.csv"
    assert main(["predict", "--model", str(workdir / "model.json"), "--input", str(workdir / "new.csv"),
                 "--alpha", "0.9", "--alpha", "0.1", "--alpha", "0.5", "--output", str(out)]) == 0
    header, q = _read_csv(out)
    assert header == ["q0.1", "q0.5", "q0.9"]
    assert q.shape == (30, 3)
    assert np.all(np.diff(q, axis=1) > 0.0)
    model = model_io.load_model(workdir / "model.json")
    _, x = _read_csv(workdir / "new.csv")
    np.testing.assert_allclose(q, predict_quantile(model, np.array([0.1, 0.5, 0.9]), x), atol=1e-12)


def test_predict_missing_covariate(workdir, tmp_path, capsys):
    _write_csv(tmp_path / "bad.csv", ["x1", "x3"], np.zeros((3, 2)))
    code = main(["predict", "--model", str(workdir / "model.json"), "--input", str(tmp_path / "bad.csv"),
                 "--output", str(tmp_path / "p.csv")])
    assert code == 2
    assert "'x2'" in capsys.readouterr().err


def test_stress_levels(workdir):
    out = workdir / "stress.csv"
    assert main(["stress", "--model", str(workdir / "model.json"), "--kappa", "x2=0.9,0.95,0.99",
                 "--output", str(out)]) == 0
    header, rows = _read_csv(out)
    assert header == ["kappa_x2", "kappa_x1", "level0.5"]
    assert rows.shape == (3, 3)
    np.testing.assert_array_equal(rows[:, 1], 0.5)
    assert np.all(np.diff(rows[:, 2]) >= 0.0)
    raw_out = workdir / "stress_raw.csv"
    assert main(["stress", "--model", str(workdir / "model.json"), "--kappa", "x2=0.9", "--raw-scale",
                 "--output", str(raw_out)]) == 0
    header, raw_rows = _read_csv(raw_out)
    assert header[-1] == "q0.5"
    model = model_io.load_model(workdir / "model.json")
    assert raw_rows[0, -1] == pytest.approx(model.response_margin.ppf(rows[0, 2]), abs=1e-12)


def test_stress_independence_model(tmp_path):
    raw = np.random.default_rng(3).standard_normal((300, 2))
    _write_csv(tmp_path / "d.csv", ["y", "x"], raw)
    main(["fit", "--input", str(tmp_path / "d.csv"), "--response", "y", "--output", str(tmp_path / "m.json")])
    assert main(["stress", "--model", str(tmp_path / "m.json"), "--kappa", "x=0.5", "--output",
                 str(tmp_path / "s.csv")]) == 0
    _, rows = _read_csv(tmp_path / "s.csv")
    assert rows[0, -1] == 0.5


@pytest.mark.parametrize("kappa", ["x2=1.0", "x2=0", "x2", "x2=abc", "nope=0.9"])
def test_stress_bad_kappa(workdir, tmp_path, kappa):
    assert main(["stress", "--model", str(workdir / "model.json"), "--kappa", kappa,
                 "--output", str(tmp_path / "s.csv")]) == 2


def test_input_errors(tmp_path, capsys):
    out = str(tmp_path / "m.json")
    assert main(["fit", "--input", str(tmp_path / "none.csv"), "--response", "y", "--output", out]) == 2
    (tmp_path / "blank.csv").write_text("y,x\n1,2\n3,\n")
    assert main(["fit", "--input", str(tmp_path / "blank.csv"), "--response", "y", "--output", out]) == 2
    assert "row 3" in capsys.readouterr().err
    (tmp_path / "text.csv").write_text("y,x\n1,2\n3,abc\n")
    assert main(["fit", "--input", str(tmp_path / "text.csv"), "--response", "y", "--output", out]) == 2
    _write_csv(tmp_path / "ok.csv", ["a", "b"], np.zeros((40, 2)))
    assert main(["fit", "--input", str(tmp_path / "ok.csv"), "--response", "y", "--output", out]) == 2
    assert main(["predict", "--model", str(tmp_path / "none.json"), "--input", str(tmp_path / "ok.csv"),
                 "--output", out]) == 2
    assert main(["fit"]) == 2


def test_read_table_delimiter(tmp_path):
    _write_csv(tmp_path / "d.tsv", ["a", "b"], [[1.5, 2.0], [3.0, -4.0]], delimiter="\t")
    names, data = read_table(tmp_path / "d.tsv", "\t")
    assert names == ["a", "b"]
    np.testing.assert_array_equal(data, [[1.5, 2.0], [3.0, -4.0]])


def test_simulate_smoke_and_determinism(tmp_path):
    args = ["simulate", "--scenario", "C3", "--margins", "m1", "--ntrain", "300", "--reps", "10", "--seed", "5"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--output", str(a)]) == 0
    assert main(args + ["--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(a.open()))
    dvqr = [r for r in rows if r["method"] == "DVQR"][0]
    assert np.isfinite(float(dvqr["mise"])) and dvqr["parameter"] == "delta1"


def test_simulate_json(tmp_path):
    out = tmp_path / "r.json"
    assert main(["simulate", "--scenario", "m5", "--param", "0.5", "--ntrain", "100", "--reps", "1",
                 "--timing", "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert {r["method"] for r in doc["rows"]} == {"DVQR", "LQR"}
    assert all(r["seconds"] >= 0.0 for r in doc["rows"])


def test_simulate_config_errors(tmp_path):
    out = str(tmp_path / "r.csv")
    assert main(["simulate", "--scenario", "x9", "--output", out]) == 2
    assert main(["simulate", "--scenario", "c3", "--param", "-2", "--output", out]) == 2
    assert main(["simulate", "--scenario", "c3", "--ntrain", "10", "--output", out]) == 2
    assert main(["simulate", "--scenario", "c3", "--alpha", "1.5", "--output", out]) == 2
