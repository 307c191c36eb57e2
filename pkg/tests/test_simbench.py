import json

import numpy as np
import pytest
from scipy import optimize, special, stats

from dvqr import oracles
from dvqr.simbench import (
    BACKTEST_COLUMNS,
    MISE_COLUMNS,
    ScenarioSpec,
    check_objective,
    gen_scenario,
    lqr_fit,
    lqr_predict,
    m5_surface,
    margin_set,
    oos_backtest,
    replication_seeds,
    run_mise_study,
    t_copula_panel,
    tick_loss,
)


def _lp_objective(x, y, alpha):
    # check-loss minimum as a linear program: r = u - v with u, v >= 0
    X = np.column_stack([np.ones(len(y)), x])
    n, p = X.shape
    c = np.r_[np.zeros(p), alpha * np.ones(n), (1 - alpha) * np.ones(n)]
    A = np.hstack([X, np.eye(n), -np.eye(n)])
    res = optimize.linprog(c, A_eq=A, b_eq=y, bounds=[(None, None)] * p + [(0, None)] * 2 * n,
                           method="highs")
    return res.fun


# scenario specs


def test_scenario_presets():
    assert ScenarioSpec("c3", "delta1").value == 0.86
    assert ScenarioSpec("C3", "delta2").value == 4.67
    assert ScenarioSpec("m5", "sigma2").value == 1.0
    assert ScenarioSpec("t5", "r1").value[0, 1] == 0.6
    assert ScenarioSpec("C3", 1.5).label == "1.5"
    assert ScenarioSpec("C3", n_train=301).n_eval == 150


@pytest.mark.parametrize("kwargs", [
    {"kind": "X9"},
    {"kind": "C3", "param": -1.0},
    {"kind": "t5", "param": "R3"},
    {"kind": "M5", "param": -0.1},
    {"kind": "C3", "margins": "m7"},
    {"kind": "C3", "alphas": (0.5, 1.0)},
    {"kind": "C3", "n_train": 10},
    {"kind": "C3", "reps": 0},
])
def test_scenario_validation(kwargs):
    with pytest.raises(ValueError):
        ScenarioSpec(**kwargs)


def test_margin_sets():
    m1 = margin_set("m1", 4)
    assert [m.name for m in m1] == ["N(0,1)", "t4(0,1)", "N(1,4)", "t4(0,1)", "N(1,4)"]
    m2 = margin_set("m2", 2)
    assert [m.name for m in m2] == ["st4(0,1,2)", "sN(-2,0.5,3)", "st3(1,2,5)"]
    with pytest.raises(ValueError):
        margin_set("m3", 2)


# scenario generation


def test_c3_generation():
    spec = ScenarioSpec("C3", "delta1", "m1", 2000, (0.5,), 1)
    sc = gen_scenario(spec, 0, seed=1)
    assert sc.train.shape == (2000, 3) and sc.eval_x.shape == (1000, 2)
    assert stats.kstest(sc.train[:, 0], "norm").pvalue > 0.01
    tau = stats.kendalltau(sc.train[:, 0], sc.train[:, 1])[0]
    assert tau == pytest.approx(0.86 / 2.86, abs=0.04)


def test_c3_truth_matches_oracle():
    spec = ScenarioSpec("C3", 2.0, "m1", 100, (0.5,), 1)
    sc = gen_scenario(spec, 0, seed=2)
    u = sc.eval_u
    want = special.ndtri(oracles.clayton3_cond_quantile(2.0, 0.3, u[:, 0], u[:, 1]))
    np.testing.assert_allclose(sc.truth(0.3), want, atol=1e-12)
    # truth at explicit covariates goes through the margins
    np.testing.assert_allclose(sc.truth(0.3, sc.eval_x[:5]), want[:5], atol=1e-9)


def test_t5_generation():
    spec = ScenarioSpec("t5", "R1", "m1", 1000, (0.5,), 1)
    sc = gen_scenario(spec, 0, seed=3)
    z = special.stdtrit(3.0, np.column_stack([
        margin_set("m1", 4)[j].cdf(sc.train[:, j]) for j in range(5)]))
    assert np.corrcoef(z[:, 0], z[:, 1])[0, 1] == pytest.approx(0.6, abs=0.05)


def test_t5_truth_at_center():
    spec = ScenarioSpec("t5", "R2", "m1", 100, (0.5,), 1)
    sc = gen_scenario(spec, 0, seed=4)
    # covariates at their medians map to the copula center, where the median is symmetric
    x = np.array([[0.0, 1.0, 0.0, 1.0]])
    assert sc.truth(0.5, x)[0] == pytest.approx(0.0, abs=1e-9)
    assert sc.truth(0.9, x)[0] > sc.truth(0.5, x)[0]


def test_m5_truth():
    spec = ScenarioSpec("M5", 0.0, n_train=100, reps=1)
    sc = gen_scenario(spec, 0, seed=5)
    np.testing.assert_array_equal(sc.truth(0.5), m5_surface(sc.eval_x))
    np.testing.assert_array_equal(sc.truth(0.1), sc.truth(0.9))
    np.testing.assert_allclose(sc.train[:, 0], m5_surface(sc.train[:, 1:]), atol=0)
    noisy = gen_scenario(ScenarioSpec("M5", "sigma1", n_train=100, reps=1), 0, seed=5)
    np.testing.assert_allclose(noisy.truth(0.975) - m5_surface(noisy.eval_x), 0.1 * 1.959963984540054)


def test_m2_margins_generation():
    spec = ScenarioSpec("C3", "delta1", "m2", 500, (0.5,), 1)
    sc = gen_scenario(spec, 0, seed=6)
    y = margin_set("m2", 2)[0]
    assert stats.kstest(sc.train[:, 0], y.cdf).pvalue > 0.01
    assert np.all(np.isfinite(sc.truth(0.5)))


def test_replications_independent_and_reproducible():
    spec = ScenarioSpec("C3", "delta1", "m1", 100, (0.5,), 3)
    a, b = gen_scenario(spec, 1, seed=7), gen_scenario(spec, 1, seed=7)
    np.testing.assert_array_equal(a.train, b.train)
    assert not np.array_equal(a.train, gen_scenario(spec, 2, seed=7).train)
    assert len(replication_seeds(7, 3)) == 3
    with pytest.raises(ValueError):
        gen_scenario(spec, 3, seed=7)


# linear quantile regression


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.95])
def test_lqr_exact_line(alpha):
    x = np.linspace(-2.0, 3.0, 40)
    m = lqr_fit(x, 2.0 * x + 1.0, alpha)
    np.testing.assert_allclose(m.beta, [1.0, 2.0], atol=1e-4)
    np.testing.assert_allclose(lqr_predict(m, x), 2.0 * x + 1.0, atol=1e-4)


def test_lqr_gaussian_noise_quantile():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(2000)
    y = x + rng.standard_normal(2000)
    b0, b1 = lqr_fit(x, y, 0.95).beta
    assert b0 == pytest.approx(1.6448536269514722, abs=0.1)
    assert b1 == pytest.approx(1.0, abs=0.05)


def test_lqr_beats_ols_at_median():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((300, 2))
    y = x @ [1.0, -0.5] + rng.standard_t(2, 300)
    ols = np.linalg.lstsq(np.column_stack([np.ones(300), x]), y, rcond=None)[0]
    m = lqr_fit(x, y, 0.5)
    assert check_objective(y - lqr_predict(m, x), 0.5) <= check_objective(y - np.column_stack([np.ones(300), x]) @ ols, 0.5)


def test_lqr_matches_linear_program():
    rng = np.random.default_rng(10)
    for _ in range(40):
        n, d = int(rng.integers(60, 400)), int(rng.integers(1, 5))
        x = rng.standard_normal((n, d))
        y = x @ rng.standard_normal(d) + rng.standard_t(3, n)
        a = float(rng.choice([0.01, 0.05, 0.5, 0.9, 0.99]))
        got = check_objective(y - lqr_predict(lqr_fit(x, y, a), x), a)
        ref = _lp_objective(x, y, a)
        assert got <= ref * (1 + 1e-6)


def test_lqr_errors():
    x = np.linspace(0, 1, 20)
    with pytest.raises(np.linalg.LinAlgError):
        lqr_fit(np.column_stack([x, 2 * x]), x, 0.5)
    with pytest.raises(ValueError):
        lqr_fit(x[:2], x[:2], 0.5)
    with pytest.raises(ValueError):
        lqr_fit(x, x, 1.0)
    with pytest.raises(ValueError):
        lqr_fit(x, x[:-1], 0.5)


# tick loss


def test_tick_loss_values():
    y = np.array([0.3, -1.2, 4.0])
    assert tick_loss(y, y, 0.3) == 0.0
    assert tick_loss([1.0, -1.0], [0.0, 0.0], 0.5) == 0.5
    assert tick_loss([1.0], [0.0], 0.99) == pytest.approx(0.99)


def test_tick_loss_shift_invariant():
    rng = np.random.default_rng(11)
    y, q = rng.standard_normal(50), rng.standard_normal(50)
    assert tick_loss(y + 7.5, q + 7.5, 0.2) == pytest.approx(tick_loss(y, q, 0.2), abs=1e-12)
    assert tick_loss(y, q, 0.2) >= 0.0


def test_tick_loss_errors():
    with pytest.raises(ValueError):
        tick_loss([1.0, 2.0], [1.0], 0.5)
    with pytest.raises(ValueError):
        tick_loss([], [], 0.5)


# studies


@pytest.fixture(scope="module")
def small_study():
    spec = ScenarioSpec("C3", "delta1", "m1", 150, (0.1, 0.5), 2)
    return run_mise_study(spec, seed=12, timing=False)


def test_mise_report_shape(small_study):
    assert small_study.columns == MISE_COLUMNS
    assert len(small_study.rows) == 4
    for a in (0.1, 0.5):
        assert small_study.value("rmise", method="DVQR", alpha=a) == 1.0
        assert small_study.value("mise", method="LQR", alpha=a) >= 0.0
    assert small_study.column("seconds") == [None] * 4
    assert small_study.meta["failures"] == {"DVQR": 0, "LQR": 0}


def test_mise_report_renderings(small_study):
    text = small_study.to_csv()
    lines = text.splitlines()
    assert lines[0] == ",".join(MISE_COLUMNS)
    assert len(lines) == 5 and lines[1].endswith(",")
    doc = json.loads(small_study.to_json())
    assert doc["columns"] == list(MISE_COLUMNS) and len(doc["rows"]) == 4
    assert small_study.to_csv(";").splitlines()[0].count(";") == len(MISE_COLUMNS) - 1


def test_mise_deterministic(small_study):
    spec = ScenarioSpec("C3", "delta1", "m1", 150, (0.1, 0.5), 2)
    assert run_mise_study(spec, seed=12, timing=False).to_csv() == small_study.to_csv()


def test_mise_of_truth_is_zero():
    spec = ScenarioSpec("M5", "sigma1", n_train=100, reps=1)
    sc = gen_scenario(spec, 0, seed=13)
    assert np.mean((sc.truth(0.5) - sc.truth(0.5)) ** 2) == 0.0


def test_mise_lqr_only_has_blank_rmise():
    spec = ScenarioSpec("M5", "sigma2", n_train=100, reps=1)
    report = run_mise_study(spec, methods=("lqr",), seed=0, timing=True)
    assert report.rows[0]["rmise"] is None and report.rows[0]["seconds"] >= 0.0
    with pytest.raises(ValueError):
        run_mise_study(spec, methods=("BAQR",))
    with pytest.raises(KeyError):
        report.value("mise", method="DVQR")


def test_backtest_tail_advantage():
    wins = 0
    for seed in range(10):
        data = t_copula_panel(600, seed=seed)
        report = oos_backtest(data, ["y", "a", "b", "c"], "y", 400, alphas=(0.01,), seed=seed, timing=False)
        wins += report.value("tick_loss", method="DVQR") < report.value("tick_loss", method="LQR")
    assert wins >= 6


def test_backtest_median_parity():
    data = t_copula_panel(1000, seed=21)
    report = oos_backtest(data, ["y", "a", "b", "c"], "y", 600, alphas=(0.5,), timing=False)
    d, q = report.value("tick_loss", method="DVQR"), report.value("tick_loss", method="LQR")
    assert abs(d - q) <= 0.1 * max(d, q)


def test_backtest_report_and_errors():
    data = t_copula_panel(200, seed=1)
    names = ["y", "a", "b", "c"]
    a = oos_backtest(data, names, "y", 120, timing=False)
    assert a.columns == BACKTEST_COLUMNS and len(a.rows) == 4
    assert a.to_csv() == oos_backtest(data, names, "y", 120, timing=False).to_csv()
    with pytest.raises(ValueError):
        oos_backtest(data, names, "y", 170)
    with pytest.raises(KeyError):
        oos_backtest(data, names, "z", 120)
