"""Simulation scenarios, the linear quantile regression baseline, MISE/RMISE
studies and tick-loss backtests."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats

from . import oracles
from .dvine import fit_quantreg, predict_quantile

log = logging.getLogger(__name__)

KINDS = ("C3", "t5", "M5")
METHODS = ("DVQR", "LQR")
MISE_COLUMNS = ("scenario", "margins", "parameter", "n_train", "alpha", "method", "mise", "rmise", "seconds")
BACKTEST_COLUMNS = ("method", "alpha", "n_train", "n_eval", "tick_loss", "seconds")

C3_PARAMS = {"delta1": 0.86, "delta2": 4.67}
T5_DF = 3.0
T5_PARAMS = {
    "R1": np.array([
        [1.0, 0.6, 0.5, 0.5, 0.4],
        [0.6, 1.0, 0.5, 0.5, 0.5],
        [0.5, 0.5, 1.0, 0.5, 0.5],
        [0.5, 0.5, 0.5, 1.0, 0.5],
        [0.4, 0.5, 0.5, 0.5, 1.0],
    ]),
    "R2": np.array([
        [1.0, 0.27, 0.74, 0.72, 0.41],
        [0.27, 1.0, 0.28, 0.29, 0.27],
        [0.74, 0.28, 1.0, 0.74, 0.42],
        [0.72, 0.29, 0.74, 1.0, 0.40],
        [0.41, 0.27, 0.42, 0.40, 1.0],
    ]),
}
M5_PARAMS = {"sigma1": 0.1, "sigma2": 1.0}
M5_COV = 0.5 ** np.abs(np.subtract.outer(np.arange(4), np.arange(4)))


@lru_cache(maxsize=None)
def margin_set(name, d):
    """Margins ``(Y, X_1, ..., X_d)`` of set ``m1`` or ``m2``."""
    if name == "m1":
        y, a, b = oracles.normal_margin(0.0, 1.0), oracles.t_margin(4.0), oracles.normal_margin(1.0, 4.0)
    elif name == "m2":
        y = oracles.skew_margin(oracles.SkewSpec(0.0, 1.0, 2.0, df=4.0))
        a = oracles.skew_margin(oracles.SkewSpec(-2.0, 0.5, 3.0))
        b = oracles.skew_margin(oracles.SkewSpec(1.0, 2.0, 5.0, df=3.0))
    else:
        raise ValueError(f"unknown margin set {name!r}; expected 'm1' or 'm2'")
    xs = [a, b] * ((d + 1) // 2)
    return (y,) + tuple(xs[:d])


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation cell.

    ``param`` is a Clayton parameter (C3), ``'R1'``/``'R2'`` (t5) or a noise
    level (M5); named presets ``delta1``, ``delta2``, ``sigma1``, ``sigma2``
    are accepted too.  ``margins`` is ignored for M5.
    """

    kind: str = "C3"
    param: object = "delta1"
    margins: str = "m1"
    n_train: int = 300
    alphas: tuple = (0.5,)
    reps: int = 10

    def __post_init__(self):
        kind = {"c3": "C3", "t5": "t5", "m5": "M5"}.get(str(self.kind).lower())
        if kind is None:
            raise ValueError(f"unknown scenario {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "margins", str(self.margins).lower())
        if kind != "M5" and self.margins not in ("m1", "m2"):
            raise ValueError(f"unknown margin set {self.margins!r}; expected 'm1' or 'm2'")
        object.__setattr__(self, "alphas", tuple(float(a) for a in np.atleast_1d(self.alphas)))
        if any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ValueError("alpha levels must lie strictly inside (0, 1)")
        if self.n_train < 50:
            raise ValueError(f"n_train must be at least 50, got {self.n_train}")
        if self.reps < 1:
            raise ValueError("at least one replication is required")
        self.value  # validates the parameter

    @property
    def value(self):
        p = self.param
        if self.kind == "C3":
            v = C3_PARAMS.get(p, p) if isinstance(p, str) else p
            v = float(v)
            if not v > 0.0:
                raise ValueError(f"Clayton parameter must be positive, got {v}")
            return v
        if self.kind == "t5":
            if isinstance(p, str) and p.upper() in T5_PARAMS:
                return T5_PARAMS[p.upper()]
            r = np.asarray(p, dtype=float)
            if r.shape != (5, 5):
                raise ValueError(f"t5 parameter must be 'R1', 'R2' or a 5x5 matrix, got {p!r}")
            return r
        v = float(M5_PARAMS.get(p, p) if isinstance(p, str) else p)
        if v < 0.0:
            raise ValueError(f"noise level must be non-negative, got {v}")
        return v

    @property
    def label(self):
        if isinstance(self.param, str):
            return self.param
        return f"{float(self.param):g}" if np.ndim(self.param) == 0 else "custom"

    @property
    def d(self):
        return {"C3": 2, "t5": 4, "M5": 4}[self.kind]

    @property
    def n_eval(self):
        return self.n_train // 2


def m5_surface(x):
    x = np.atleast_2d(x)
    return np.sqrt(np.abs(2.0 * x[:, 0] - x[:, 1] + 0.5)) + (-0.5 * x[:, 2] + 1.0) * (0.1 * x[:, 3] ** 3)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Training set (response in column 0), evaluation covariates and the truth."""

    spec: ScenarioSpec
    train: np.ndarray
    eval_x: np.ndarray
    eval_u: np.ndarray | None = field(default=None, repr=False)

    @property
    def names(self):
        return ["y"] + [f"x{j + 1}" for j in range(self.spec.d)]

    def truth(self, alpha, x=None):
        """True conditional alpha-quantile at ``x`` (default: the evaluation set)."""
        spec = self.spec
        alpha = float(alpha)
        if x is None:
            x, u = self.eval_x, self.eval_u
        else:
            x = np.atleast_2d(np.asarray(x, dtype=float))
            u = None
        if spec.kind == "M5":
            return m5_surface(x) + spec.value * special.ndtri(alpha)
        margins = margin_set(spec.margins, spec.d)
        if u is None:
            u = np.column_stack([margins[j + 1].cdf(x[:, j]) for j in range(spec.d)])
        if spec.kind == "C3":
            level = oracles.clayton3_cond_quantile(spec.value, alpha, u[:, 0], u[:, 1])
        else:
            z = special.stdtrit(T5_DF, u)
            mvt = oracles.MvtSpec(np.zeros(5), spec.value, T5_DF)
            level = special.stdtr(T5_DF, oracles.t_cond_quantile(mvt, alpha, z))
        level = np.clip(level, 1e-300, 1.0 - 1e-16)
        return np.asarray(margins[0].ppf(level), dtype=float)


def _copula_draw(spec, n, rng):
    if spec.kind == "C3":
        return oracles.sample_clayton3(spec.value, n, rng)
    z = oracles.sample_mvt(oracles.MvtSpec(np.zeros(5), spec.value, T5_DF), n, rng)
    return special.stdtr(T5_DF, z)


def replication_seeds(seed, reps):
    """Independent per-replication seeds split off a master seed."""
    return np.random.SeedSequence(seed).spawn(reps)


def gen_scenario(spec, replication=0, seed=0):
    """Simulate training and evaluation data for one replication."""
    if not 0 <= replication < spec.reps:
        raise ValueError(f"replication {replication} outside 0..{spec.reps - 1}")
    rng = np.random.default_rng(replication_seeds(seed, spec.reps)[replication])
    n_tr, n_ev = spec.n_train, spec.n_eval
    if spec.kind == "M5":
        x = oracles.sample_mvn(oracles.MvnSpec(np.zeros(4), M5_COV), n_tr + n_ev, rng)
        y = m5_surface(x[:n_tr]) + spec.value * rng.standard_normal(n_tr)
        return Scenario(spec, np.column_stack([y, x[:n_tr]]), x[n_tr:])
    u = _copula_draw(spec, n_tr + n_ev, rng)
    u = np.clip(u, 1e-16, 1.0 - 1e-16)
    margins = margin_set(spec.margins, spec.d)
    cols = [np.asarray(margins[j].ppf(u[:, j]), dtype=float) for j in range(spec.d + 1)]
    data = np.column_stack(cols)
    return Scenario(spec, data[:n_tr], data[n_tr:, 1:], u[n_tr:, 1:])


# linear quantile regression


@dataclass(frozen=True)
class LqrModel:
    """Linear quantile regression coefficients, intercept first."""

    beta: np.ndarray
    alpha: float
    iterations: int = 0

    def predict(self, x):
        return lqr_predict(self, x)


def check_objective(r, alpha):
    r = np.asarray(r, dtype=float)
    return float(np.sum(r * (alpha - (r < 0.0))))


def _design(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.column_stack([np.ones(x.shape[0]), x])


def lqr_fit(x, y, alpha, maxiter=200, tol=1e-12):
    """Minimize the check loss by majorize-minimize reweighted least squares.

    Each iteration solves ``X'WX b = X'Wy + (2 alpha - 1) X'1`` with
    ``W = diag(1 / (eps + |r|))`` while the smoothing ``eps`` decreases
    geometrically to ``1e-6`` times the residual scale.  A final polish
    interpolates the ``p`` observations with the smallest residuals, which
    recovers the exact vertex solution when the iteration has settled on it.
    """
    X = _design(x)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.size != n:
        raise ValueError(f"{n} design rows but {y.size} responses")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    if n <= p:
        raise ValueError(f"need more observations ({n}) than coefficients ({p})")
    if np.linalg.matrix_rank(X) < p:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    r = y - X @ beta
    # start from OLS shifted to the alpha-quantile of its residuals
    beta[0] += np.quantile(r, alpha)
    r = y - X @ beta
    scale = max(np.mean(np.abs(r)), 1e-12 * max(1.0, np.abs(y).max()))
    eps, eps_min = 0.1 * scale, 1e-6 * scale
    obj = check_objective(r, alpha)
    shift = (2.0 * alpha - 1.0) * X.sum(axis=0)
    it = 0
    for it in range(1, maxiter + 1):
        w = 1.0 / (eps + np.abs(r))
        xw = X * w[:, None]
        beta_new = np.linalg.solve(X.T @ xw, xw.T @ y + shift)
        r = y - X @ beta_new
        new_obj = check_objective(r, alpha)
        change = abs(obj - new_obj)
        beta, obj = beta_new, new_obj
        if eps <= eps_min and change <= tol * max(1.0, abs(obj)):
            break
        eps = max(0.5 * eps, eps_min)
    beta, obj = _vertex_polish(X, y, alpha, beta, obj)
    return LqrModel(beta, float(alpha), it)


def _initial_basis(X, r):
    # p rows with the smallest residuals that give an invertible square system
    p = X.shape[1]
    basis = []
    for i in np.argsort(np.abs(r)):
        trial = basis + [int(i)]
        if np.linalg.matrix_rank(X[trial]) == len(trial):
            basis = trial
            if len(basis) == p:
                return basis
    raise np.linalg.LinAlgError("design matrix is rank deficient")


def _vertex_polish(X, y, alpha, beta, obj, max_pivots=None):
    """Exact finish: descend along vertex edges of the piecewise-linear objective.

    Starting at the vertex through the rows with the smallest residuals, each
    pivot releases one interpolated row in the direction of steepest descent
    and moves to the minimizing breakpoint, where another row enters.  The
    walk stops at a vertex with no descending edge, which is optimal.
    """
    n, p = X.shape
    basis = _initial_basis(X, y - X @ beta)
    max_pivots = 10 * n if max_pivots is None else max_pivots
    b = np.linalg.solve(X[basis], y[basis])
    start_obj = obj
    obj = check_objective(y - X @ b, alpha)
    for _ in range(max_pivots):
        r = y - X @ b
        r[basis] = 0.0
        inv = np.linalg.inv(X[basis])
        G = X @ inv  # column j: change of X b per unit step along edge j
        nonbasic = np.ones(n, dtype=bool)
        nonbasic[basis] = False
        rn = r[nonbasic]
        slope_nb = np.where(rn > 0.0, alpha, np.where(rn < 0.0, alpha - 1.0, np.nan))
        best = None
        for j in range(p):
            g = G[nonbasic, j]
            for s in (1.0, -1.0):
                # residuals move as r - t * s * g for t > 0; the released row goes to -s t
                gs = s * g
                zero = np.isnan(slope_nb)
                deriv = -np.sum(np.where(zero, 0.0, slope_nb * gs))
                deriv += np.sum(np.where(zero & (gs < 0.0), alpha * -gs, 0.0))
                deriv += np.sum(np.where(zero & (gs > 0.0), (1.0 - alpha) * gs, 0.0))
                deriv += alpha * -s if s < 0.0 else (1.0 - alpha) * s
                if deriv < -1e-12 * max(1.0, abs(obj)) and (best is None or deriv < best[0]):
                    best = (deriv, j, s)
        if best is None:
            break
        deriv, j, s = best
        gs = s * G[nonbasic, j]
        idx = np.flatnonzero(nonbasic)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_break = np.where(gs != 0.0, r[idx] / gs, -1.0)
        ok = t_break > 0.0
        order = np.argsort(t_break[ok])
        cand, jumps = idx[ok][order], np.abs(gs[ok][order])
        # slope rises by |g_i| at every breakpoint crossed
        slope = deriv + np.cumsum(jumps)
        k = int(np.searchsorted(slope, 0.0, side="left"))
        if k >= cand.size:
            break  # unbounded direction cannot occur for a full-rank design
        entering = int(cand[k])
        basis[j] = entering
        try:
            b_new = np.linalg.solve(X[basis], y[basis])
        except np.linalg.LinAlgError:
            break
        new_obj = check_objective(y - X @ b_new, alpha)
        if new_obj > obj:
            break  # rounding on a degenerate vertex
        b, obj = b_new, new_obj
    return (b, obj) if obj <= start_obj else (beta, start_obj)


def lqr_predict(model, x):
    return _design(x) @ model.beta


def tick_loss(y, q, alpha):
    """Mean check loss ``mean(r (alpha - 1(r < 0)))`` with ``r = y - q``."""
    y = np.asarray(y, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if y.size != q.size:
        raise ValueError(f"length mismatch: {y.size} observations, {q.size} predictions")
    if y.size == 0:
        raise ValueError("empty input")
    return check_objective(y - q, alpha) / y.size


# studies


@dataclass
class StudyReport:
    """Tabular study output with delimiter-separated and JSON renderings."""

    columns: tuple
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name):
        return [row[name] for row in self.rows]

    def lookup(self, **keys):
        """Rows whose fields equal all given keyword values."""
        return [r for r in self.rows if all(r.get(k) == v for k, v in keys.items())]

    def value(self, field_name, **keys):
        rows = self.lookup(**keys)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {keys}")
        return rows[0][field_name]

    def _fmt(self, v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    def to_csv(self, delimiter=","):
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([self._fmt(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self):
        doc = {"columns": list(self.columns), "rows": self.rows, "meta": self.meta}
        return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def _fit_predict_dvqr(sc, alphas):
    model = fit_quantreg(sc.train, sc.names, "y")
    return predict_quantile(model, np.asarray(alphas), sc.eval_x)


def _fit_predict_lqr(sc, alphas):
    out = []
    for a in alphas:
        m = lqr_fit(sc.train[:, 1:], sc.train[:, 0], a)
        out.append(lqr_predict(m, sc.eval_x))
    return np.column_stack(out)


_RUNNERS = {"DVQR": _fit_predict_dvqr, "LQR": _fit_predict_lqr}


def _check_methods(methods):
    methods = tuple(str(m).upper() for m in methods)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown method(s) {bad}; expected a subset of {METHODS}")
    if not methods:
        raise ValueError("at least one method is required")
    return methods


def run_mise_study(spec, methods=METHODS, seed=0, timing=True):
    """Monte Carlo MISE of each method against the true conditional quantiles.

    RMISE divides each method's MISE by the DVQR MISE (blank when DVQR is not
    run).  Failed fits are skipped and counted in ``meta['failures']``.
    ``seconds`` holds total fit-plus-predict time per method, or ``None``
    when ``timing`` is off so that reports are reproducible byte for byte.
    """
    methods = _check_methods(methods)
    alphas = spec.alphas
    sq = {m: [[] for _ in alphas] for m in methods}
    secs = {m: 0.0 for m in methods}
    failures = {m: 0 for m in methods}
    for rep in range(spec.reps):
        sc = gen_scenario(spec, rep, seed)
        truth = np.column_stack([sc.truth(a) for a in alphas])
        for m in methods:
            t0 = time.perf_counter()
            try:
                pred = _RUNNERS[m](sc, alphas)
            except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                failures[m] += 1
                log.warning("replication %d: %s failed: %s", rep, m, exc)
                continue
            secs[m] += time.perf_counter() - t0
            for i in range(len(alphas)):
                sq[m][i].append(float(np.mean((pred[:, i] - truth[:, i]) ** 2)))
    report = StudyReport(MISE_COLUMNS, meta={"seed": seed, "reps": spec.reps, "failures": failures})
    for i, a in enumerate(alphas):
        mise = {m: float(np.mean(sq[m][i])) if sq[m][i] else float("nan") for m in methods}
        for m in methods:
            rmise = mise[m] / mise["DVQR"] if "DVQR" in mise else None
            report.rows.append({
                "scenario": spec.kind,
                "margins": spec.margins if spec.kind != "M5" else "",
                "parameter": spec.label,
                "n_train": spec.n_train,
                "alpha": a,
                "method": m,
                "mise": mise[m],
                "rmise": rmise,
                "seconds": secs[m] if timing else None,
            })
    return report


def oos_backtest(data, names, response, split_index, alphas=(0.01, 0.5), methods=METHODS,
                 seed=0, timing=True):
    """Fit on rows ``[:split_index]``, report tick-loss on the remaining rows.

    Fitting is deterministic, so ``seed`` is only recorded in the report
    metadata for provenance.
    """
    methods = _check_methods(methods)
    data = np.asarray(data, dtype=float)
    names = list(names)
    if response not in names:
        raise KeyError(f"response column {response!r} not found among {names}")
    n = data.shape[0]
    if split_index < 50 or n - split_index < 50:
        raise ValueError(f"split at {split_index} of {n} rows leaves fewer than 50 rows on one side")
    alphas = tuple(float(a) for a in np.atleast_1d(alphas))
    r = names.index(response)
    cov = [j for j in range(len(names)) if j != r]
    train, test = data[:split_index], data[split_index:]
    report = StudyReport(BACKTEST_COLUMNS, meta={"seed": seed, "split_index": split_index})
    for m in methods:
        t0 = time.perf_counter()
        if m == "DVQR":
            model = fit_quantreg(train, names, response)
            pred = predict_quantile(model, np.asarray(alphas), test[:, cov])
        else:
            pred = np.column_stack([
                lqr_predict(lqr_fit(train[:, cov], train[:, r], a), test[:, cov]) for a in alphas
            ])
        elapsed = time.perf_counter() - t0
        for i, a in enumerate(alphas):
            report.rows.append({
                "method": m,
                "alpha": a,
                "n_train": split_index,
                "n_eval": n - split_index,
                "tick_loss": tick_loss(test[:, r], pred[:, i], a),
                "seconds": elapsed if timing else None,
            })
    return report


def t_copula_panel(n, d=3, rho=0.6, df=3.0, margin_df=4.0, seed=0):
    """Synthetic panel with a t-copula and Student-t margins; response first."""
    corr = np.full((d + 1, d + 1), rho)
    np.fill_diagonal(corr, 1.0)
    rng = np.random.default_rng(seed)
    z = oracles.sample_mvt(oracles.MvtSpec(np.zeros(d + 1), corr, df), n, rng)
    return stats.t.ppf(special.stdtr(df, z), margin_df)
