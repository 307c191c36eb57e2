"""Regression D-vines: conditional distribution and quantile of the response
given covariates, conditional log-likelihood, and the forward selection that
grows the vine one covariate at a time.

Positions in a vine with order ``(l_1, ..., l_k)`` are numbered ``0`` (the
response ``V``) through ``k``; tree ``t`` (1-based) joins positions ``e`` and
``e + t`` through ``pairs[t - 1][e]``.  The first argument of every pair-copula
is the lower position.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bicop import BiCop, Criterion, Family, criterion_value, select_bicop
from .margins import KernelMargin, pit_transform

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DVineRegression:
    """D-vine with order ``V - U[order[0]] - ... - U[order[-1]]``.

    ``order`` holds covariate column indices.  ``cll_path`` records the
    criterion after each accepted covariate (log-likelihood for LL, the
    corrected value for AIC/BIC) and ``ll_path`` the uncorrected
    conditional log-likelihood.
    """

    order: tuple = ()
    pairs: tuple = ()
    criterion: Criterion = Criterion.AIC
    cll_path: tuple = ()
    ll_path: tuple = ()

    def __post_init__(self):
        order = tuple(int(j) for j in self.order)
        pairs = tuple(tuple(tree) for tree in self.pairs)
        k = len(order)
        if len(set(order)) != k:
            raise ValueError(f"covariate order has repeated indices: {order}")
        if len(pairs) != k or any(len(pairs[t]) != k - t for t in range(k)):
            raise ValueError("pairs must be triangular: tree t holds k + 1 - t pair-copulas")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        object.__setattr__(self, "cll_path", tuple(float(c) for c in self.cll_path))
        object.__setattr__(self, "ll_path", tuple(float(c) for c in self.ll_path))

    @property
    def k(self):
        return len(self.order)

    @property
    def n_params(self):
        return sum(c.n_params for tree in self.pairs for c in tree)

    @property
    def spine(self):
        """Pair-copulas containing the response, tree by tree."""
        return [tree[0] for tree in self.pairs]


def _ordered_covariates(vine, u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[None, :] if vine.k else u.reshape(-1, 0)
    if u.shape[1] != vine.k:
        raise ValueError(f"expected {vine.k} covariate value(s) per row in vine order, got {u.shape[1]}")
    return u


def covariate_transforms(vine, u):
    """``F(u_t | u_1, ..., u_{t-1})`` for vine positions ``t = 1..k``.

    ``u`` is ``(n, k)`` with columns already in vine order.  Returns a list
    whose entry ``t - 1`` is the conditioning argument of the spine copula
    in tree ``t``.
    """
    u = _ordered_covariates(vine, u)
    return [b for b, _ in covariate_transforms_pair(vine, u, 1.0 - u)]


def covariate_transforms_pair(vine, u, ub):
    """:func:`covariate_transforms` carrying complements: a list of ``(b, 1 - b)``."""
    u = _ordered_covariates(vine, u)
    ub = np.asarray(ub, dtype=float).reshape(u.shape)
    k = vine.k
    if k == 0:
        return []
    # fwd[i] = F(u_i | u_{i+1..i+s}), bwd[j] = F(u_j | u_{j-s..j-1}) at level s
    fwd = {i: (u[:, i - 1], ub[:, i - 1]) for i in range(1, k + 1)}
    bwd = dict(fwd)
    out = [fwd[1]]
    for s in range(1, k):
        new_fwd, new_bwd = {}, {}
        for i in range(1, k - s + 1):
            cop = vine.pairs[s - 1][i]
            a, b = fwd[i], bwd[i + s]
            new_fwd[i] = cop.hfunc2_pair(*a, *b)
            new_bwd[i + s] = cop.hfunc1_pair(*a, *b)
        fwd, bwd = new_fwd, new_bwd
        out.append(bwd[s + 1])
    return out


def cond_cdf(v, u, vine):
    """``C(v | u)`` of the response given covariates (vine order)."""
    b = covariate_transforms(vine, u)
    a = np.asarray(v, dtype=float)
    for t, cop in enumerate(vine.spine):
        a = cop.hfunc2(a, b[t])
    return a


def cond_quantile(alpha, u, vine):
    """Conditional copula quantile of the response; inverse of :func:`cond_cdf` in ``v``.

    ``alpha`` may be a scalar, a length-n vector, or broadcast against the
    rows of ``u`` with shape ``(n, m)`` for ``m`` levels per row.
    """
    u = _ordered_covariates(vine, u)
    return cond_quantile_pair(alpha, u, 1.0 - u, vine)[0]


def cond_quantile_pair(alpha, u, ub, vine):
    """:func:`cond_quantile` as ``(level, 1 - level)`` from covariates with complements."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any((alpha <= 0.0) | (alpha >= 1.0)):
        raise ValueError("alpha must lie strictly inside (0, 1)")
    b = covariate_transforms_pair(vine, u, ub)
    a, ac = alpha, 1.0 - alpha
    for t in range(vine.k - 1, -1, -1):
        bt, bct = (c[:, None] if a.ndim == 2 else c for c in b[t])
        a, ac = vine.pairs[t][0].hinv2_pair(a, ac, bt, bct)
    if vine.k == 0:
        a, ac = np.broadcast_arrays(a, ac)
    return a, ac


def conditional_loglik(vine, v, u):
    """Per-observation log conditional density of the response."""
    b = covariate_transforms(vine, u)
    a = np.asarray(v, dtype=float)
    total = np.zeros_like(a)
    for t, cop in enumerate(vine.spine):
        total = total + cop.logpdf(a, b[t])
        a = cop.hfunc2(a, b[t])
    return total


def cll(vine, data, criterion=None):
    """Conditional log-likelihood of ``vine`` on pseudo data.

    With ``criterion`` LL (or None) the plain sum of log conditional
    densities is returned; AIC/BIC give ``-2 cll + penalty * n_params``.
    """
    u = data.U[:, list(vine.order)] if vine.k else np.empty((data.n, 0))
    ll = float(np.sum(conditional_loglik(vine, data.v, u)))
    if criterion is None or Criterion(criterion) is Criterion.LL:
        return ll
    return criterion_value(ll, vine.n_params, data.n, criterion)


def _report(value, criterion):
    # criterion on its natural scale: cll for LL, the corrected value otherwise
    return -value if criterion is Criterion.LL else value


@dataclass
class _Extension:
    index: int
    edges: list
    right_fwd: list
    loglik_gain: float
    n_params: int


def _extend(right_fwd, u_new, index, pair_criterion, indep_level):
    """Fit the edges that attach ``u_new`` at the end of the current order.

    ``right_fwd[s]`` is ``F(x_{k-1-s} | x_{k-s..k-1})`` for the current last
    position ``k - 1``; the final entry is the response's conditional PIT.
    """
    k = len(right_fwd)
    edges, new_fwd = [], [u_new]
    b = u_new
    gain = 0.0
    for t in range(1, k + 1):
        a = right_fwd[t - 1]
        cop = select_bicop(np.column_stack([a, b]), pair_criterion, indep_level)
        edges.append(cop)
        new_fwd.append(cop.hfunc2(a, b))
        if t == k:
            gain = float(np.sum(cop.logpdf(a, b)))
        else:
            b = cop.hfunc1(a, b)
    return _Extension(index, edges, new_fwd, gain, sum(c.n_params for c in edges))


def fit_dvine_regression(data, criterion=Criterion.AIC, indep_level=0.05,
                         pair_criterion=Criterion.AIC, max_covariates=None):
    """Sequentially grow a regression D-vine on pseudo data.

    At each step every unused covariate is tried as the new last node; its
    edges are fitted with frozen lower trees and the candidate with the best
    criterion is kept if it strictly improves on the current model.  Ties go
    to the lowest covariate index.
    """
    criterion = Criterion(criterion)
    n, d = data.n, data.d
    if n < 30:
        raise ValueError(f"at least 30 observations are needed, got {n}")
    order, trees = [], []
    right_fwd = [data.v]
    ll, n_par = 0.0, 0
    current = criterion_value(0.0, 0, n, criterion)
    cll_path, ll_path = [], []
    remaining = list(range(d))
    limit = d if max_covariates is None else min(d, max_covariates)
    while remaining and len(order) < limit:
        best, best_val = None, np.inf
        for j in remaining:
            ext = _extend(right_fwd, data.U[:, j], j, pair_criterion, indep_level)
            val = criterion_value(ll + ext.loglik_gain, n_par + ext.n_params, n, criterion)
            log.debug("step %d candidate %d: criterion %.4f", len(order) + 1, j, val)
            if val < best_val:
                best, best_val = ext, val
        if best is None or not best_val < current:
            break
        order.append(best.index)
        remaining.remove(best.index)
        for t, cop in enumerate(best.edges[:-1]):
            trees[t].append(cop)
        trees.append([best.edges[-1]])
        # positions shift: the tree-t edge now ends at the new last node
        right_fwd = best.right_fwd
        ll += best.loglik_gain
        n_par += best.n_params
        current = best_val
        cll_path.append(_report(best_val, criterion))
        ll_path.append(ll)
    return DVineRegression(tuple(order), tuple(tuple(t) for t in trees), criterion,
                           tuple(cll_path), tuple(ll_path))


@dataclass(frozen=True, eq=False)
class QuantRegModel:
    """Kernel margins plus a regression D-vine: the fitted quantile predictor."""

    response: str
    covariates: tuple
    response_margin: KernelMargin
    covariate_margins: tuple
    vine: DVineRegression
    indep_level: float = 0.05
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "covariate_margins", tuple(self.covariate_margins))
        if len(self.covariates) != len(self.covariate_margins):
            raise ValueError("one margin per covariate is required")
        if any(j >= len(self.covariates) for j in self.vine.order):
            raise ValueError("vine order refers to a covariate without a margin")

    @property
    def selected(self):
        """Names of the selected covariates in vine order."""
        return [self.covariates[j] for j in self.vine.order]

    def order_label(self):
        return "-".join(["V"] + [f"U{j + 1}" for j in self.vine.order])

    def pit(self, x):
        """PIT of covariate rows through their margins, returned in vine order."""
        return self.pit_pair(x)[0]

    def pit_pair(self, x):
        """:meth:`pit` together with the exact complements ``1 - u`` from the survival functions."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != len(self.covariates):
            raise ValueError(f"expected {len(self.covariates)} covariate columns, got {x.shape[1]}")
        m = self.covariate_margins
        u = [m[j].cdf(x[:, j]) for j in self.vine.order]
        ub = [m[j].sf(x[:, j]) for j in self.vine.order]
        if not u:
            empty = np.empty((x.shape[0], 0))
            return empty, empty
        return np.column_stack(u), np.column_stack(ub)

    def predict(self, alpha, x):
        return predict_quantile(self, alpha, x)


def fit_quantreg(raw, names, response, criterion=Criterion.AIC, indep_level=0.05):
    """Two-step fit: kernel margins, then the regression D-vine on pseudo data."""
    pseudo, margins = pit_transform(raw, names, response)
    vine = fit_dvine_regression(pseudo, criterion, indep_level)
    names = list(names)
    r = names.index(response)
    cov_margins = tuple(m for j, m in enumerate(margins) if j != r)
    return QuantRegModel(response, pseudo.covariates, margins[r], cov_margins, vine, indep_level)


def predict_quantile(model, alpha, x):
    """Predicted conditional quantiles on the response scale.

    ``x`` holds all covariate columns of the model (one row per query).
    Scalar ``alpha`` gives shape ``(n,)``; a vector of levels gives
    ``(n, len(alpha))``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    alpha_arr = np.asarray(alpha, dtype=float)
    u, ub = model.pit_pair(x)
    n = x.shape[0]
    if alpha_arr.ndim == 0:
        a = np.full(n, float(alpha_arr))
    else:
        a = np.broadcast_to(alpha_arr, (n, alpha_arr.size)).copy()
    level, comp = cond_quantile_pair(a, u, ub, model.vine)
    return model.response_margin.ppf_pair(np.clip(level, 1e-300, 1.0), np.clip(comp, 1e-300, 1.0))


def stress_predict(model_or_vine, kappa, alpha=0.5):
    """Response quantile level (copula scale) with covariates pinned at PIT levels ``kappa``.

    ``kappa`` follows the vine order; a 2-d array gives one scenario per row.
    """
    vine = model_or_vine.vine if isinstance(model_or_vine, QuantRegModel) else model_or_vine
    kappa = np.atleast_2d(np.asarray(kappa, dtype=float))
    if np.any((kappa <= 0.0) | (kappa >= 1.0)):
        raise ValueError("stress levels must lie strictly inside (0, 1)")
    out = cond_quantile(np.full(kappa.shape[0], float(alpha)), kappa, vine)
    return out[0] if out.size == 1 else out


def independence_vine(k):
    """D-vine over ``k`` covariates whose pair-copulas are all independence."""
    ind = BiCop(Family.INDEP)
    return DVineRegression(tuple(range(k)), tuple(tuple(ind for _ in range(k - t)) for t in range(k)))
