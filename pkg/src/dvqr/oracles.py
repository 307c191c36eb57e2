"""Closed-form conditional quantiles and exact samplers used as ground truth.

Covers the multivariate normal and Student-t conditional quantiles, the
trivariate Clayton conditional distribution and its inverse, Azzalini
skew-normal / skew-t margins, and a brute-force Monte Carlo conditional
quantile for cross-checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import interpolate, special, stats


@dataclass(frozen=True)
class MvnSpec:
    """Joint normal law of ``(Y, X_1, ..., X_d)``; index 0 is the response."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        np.linalg.cholesky(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def d(self):
        return self.mean.size - 1

    def _conditional(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            raise ValueError(f"expected {self.d} covariate value(s), got {x.shape[1]}")
        s_yx = self.cov[0, 1:]
        s_xx = self.cov[1:, 1:]
        dx = x - self.mean[1:]
        # solve rather than invert; LinAlgError on a singular block
        coef = np.linalg.solve(s_xx, s_yx)
        mu = self.mean[0] + dx @ coef
        var = self.cov[0, 0] - s_yx @ coef
        maha = np.einsum("ij,ij->i", dx, np.linalg.solve(s_xx, dx.T).T)
        return mu, var, maha


@dataclass(frozen=True)
class MvtSpec(MvnSpec):
    """Joint Student-t law with ``df`` degrees of freedom and scale matrix ``cov``."""

    df: float = 4.0

    def __post_init__(self):
        super().__post_init__()
        if not self.df >= 1.0:
            raise ValueError(f"degrees of freedom must be at least 1, got {self.df}")


def _squeeze(out, x):
    return out[0] if np.ndim(x) <= 1 and out.size == 1 else out


def gaussian_cond_quantile(spec, alpha, x):
    """alpha-quantile of ``Y | X = x`` for a joint normal law."""
    mu, var, _ = spec._conditional(x)
    out = mu + np.sqrt(var) * special.ndtri(np.asarray(alpha, dtype=float))
    return _squeeze(np.asarray(out), x)


def t_cond_quantile(spec, alpha, x):
    """alpha-quantile of ``Y | X = x`` for a joint Student-t law.

    The conditional law is Student-t with ``df + d`` degrees of freedom and
    squared scale ``(df + maha) / (df + d) * var`` where ``maha`` is the
    Mahalanobis distance of ``x`` under the covariate block.
    """
    mu, var, maha = spec._conditional(x)
    nu_c = spec.df + spec.d
    scale2 = (spec.df + maha) / nu_c * var
    out = mu + np.sqrt(scale2) * special.stdtrit(nu_c, np.asarray(alpha, dtype=float))
    return _squeeze(np.asarray(out), x)


def clayton3_cond_cdf(delta, u, v, w):
    """``C(u | v, w)`` of the trivariate Clayton copula."""
    u, v, w = (np.asarray(a, dtype=float) for a in (u, v, w))
    s = v ** -delta + w ** -delta - 1.0
    e = (1.0 + 2.0 * delta) / delta
    return (u ** -delta + s - 1.0) ** -e * s ** e


def clayton3_cond_quantile(delta, alpha, v, w):
    """Inverse of :func:`clayton3_cond_cdf` in its first argument."""
    alpha, v, w = (np.asarray(a, dtype=float) for a in (alpha, v, w))
    if not delta > 0.0:
        raise ValueError(f"Clayton parameter must be positive, got {delta}")
    s = v ** -delta + w ** -delta - 1.0
    return ((alpha ** (-delta / (1.0 + 2.0 * delta)) - 1.0) * s + 1.0) ** (-1.0 / delta)


def _clayton_hinv(delta, p, v):
    # inverse of h(u | v) = v^(-d-1) (u^-d + v^-d - 1)^(-1/d - 1)
    return ((p ** (-delta / (1.0 + delta)) - 1.0) * v ** -delta + 1.0) ** (-1.0 / delta)


def sample_clayton3(delta, n, seed=None):
    """Exact draws ``(u1, u2, u3)`` from the trivariate Clayton copula."""
    rng = np.random.default_rng(seed)
    p = rng.random((n, 3))
    u1 = p[:, 0]
    u2 = _clayton_hinv(delta, p[:, 1], u1)
    u3 = clayton3_cond_quantile(delta, p[:, 2], u1, u2)
    return np.column_stack([u1, u2, u3])


def sample_mvn(spec, n, seed=None):
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(spec.cov)
    return spec.mean + rng.standard_normal((n, spec.mean.size)) @ chol.T


def sample_mvt(spec, n, seed=None):
    """Normal scale mixture ``mu + z / sqrt(W / df)`` with ``W ~ chi2(df)``."""
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(spec.cov)
    z = rng.standard_normal((n, spec.mean.size)) @ chol.T
    w = rng.chisquare(spec.df, size=n)
    return spec.mean + z / np.sqrt(w / spec.df)[:, None]


def sample_scenario_dist(kind, spec, n, seed=None):
    """Dispatch to the mvn, mvt or clayton3 sampler (``spec`` is delta for clayton3)."""
    if kind == "mvn":
        return sample_mvn(spec, n, seed)
    if kind == "mvt":
        return sample_mvt(spec, n, seed)
    if kind == "clayton3":
        return sample_clayton3(float(spec), n, seed)
    raise ValueError(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class SkewSpec:
    """Azzalini skew-normal (``df=None``) or skew-t in direct parameterization.

    ``var`` is the squared scale, ``xi`` the slant.
    """

    loc: float = 0.0
    var: float = 1.0
    xi: float = 0.0
    df: float | None = None

    def __post_init__(self):
        if not self.var > 0.0:
            raise ValueError(f"squared scale must be positive, got {self.var}")
        if self.df is not None and not self.df > 0.0:
            raise ValueError(f"degrees of freedom must be positive, got {self.df}")

    @property
    def kind(self):
        return "skew-normal" if self.df is None else "skew-t"

    @property
    def scale(self):
        return float(np.sqrt(self.var))


def sample_skew(spec, n, seed=None):
    """Draws via ``delta |W0| + sqrt(1 - delta^2) W1``, scaled by ``sqrt(W / df)`` for skew-t."""
    rng = np.random.default_rng(seed)
    delta = spec.xi / np.sqrt(1.0 + spec.xi ** 2)
    w0 = rng.standard_normal(n)
    w1 = rng.standard_normal(n)
    z = delta * np.abs(w0) + np.sqrt(1.0 - delta ** 2) * w1
    if spec.df is not None:
        z = z / np.sqrt(rng.chisquare(spec.df, size=n) / spec.df)
    return spec.loc + spec.scale * z


@dataclass(frozen=True, eq=False)
class SkewT:
    """Azzalini skew-t distribution: pdf, cdf and quantile function."""

    df: float
    loc: float = 0.0
    scale: float = 1.0
    xi: float = 0.0

    def _z(self, x):
        return (np.asarray(x, dtype=float) - self.loc) / self.scale

    def pdf(self, x):
        z = self._z(x)
        nu = self.df
        arg = self.xi * z * np.sqrt((nu + 1.0) / (nu + z * z))
        return 2.0 / self.scale * stats.t.pdf(z, nu) * special.stdtr(nu + 1.0, arg)

    @cached_property
    def _mixing_rule(self):
        # Gauss-Legendre in log W over the central 1 - 2e-17 mass of chi2(df);
        # the integrand W f(W) is a smooth bump on that scale
        chi = stats.chi2(self.df)
        lo, hi = np.log(chi.ppf(1e-17)), np.log(chi.isf(1e-17))
        t, w = np.polynomial.legendre.leggauss(400)
        y = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        dens = np.exp(y + chi.logpdf(np.exp(y))) * 0.5 * (hi - lo) * w
        return np.sqrt(np.exp(y) / self.df), dens / dens.sum()

    def cdf(self, x):
        """``E_W[F_SN(z sqrt(W / df))]`` over ``W ~ chi2(df)`` by fixed quadrature.

        Absolute error is at rounding level; relative accuracy degrades for
        lower-tail levels below about 1e-15, where the truncated mixing
        range no longer covers the dominant small values of ``W``.
        """
        z = np.atleast_1d(self._z(x)).astype(float).ravel()
        s, w = self._mixing_rule
        zz = np.multiply.outer(z, s)
        sn = special.ndtr(zz) - 2.0 * special.owens_t(zz, self.xi)
        val = np.clip(sn @ w, 0.0, 1.0)
        return val[0] if np.ndim(x) == 0 else val.reshape(np.shape(x))

    @cached_property
    def _table(self):
        # sinh-spaced grid resolves both heavy tails
        z = np.sinh(np.linspace(-np.arcsinh(400.0), np.arcsinh(400.0), 1201))
        x = self.loc + self.scale * z
        f = self.cdf(x)
        keep = np.concatenate([[True], np.diff(f) > 1e-15])
        return interpolate.PchipInterpolator(f[keep], x[keep], extrapolate=True)

    def ppf(self, p, newton_steps=4):
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0.0) | (p >= 1.0)):
            raise ValueError("quantile levels must lie strictly inside (0, 1)")
        x = np.asarray(self._table(p), dtype=float)
        for _ in range(newton_steps):
            dens = self.pdf(x)
            step = (self.cdf(x) - p) / np.where(dens > 0.0, dens, np.inf)
            x = x - step
        return x[()] if x.ndim == 0 else x


@dataclass(frozen=True, eq=False)
class Margin:
    """Thin adapter giving every marginal law ``cdf``/``ppf``/``pdf``/``rvs``."""

    name: str
    dist: object

    def cdf(self, x):
        return self.dist.cdf(x)

    def ppf(self, p):
        return self.dist.ppf(p)

    def pdf(self, x):
        return self.dist.pdf(x)


def skew_margin(spec):
    """Frozen distribution for a :class:`SkewSpec`."""
    if spec.df is None:
        return Margin(f"sN({spec.loc:g},{spec.var:g},{spec.xi:g})",
                      stats.skewnorm(spec.xi, loc=spec.loc, scale=spec.scale))
    return Margin(f"st{spec.df:g}({spec.loc:g},{spec.var:g},{spec.xi:g})",
                  SkewT(spec.df, spec.loc, spec.scale, spec.xi))


def normal_margin(mean=0.0, var=1.0):
    return Margin(f"N({mean:g},{var:g})", stats.norm(mean, np.sqrt(var)))


def t_margin(df, loc=0.0, scale=1.0):
    return Margin(f"t{df:g}({loc:g},{scale:g})", stats.t(df, loc, scale))


def mc_cond_quantile(sample, alpha, x, half_width=0.05, min_count=50):
    """Empirical conditional quantile by rejection around ``x``.

    ``sample`` has the response in column 0.  Rows whose covariates lie in
    the hypercube of half-width ``half_width`` around ``x`` are kept.
    Returns ``(quantile, standard_error, count)``; the standard error uses
    the binomial order-statistic interval.
    """
    sample = np.asarray(sample, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    keep = np.all(np.abs(sample[:, 1:] - x) <= half_width, axis=1)
    y = np.sort(sample[keep, 0])
    m = y.size
    if m < min_count:
        raise ValueError(f"only {m} samples fall in the window; enlarge the sample or window")
    q = float(np.quantile(y, alpha))
    k = np.sqrt(m * alpha * (1.0 - alpha))
    lo = y[max(0, int(np.floor(m * alpha - k)))]
    hi = y[min(m - 1, int(np.ceil(m * alpha + k)))]
    return q, 0.5 * (hi - lo), m
