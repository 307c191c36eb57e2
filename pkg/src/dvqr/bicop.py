"""Parametric bivariate copulas: the pair-copula building blocks of the D-vine.

Conventions
-----------
Every copula is evaluated at ``(u, v)`` where ``u`` is the first and ``v``
the second argument.  Two conditional distributions exist:

``hfunc1(u, v)``  = dC/du, the distribution of the second variable given the first
``hfunc2(u, v)``  = dC/dv, the distribution of the first variable given the second

and their inverses ``hinv1(u, p)`` (solves ``hfunc1(u, x) = p`` for ``x``)
and ``hinv2(p, v)`` (solves ``hfunc2(x, v) = p`` for ``x``).

Rotations follow the usual counter-clockwise convention::

    C_90(u, v)  = v - C(1 - u, v)
    C_180(u, v) = u + v - 1 + C(1 - u, 1 - v)
    C_270(u, v) = u - C(u, 1 - v)
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special, stats

EPS = 1e-10


class CopulaDomainError(ValueError):
    """Parameter or argument outside the admissible domain of a family."""


class CopulaNumericError(ArithmeticError):
    """A numerical inversion failed to converge."""


class Family(str, enum.Enum):
    INDEP = "indep"
    GAUSSIAN = "gaussian"
    STUDENT = "t"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"
    JOE = "joe"


class Criterion(str, enum.Enum):
    LL = "ll"
    AIC = "aic"
    BIC = "bic"


N_PARAMS = {
    Family.INDEP: 0,
    Family.GAUSSIAN: 1,
    Family.STUDENT: 2,
    Family.CLAYTON: 1,
    Family.GUMBEL: 1,
    Family.FRANK: 1,
    Family.JOE: 1,
}

# closed boxes used by the optimizer; open ends of the admissible set are
# approached to within these margins
FIT_BOUNDS = {
    Family.GAUSSIAN: [(-0.9999, 0.9999)],
    Family.STUDENT: [(-0.9999, 0.9999), (2.0, 30.0)],
    Family.CLAYTON: [(1e-4, 28.0)],
    Family.GUMBEL: [(1.0, 17.0)],
    Family.FRANK: [(-35.0, 35.0)],
    Family.JOE: [(1.0 + 1e-4, 30.0)],
}

ROTATABLE = (Family.CLAYTON, Family.GUMBEL, Family.JOE)


def _check_params(family, params):
    if len(params) != N_PARAMS[family]:
        raise CopulaDomainError(
            f"{family.value} copula takes {N_PARAMS[family]} parameter(s), got {len(params)}")
    if not all(math.isfinite(p) for p in params):
        raise CopulaDomainError(f"non-finite parameter for {family.value}: {params}")
    if family is Family.GAUSSIAN:
        ok = -1.0 < params[0] < 1.0
    elif family is Family.STUDENT:
        ok = -1.0 < params[0] < 1.0 and 2.0 <= params[1] <= 30.0
    elif family is Family.CLAYTON:
        ok = 0.0 < params[0] <= 28.0
    elif family is Family.GUMBEL:
        ok = 1.0 <= params[0] <= 17.0
    elif family is Family.FRANK:
        ok = params[0] != 0.0 and abs(params[0]) <= 35.0
    elif family is Family.JOE:
        ok = 1.0 < params[0] <= 30.0
    else:
        ok = True
    if not ok:
        raise CopulaDomainError(f"parameters {params} outside the box of the {family.value} family")


def _clip(x):
    return np.clip(np.asarray(x, dtype=float), EPS, 1.0 - EPS)


# ---------------------------------------------------------------------------
# unrotated family formulas; all families here are exchangeable, so only the
# first-given-second direction is coded
# ---------------------------------------------------------------------------

def _logpdf_indep(p, u, v):
    return 0.0 * (u + v)


def _logpdf_gauss(p, u, v):
    rho = p[0]
    x, y = special.ndtri(u), special.ndtri(v)
    r2 = 1.0 - rho * rho
    return -0.5 * math.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)


def _logpdf_t_scores(rho, nu, x, y):
    r2 = 1.0 - rho * rho
    const = (special.gammaln((nu + 2.0) / 2.0) + special.gammaln(nu / 2.0)
             - 2.0 * special.gammaln((nu + 1.0) / 2.0) - 0.5 * math.log(r2))
    quad = (x * x + y * y - 2.0 * rho * x * y) / (nu * r2)
    return (const - (nu + 2.0) / 2.0 * np.log1p(quad)
            + (nu + 1.0) / 2.0 * (np.log1p(x * x / nu) + np.log1p(y * y / nu)))


def _logpdf_t(p, u, v):
    rho, nu = p
    return _logpdf_t_scores(rho, nu, special.stdtrit(nu, u), special.stdtrit(nu, v))


def _clayton_a(d, u, v):
    # u^-d + v^-d - 1, accurate near one
    return np.expm1(-d * np.log(u)) + np.expm1(-d * np.log(v)) + 1.0


def _cdf_clayton(p, u, v):
    d = p[0]
    return np.exp(-np.log(_clayton_a(d, u, v)) / d)


def _logpdf_clayton(p, u, v):
    d = p[0]
    return (math.log1p(d) + (-1.0 - d) * (np.log(u) + np.log(v))
            - (1.0 / d + 2.0) * np.log(_clayton_a(d, u, v)))


def _gumbel_parts(th, u, v):
    x, y = -np.log(u), -np.log(v)
    log_a = np.logaddexp(th * np.log(x), th * np.log(y))
    w = np.exp(log_a / th)
    return x, y, log_a, w


def _cdf_gumbel(p, u, v):
    _, _, _, w = _gumbel_parts(p[0], u, v)
    return np.exp(-w)


def _logpdf_gumbel(p, u, v):
    th = p[0]
    x, y, log_a, w = _gumbel_parts(th, u, v)
    return (-w - np.log(u) - np.log(v) + (th - 1.0) * (np.log(x) + np.log(y))
            + (1.0 / th - 2.0) * log_a + np.log(w + th - 1.0))


def _cdf_frank(p, u, v):
    th = p[0]
    return -np.log1p(np.expm1(-th * u) * np.expm1(-th * v) / math.expm1(-th)) / th


def _frank_pair(th, u, ub, v):
    # h = B(1 - A) / (B(1 - A) + A(1 - E/A)) with A = e^{-th u}, B = e^{-th v},
    # E = e^{-th}; both terms share one sign for either sign of theta
    t1 = np.exp(-th * v) * -np.expm1(-th * u)
    t2 = np.exp(-th * u) * -np.expm1(-th * ub)
    return t1 / (t1 + t2), t2 / (t1 + t2)


def _frank_inv_pair(th, q, qc, v, vb):
    g = math.expm1(-th)
    bq, bqc = np.exp(-th * v) * qc, np.exp(-th * vb) * q
    x = -np.log1p(q * g / (q + bq)) / th
    xc = -np.log1p(qc * g / (qc + bqc)) / th
    low = x <= 0.5
    return np.where(low, x, 1.0 - xc), np.where(low, 1.0 - x, xc)


def _logpdf_frank(p, u, v):
    th = p[0]
    g = math.expm1(-th)
    den = g + np.expm1(-th * u) * np.expm1(-th * v)
    return math.log(-th * g) - th * (u + v) - 2.0 * np.log(np.abs(den))


def _joe_parts(th, u, v):
    au = np.exp(th * np.log1p(-u))
    av = np.exp(th * np.log1p(-v))
    return au, av, au + av - au * av


def _cdf_joe(p, u, v):
    th = p[0]
    _, _, a = _joe_parts(th, u, v)
    return 1.0 - np.exp(np.log(a) / th)


def _logpdf_joe(p, u, v):
    th = p[0]
    _, _, a = _joe_parts(th, u, v)
    return ((1.0 / th - 2.0) * np.log(a) + (th - 1.0) * (np.log1p(-u) + np.log1p(-v))
            + np.log(th - 1.0 + a))


def _cdf_elliptical(p, u, v):
    # C(u, v) = int_{-inf}^{x} f(s) H(y | s) ds on the quantile scale, which
    # avoids a quantile-function call per quadrature node
    rho = p[0]
    u_flat, v_flat = np.ravel(u), np.ravel(v)
    if len(p) == 1:
        x, y = special.ndtri(u_flat), special.ndtri(v_flat)
        sd = math.sqrt(1.0 - rho * rho)

        def integrand(r):
            s = x - r
            return np.exp(-0.5 * s * s) / math.sqrt(2.0 * math.pi) * special.ndtr((y - rho * s) / sd)
    else:
        nu = p[1]
        x, y = special.stdtrit(nu, u_flat), special.stdtrit(nu, v_flat)
        logc = special.gammaln(0.5 * (nu + 1.0)) - special.gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi)

        def integrand(r):
            s = x - r
            scale = np.sqrt((nu + s * s) * (1.0 - rho * rho) / (nu + 1.0))
            dens = np.exp(logc - 0.5 * (nu + 1.0) * np.log1p(s * s / nu))
            return dens * special.stdtr(nu + 1.0, (y - rho * s) / scale)

    val, _ = integrate.quad_vec(integrand, 0.0, np.inf, epsabs=1e-15, epsrel=1e-12, limit=400)
    return np.reshape(np.clip(val, 0.0, np.minimum(u_flat, v_flat)), np.shape(u))


_LOGPDF = {
    Family.INDEP: _logpdf_indep,
    Family.GAUSSIAN: _logpdf_gauss,
    Family.STUDENT: _logpdf_t,
    Family.CLAYTON: _logpdf_clayton,
    Family.GUMBEL: _logpdf_gumbel,
    Family.FRANK: _logpdf_frank,
    Family.JOE: _logpdf_joe,
}
_CDF = {
    Family.INDEP: lambda p, u, v: u * v,
    Family.GAUSSIAN: _cdf_elliptical,
    Family.STUDENT: _cdf_elliptical,
    Family.CLAYTON: _cdf_clayton,
    Family.GUMBEL: _cdf_gumbel,
    Family.FRANK: _cdf_frank,
    Family.JOE: _cdf_joe,
}


# ---------------------------------------------------------------------------
# complement-accurate forms: every function takes a value together with its
# exact complement and returns (h, 1 - h) or (x, 1 - x), so that rotations
# swap the two instead of subtracting from one and tiny levels survive
# ---------------------------------------------------------------------------

def _log_pair(u, ub):
    # log u from whichever of u, 1 - u is the small one
    small = u <= 0.5
    return np.where(small, np.log(np.where(small, u, 1.0)), np.log1p(-np.where(small, 0.0, ub)))


def _split_log(lh):
    return np.exp(lh), -np.expm1(lh)


def _hpair_clayton(p, u, ub, v, vb):
    d = p[0]
    with np.errstate(over="ignore"):  # t = inf is the exact limit as u -> 0
        t = np.expm1(-d * _log_pair(u, ub)) * np.exp(d * _log_pair(v, vb))
    return _split_log(-(1.0 + 1.0 / d) * np.log1p(t))


def _hpair_gumbel(p, u, ub, v, vb):
    th = p[0]
    s, w = -_log_pair(u, ub), -_log_pair(v, vb)
    r = np.exp(th * (np.log(s) - np.log(w)))
    lr = np.log1p(r)
    return _split_log(-w * np.expm1(lr / th) + (1.0 / th - 1.0) * lr)


def _hpair_joe(p, u, ub, v, vb):
    th = p[0]
    lu, lv = th * _log_pair(ub, u), th * _log_pair(vb, v)
    au, bv = np.exp(lu), np.exp(lv)
    return _split_log((1.0 / th - 1.0) * np.log1p(au * -np.expm1(lv) / bv) + np.log(-np.expm1(lu)))


def _small_side(fn, u, ub):
    # fn is an odd-symmetric quantile function: fn(1 - x) = -fn(x)
    u, ub = np.broadcast_arrays(u, ub)
    low = u <= 0.5
    out = np.empty(u.shape)
    out[low] = fn(u[low])
    out[~low] = -fn(ub[~low])
    return out


def _elliptical_parts(p, u, ub, v, vb):
    rho = p[0]
    if len(p) == 1:
        x, y = _small_side(special.ndtri, u, ub), _small_side(special.ndtri, v, vb)
        return (x - rho * y) / math.sqrt(1.0 - rho * rho), special.ndtr
    nu = p[1]
    x = _small_side(lambda a: special.stdtrit(nu, a), u, ub)
    y = _small_side(lambda a: special.stdtrit(nu, a), v, vb)
    scale = np.sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0))
    return (x - rho * y) / scale, lambda z: special.stdtr(nu + 1.0, z)


def _hpair_elliptical(p, u, ub, v, vb):
    z, cdf = _elliptical_parts(p, u, ub, v, vb)
    return cdf(z), cdf(-z)


def _hinv_elliptical_pair(p, q, qc, v, vb):
    rho = p[0]
    if len(p) == 1:
        y = _small_side(special.ndtri, v, vb)
        x = _small_side(special.ndtri, q, qc) * math.sqrt(1.0 - rho * rho) + rho * y
        return special.ndtr(x), special.ndtr(-x)
    nu = p[1]
    y = _small_side(lambda a: special.stdtrit(nu, a), v, vb)
    scale = np.sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0))
    x = _small_side(lambda a: special.stdtrit(nu + 1.0, a), q, qc) * scale + rho * y
    return special.stdtr(nu, x), special.stdtr(nu, -x)


def _hinv_clayton_pair(p, q, qc, v, vb):
    d = p[0]
    with np.errstate(over="ignore"):
        t = np.expm1(-d / (1.0 + d) * _log_pair(q, qc)) * np.exp(-d * _log_pair(v, vb))
    return _split_log(-np.log1p(t) / d)


def _hinv_logit(hpair, p, q, qc, v, vb, maxiter=200):
    """Invert ``hpair`` in its first argument on the logit scale.

    The search variable ``t`` gives ``x = expit(t)`` and ``1 - x = expit(-t)``,
    both to full relative precision, so levels down to 1e-300 resolve in
    either tail.  Residuals are taken on the side of the smaller level.
    """
    q, qc, v, vb = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (q, qc, v, vb)))
    upper = q > 0.5

    def resid(t):
        h, hc = hpair(p, special.expit(t), special.expit(-t), v, vb)
        return np.where(upper, qc - hc, h - q)

    lim = 690.0
    a, b = np.full(q.shape, -lim), np.full(q.shape, lim)
    fa, fb = resid(a), resid(b)
    out = np.where(fa >= 0.0, -lim, np.where(fb <= 0.0, lim, np.nan))
    active = np.isnan(out)
    target = np.where(upper, qc, q)
    side = np.zeros(q.shape, dtype=int)
    for it in range(maxiter):
        if not active.any():
            break
        if it < 12:
            c = 0.5 * (a + b)
        else:
            c = b - fb * (b - a) / (fb - fa)
            bad = ~np.isfinite(c) | (c <= a) | (c >= b)
            c = np.where(bad, 0.5 * (a + b), c)
        fc = resid(c)
        done = active & ((np.abs(fc) <= 1e-15 * target)
                         | (b - a <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(c))))
        out = np.where(done, c, out)
        active &= ~done
        left, right = active & (fc < 0.0), active & (fc > 0.0)
        fb = np.where(left & (side == -1), 0.5 * fb, fb)
        fa = np.where(right & (side == 1), 0.5 * fa, fa)
        a, fa = np.where(left, c, a), np.where(left, fc, fa)
        b, fb = np.where(right, c, b), np.where(right, fc, fb)
        side = np.where(left, -1, np.where(right, 1, side))
    if active.any():
        raise CopulaNumericError(
            f"h-function inversion did not converge in {maxiter} iterations for {int(active.sum())} point(s)")
    return special.expit(out), special.expit(-out)


_HPAIR = {
    Family.INDEP: lambda p, u, ub, v, vb: (u + 0.0 * v, ub + 0.0 * vb),
    Family.GAUSSIAN: _hpair_elliptical,
    Family.STUDENT: _hpair_elliptical,
    Family.FRANK: lambda p, u, ub, v, vb: _frank_pair(p[0], u, ub, v),
    Family.CLAYTON: _hpair_clayton,
    Family.GUMBEL: _hpair_gumbel,
    Family.JOE: _hpair_joe,
}


def _hpair(family, params, u, ub, v, vb):
    return _HPAIR[family](params, u, ub, v, vb)


def _hinv_pair(family, params, q, qc, v, vb):
    if family is Family.CLAYTON:
        return _hinv_clayton_pair(params, q, qc, v, vb)
    if family is Family.FRANK:
        return _frank_inv_pair(params[0], q, qc, v, vb)
    if family in (Family.GAUSSIAN, Family.STUDENT):
        return _hinv_elliptical_pair(params, q, qc, v, vb)
    if family is Family.INDEP:
        return q + 0.0 * v, qc + 0.0 * vb
    return _hinv_logit(_HPAIR[family], params, q, qc, v, vb)


@dataclass(frozen=True)
class BiCop:
    """A parametric bivariate copula.

    Parameters
    ----------
    family : Family or str
    rotation : int
        0, 90, 180 or 270; non-zero only for Clayton, Gumbel and Joe.
    params : sequence of float
        ``(rho,)`` Gaussian, ``(rho, nu)`` Student t, ``(theta,)`` otherwise.
    """

    family: Family = Family.INDEP
    rotation: int = 0
    params: tuple = ()
    loglik: float = field(default=float("nan"), compare=False)
    flag: str = field(default="", compare=False)

    def __post_init__(self):
        try:
            fam = Family(self.family)
        except ValueError:
            raise CopulaDomainError(f"unknown copula family {self.family!r}") from None
        object.__setattr__(self, "family", fam)
        params = tuple(float(p) for p in np.atleast_1d(self.params)) if len(np.atleast_1d(self.params)) else ()
        object.__setattr__(self, "params", params)
        rot = int(self.rotation)
        if rot not in (0, 90, 180, 270):
            raise CopulaDomainError(f"rotation must be one of 0, 90, 180, 270; got {self.rotation}")
        if rot and fam not in ROTATABLE:
            raise CopulaDomainError(f"the {fam.value} family is not rotated (rotation {rot})")
        object.__setattr__(self, "rotation", rot)
        _check_params(fam, params)

    def __repr__(self):
        rot = f", rotation={self.rotation}" if self.rotation else ""
        return f"BiCop({self.family.value}{rot}, params={self.params})"

    @property
    def n_params(self):
        return N_PARAMS[self.family]

    # -- evaluation -------------------------------------------------------

    def cdf(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        uc, vc = _clip(u), _clip(v)
        f, p, r = self.family, self.params, self.rotation
        if r == 0:
            out = _CDF[f](p, uc, vc)
        elif r == 90:
            out = vc - _CDF[f](p, 1.0 - uc, vc)
        elif r == 180:
            out = uc + vc - 1.0 + _CDF[f](p, 1.0 - uc, 1.0 - vc)
        else:
            out = uc - _CDF[f](p, uc, 1.0 - vc)
        out = np.clip(out, np.maximum(uc + vc - 1.0, 0.0), np.minimum(uc, vc))
        out = np.where((u <= 0.0) | (v <= 0.0), 0.0, out)
        out = np.where(u >= 1.0, np.clip(v, 0.0, 1.0), out)
        out = np.where(v >= 1.0, np.clip(u, 0.0, 1.0), out)
        return out[()] if out.ndim == 0 else out

    def logpdf(self, u, v):
        u, v = _clip(u), _clip(v)
        lp = _LOGPDF[self.family]
        if self.rotation == 0:
            out = lp(self.params, u, v)
        elif self.rotation == 90:
            out = lp(self.params, 1.0 - u, v)
        elif self.rotation == 180:
            out = lp(self.params, 1.0 - u, 1.0 - v)
        else:
            out = lp(self.params, u, 1.0 - v)
        return np.asarray(out, dtype=float)[()]

    def pdf(self, u, v):
        return np.exp(self.logpdf(u, v))

    def _h(self, w, wb, c, cb):
        """``hfunc2(w, c)`` in the rotated frame as the pair ``(h, 1 - h)``."""
        f, p = self.family, self.params
        w, wb = np.clip(w, 1e-300, 1.0), np.clip(wb, 1e-300, 1.0)
        c, cb = np.clip(c, EPS, 1.0), np.clip(cb, EPS, 1.0)
        r = self.rotation
        if r == 0:
            return _hpair(f, p, w, wb, c, cb)
        if r == 90:
            return _hpair(f, p, wb, w, c, cb)[::-1]
        if r == 180:
            return _hpair(f, p, wb, w, cb, c)[::-1]
        return _hpair(f, p, w, wb, cb, c)

    def _hinv(self, q, qc, c, cb):
        """Solve ``_h(x, 1 - x, c, cb)[0] = q``; returns ``(x, 1 - x)``."""
        f, p = self.family, self.params
        q, qc = np.clip(q, 1e-300, 1.0), np.clip(qc, 1e-300, 1.0)
        c, cb = np.clip(c, EPS, 1.0), np.clip(cb, EPS, 1.0)
        r = self.rotation
        if r == 0:
            return _hinv_pair(f, p, q, qc, c, cb)
        if r == 90:
            return _hinv_pair(f, p, qc, q, c, cb)[::-1]
        if r == 180:
            return _hinv_pair(f, p, qc, q, cb, c)[::-1]
        return _hinv_pair(f, p, q, qc, cb, c)

    # C_90 and C_270 swap roles under transposition; dC/du of a rotated copula
    # is the dC/dv form of the transposed rotation
    def _transposed(self):
        r = {90: 270, 270: 90}.get(self.rotation, self.rotation)
        return self if r == self.rotation else BiCop(self.family, r, self.params)

    @staticmethod
    def _finish(out, arg0):
        out = np.clip(out, 0.0, 1.0)
        out = np.where(arg0 <= 0.0, 0.0, np.where(arg0 >= 1.0, 1.0, out))
        return out[()] if out.ndim == 0 else out

    @staticmethod
    def _pairs(*args):
        arrays = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in args))
        return [a.copy() for a in arrays]

    def hfunc1(self, u, v):
        """Distribution of the second argument given the first, dC/du."""
        u0, v0 = self._pairs(u, v)
        return self._finish(self._transposed()._h(v0, 1.0 - v0, u0, 1.0 - u0)[0], v0)

    def hfunc2(self, u, v):
        """Distribution of the first argument given the second, dC/dv."""
        u0, v0 = self._pairs(u, v)
        return self._finish(self._h(u0, 1.0 - u0, v0, 1.0 - v0)[0], u0)

    def hinv1(self, u, p):
        """Solve ``hfunc1(u, x) = p`` for ``x``."""
        u0, p0 = self._pairs(u, p)
        return self._finish(self._transposed()._hinv(p0, 1.0 - p0, u0, 1.0 - u0)[0], p0)

    def hinv2(self, p, v):
        """Solve ``hfunc2(x, v) = p`` for ``x``."""
        p0, v0 = self._pairs(p, v)
        return self._finish(self._hinv(p0, 1.0 - p0, v0, 1.0 - v0)[0], p0)

    # complement-carrying forms: every value travels with its exact complement,
    # so levels within 1e-16 of one keep their relative precision
    def hfunc1_pair(self, u, ub, v, vb):
        """``(hfunc1, 1 - hfunc1)`` from arguments given with their complements."""
        return self._transposed()._h(*self._pairs(v, vb, u, ub))

    def hfunc2_pair(self, u, ub, v, vb):
        """``(hfunc2, 1 - hfunc2)`` from arguments given with their complements."""
        return self._h(*self._pairs(u, ub, v, vb))

    def hinv2_pair(self, p, pc, v, vb):
        """``(x, 1 - x)`` solving ``hfunc2(x, v) = p``."""
        return self._hinv(*self._pairs(p, pc, v, vb))

    @property
    def tau(self):
        return param_to_tau(self)

    def simulate(self, n, seed=None):
        return sample_bicop(self, n, seed)


# ---------------------------------------------------------------------------
# Kendall's tau links
# ---------------------------------------------------------------------------

def _debye1(x):
    if x == 0.0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / math.expm1(t) if t != 0.0 else 1.0, 0.0, abs(x),
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val / abs(x)


def _tau_frank(th):
    if th == 0.0:
        return 0.0
    a = abs(th)
    tau = 1.0 - 4.0 / a * (1.0 - _debye1(a))
    return math.copysign(tau, th)


def _tau_joe(th):
    if abs(th - 2.0) < 1e-8:
        return 2.0 - math.pi ** 2 / 6.0
    return 1.0 + 2.0 / (2.0 - th) * (special.digamma(2.0) - special.digamma(2.0 / th + 1.0))


def _tau_base(family, params):
    if family is Family.INDEP:
        return 0.0
    if family in (Family.GAUSSIAN, Family.STUDENT):
        return 2.0 / math.pi * math.asin(params[0])
    if family is Family.CLAYTON:
        return params[0] / (params[0] + 2.0)
    if family is Family.GUMBEL:
        return 1.0 - 1.0 / params[0]
    if family is Family.FRANK:
        return _tau_frank(params[0])
    return _tau_joe(params[0])


def param_to_tau(cop):
    """Kendall's tau implied by a copula."""
    tau = _tau_base(cop.family, cop.params)
    return -tau if cop.rotation in (90, 270) else tau


def tau_to_param(family, tau, rotation=0):
    """Invert the Kendall's tau link of a one-parameter family.

    For the Student t family only the correlation is determined; the
    returned tuple carries ``nu = 4`` as a placeholder.
    """
    family = Family(family)
    tau = float(tau)
    if rotation in (90, 270):
        tau = -tau
    if family is Family.INDEP:
        if tau != 0.0:
            raise CopulaDomainError(f"independence copula has tau 0, not {tau}")
        return ()
    if not -1.0 < tau < 1.0:
        raise CopulaDomainError(f"tau {tau} outside (-1, 1)")
    if family in (Family.GAUSSIAN, Family.STUDENT):
        rho = math.sin(math.pi * tau / 2.0)
        return (rho,) if family is Family.GAUSSIAN else (rho, 4.0)
    if family is Family.FRANK:
        lim = _tau_frank(35.0)
        if tau == 0.0 or abs(tau) > lim:
            raise CopulaDomainError(f"tau {tau} not attainable by the Frank family (|tau| <= {lim:.4f})")
        th = optimize.brentq(lambda t: _tau_frank(t) - abs(tau), 1e-10, 35.0, xtol=1e-15, rtol=1e-15)
        return (math.copysign(th, tau),)
    if tau <= 0.0:
        raise CopulaDomainError(f"tau {tau} not attainable by the {family.value} family with rotation {rotation}")
    if family is Family.CLAYTON:
        d = 2.0 * tau / (1.0 - tau)
        if d > 28.0:
            raise CopulaDomainError(f"tau {tau} exceeds the Clayton box")
        return (d,)
    if family is Family.GUMBEL:
        th = 1.0 / (1.0 - tau)
        if th > 17.0:
            raise CopulaDomainError(f"tau {tau} exceeds the Gumbel box")
        return (th,)
    lim = _tau_joe(30.0)
    if tau > lim:
        raise CopulaDomainError(f"tau {tau} exceeds the Joe box")
    th = optimize.brentq(lambda t: _tau_joe(t) - tau, 1.0 + 1e-12, 30.0, xtol=1e-15, rtol=1e-15)
    return (th,)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

def _as_pairs(data):
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"expected an n x 2 array, got shape {data.shape}")
    if data.shape[0] < 10:
        raise ValueError(f"at least 10 observations are needed, got {data.shape[0]}")
    return _clip(data[:, 0]), _clip(data[:, 1])


def _kendall_tau(u, v):
    tau = stats.kendalltau(u, v).statistic
    return 0.0 if not np.isfinite(tau) else float(tau)


def _neg_ll(family, rotation, u, v):
    def f(params):
        try:
            cop = BiCop(family, rotation, params)
        except CopulaDomainError:
            return np.inf
        ll = np.sum(cop.logpdf(u, v))
        return -ll if np.isfinite(ll) else np.inf
    return f


def _boundary_flag(family, params):
    for p, (lo, hi) in zip(params, FIT_BOUNDS[family]):
        if abs(p - lo) < 1e-5 * max(1.0, abs(lo)) or abs(p - hi) < 1e-5 * max(1.0, abs(hi)):
            return "parameter at box boundary"
    return ""


def _fit_t(u, v, tau):
    rho0 = math.sin(math.pi * tau / 2.0)
    lo, hi = FIT_BOUNDS[Family.STUDENT][0]
    best = {}

    def profile(nu):
        x, y = special.stdtrit(nu, u), special.stdtrit(nu, v)

        def nll(rho):
            return -np.sum(_logpdf_t_scores(rho, nu, x, y))

        res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-7})
        rho = res.x if res.fun <= nll(np.clip(rho0, lo, hi)) else float(np.clip(rho0, lo, hi))
        val = nll(rho)
        best[nu] = rho
        return val

    res = optimize.minimize_scalar(profile, bounds=FIT_BOUNDS[Family.STUDENT][1], method="bounded",
                                   options={"xatol": 1e-4})
    # the bounded search never evaluates the ends; check them explicitly
    cands = [(res.fun, res.x)] + [(profile(nu), nu) for nu in (2.0, 30.0)]
    _, nu = min(cands)
    return (best[nu], nu)


def fit_bicop_mle(data, family, rotation=0):
    """Maximum-likelihood fit of one family/rotation to an ``n x 2`` sample on (0, 1)^2."""
    family = Family(family)
    u, v = _as_pairs(data)
    if family is Family.INDEP:
        return BiCop(Family.INDEP, 0, (), loglik=0.0)
    tau = _kendall_tau(u, v)
    if family is Family.STUDENT:
        params = _fit_t(u, v, tau)
    else:
        (lo, hi), = FIT_BOUNDS[family]
        if family is Family.FRANK:
            lo, hi = (1e-4, hi) if tau >= 0.0 else (lo, -1e-4)
        nll = _neg_ll(family, rotation, u, v)
        res = optimize.minimize_scalar(lambda t: nll((t,)), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-8 * max(1.0, abs(hi))})
        cands = [(res.fun, res.x), (nll((lo,)), lo), (nll((hi,)), hi)]
        try:
            t0 = tau_to_param(family, tau, rotation)[0]
            cands.append((nll((t0,)), t0))
        except CopulaDomainError:
            pass
        val, best = min(cands)
        if not np.isfinite(val):
            raise CopulaNumericError(f"no finite likelihood for {family.value} rotation {rotation}")
        params = (best,)
    cop = BiCop(family, rotation, params)
    ll = float(np.sum(cop.logpdf(u, v)))
    flag = _boundary_flag(family, params)
    return BiCop(family, rotation, params, loglik=ll, flag=flag)


def independence_test(data):
    """Asymptotic Kendall-tau independence test; returns ``(tau, statistic, p_value)``."""
    u, v = _as_pairs(data)
    n = len(u)
    tau = _kendall_tau(u, v)
    stat = abs(tau) * math.sqrt(9.0 * n * (n - 1) / (2.0 * (2 * n + 5)))
    return tau, stat, 2.0 * stats.norm.sf(stat)


def criterion_value(loglik, n_params, n, criterion):
    """Criterion on the minimisation scale (LL is negated)."""
    criterion = Criterion(criterion)
    if criterion is Criterion.LL:
        return -loglik
    if criterion is Criterion.AIC:
        return -2.0 * loglik + 2.0 * n_params
    return -2.0 * loglik + math.log(n) * n_params


def candidate_families(tau):
    """(family, rotation) pairs compatible with the sign of the sample tau."""
    if tau >= 0.0:
        rot = (0, 180)
    else:
        rot = (90, 270)
    cands = [(Family.GAUSSIAN, 0), (Family.STUDENT, 0), (Family.FRANK, 0)]
    for fam in ROTATABLE:
        cands.extend((fam, r) for r in rot)
    return cands


def select_bicop(data, criterion=Criterion.AIC, indep_level=0.05, families=None):
    """Choose the criterion-best pair-copula after an independence pre-test.

    ``families`` optionally restricts the candidate families.
    """
    u, v = _as_pairs(data)
    n = len(u)
    tau, _, p_value = independence_test(np.column_stack([u, v]))
    if p_value > indep_level:
        return BiCop(Family.INDEP, 0, (), loglik=0.0)
    best, best_val = None, np.inf
    for fam, rot in candidate_families(tau):
        if families is not None and fam not in families:
            continue
        try:
            cop = fit_bicop_mle(np.column_stack([u, v]), fam, rot)
        except (CopulaDomainError, CopulaNumericError, FloatingPointError):
            continue
        val = criterion_value(cop.loglik, cop.n_params, n, criterion)
        if np.isfinite(val) and val < best_val:
            best, best_val = cop, val
    if best is None:
        warnings.warn("every candidate pair-copula fit failed; using independence", RuntimeWarning)
        return BiCop(Family.INDEP, 0, (), loglik=0.0, flag="all candidate fits failed")
    return best


def sample_bicop(cop, n, seed=None):
    """Draw ``n`` pairs by conditional inversion; returns an ``n x 2`` array."""
    rng = np.random.default_rng(seed)
    v = rng.random(n)
    w = rng.random(n)
    u = cop.hinv2(w, v)
    return np.column_stack([u, v])
