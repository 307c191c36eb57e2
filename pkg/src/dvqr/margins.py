"""Kernel-smoothed marginal distribution functions and the PIT to copula scale."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

# normal-reference constant for a Gaussian-kernel CDF estimator
BANDWIDTH_CONSTANT = 1.59
_CHUNK = 2_000_000


class DegenerateMarginError(ValueError):
    """The sample cannot support a smoothed distribution function."""


def normal_reference_bandwidth(sample):
    """``h = 1.59 * sigma * n**(-1/3)`` with ``sigma = min(sd, IQR / 1.349)``."""
    x = np.asarray(sample, dtype=float)
    n = x.size
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75.0, 25.0])
    sigma = min(sd, (q75 - q25) / 1.349)
    if not sigma > 0.0:
        # heavy ties collapse the IQR; fall back on the standard deviation
        sigma = sd
    return BANDWIDTH_CONSTANT * sigma * n ** (-1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class KernelMargin:
    """Gaussian-kernel smoothed CDF ``F(x) = mean(Phi((x - x_i) / h))``."""

    sample: np.ndarray
    bandwidth: float

    def __post_init__(self):
        sample = np.sort(np.asarray(self.sample, dtype=float).ravel())
        sample.setflags(write=False)
        object.__setattr__(self, "sample", sample)
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0.0):
            raise DegenerateMarginError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def n(self):
        return self.sample.size

    def _kernel_mean(self, x, kernel):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.size)
        step = max(1, _CHUNK // self.n)
        for start in range(0, flat.size, step):
            z = (flat[start:start + step, None] - self.sample[None, :]) / self.bandwidth
            out[start:start + step] = kernel(z).mean(axis=1)
        return out.reshape(x.shape)

    def cdf(self, x):
        out = self._kernel_mean(x, special.ndtr)
        return out[()] if out.ndim == 0 else out

    def sf(self, x):
        """Survival function ``1 - cdf(x)`` without cancellation in the upper tail."""
        out = self._kernel_mean(x, lambda z: special.ndtr(-z))
        return out[()] if out.ndim == 0 else out

    def pdf(self, x):
        out = self._kernel_mean(x, lambda z: np.exp(-0.5 * z * z)) / (np.sqrt(2.0 * np.pi) * self.bandwidth)
        return out[()] if out.ndim == 0 else out

    def support(self):
        """Interval outside of which the smoothed CDF is numerically 0 or 1."""
        return self.sample[0] - 8.0 * self.bandwidth, self.sample[-1] + 8.0 * self.bandwidth

    def ppf(self, p, tol=1e-12, maxiter=200):
        """Inverse of :meth:`cdf` by safeguarded Newton iteration."""
        p = np.asarray(p, dtype=float)
        if np.any(~((p > 0.0) & (p < 1.0))):
            raise ValueError("quantile levels must lie strictly inside (0, 1)")
        return self.ppf_pair(p, 1.0 - p, tol, maxiter)

    def isf(self, q, tol=1e-12, maxiter=200):
        """Inverse of :meth:`sf`; resolves upper-tail levels below 1e-16."""
        q = np.asarray(q, dtype=float)
        if np.any(~((q > 0.0) & (q < 1.0))):
            raise ValueError("survival levels must lie strictly inside (0, 1)")
        return self.ppf_pair(1.0 - q, q, tol, maxiter)

    def ppf_pair(self, p, q, tol=1e-12, maxiter=200):
        """Quantile at level ``p`` given together with its exact complement ``q = 1 - p``.

        Below the median ``p`` is matched against :meth:`cdf`, above it ``q``
        against :meth:`sf`, so both tails keep full relative precision.
        """
        p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
        if np.any(~((p > 0.0) & (q > 0.0) & (p <= 1.0) & (q <= 1.0))):
            raise ValueError("quantile levels must lie strictly inside (0, 1)")
        flat, comp = p.ravel(), q.ravel()
        upper = flat > 0.5
        lo_end, hi_end = self.support()
        lo = np.full(flat.shape, lo_end)
        hi = np.full(flat.shape, hi_end)
        width = hi_end - lo_end
        # widen the bracket geometrically for extreme levels
        for _ in range(200):
            low_bad = ~upper & (self.cdf(lo) > flat)
            if not low_bad.any():
                break
            lo = np.where(low_bad, lo - width, lo)
            width *= 2.0
        width = hi_end - lo_end
        for _ in range(200):
            high_bad = upper & (self.sf(hi) > comp)
            if not high_bad.any():
                break
            hi = np.where(high_bad, hi + width, hi)
            width *= 2.0
        x = np.quantile(self.sample, np.where(upper, 1.0 - comp, flat))
        x = np.clip(x, lo, hi)
        # Newton on log F below the median and on log(1 - F) above it, so the
        # step stays of order one bandwidth deep in either tail
        target = np.log(np.where(upper, comp, flat))
        ftol = tol * np.minimum(1.0, 1e3 * np.where(upper, comp, flat))
        eps = np.finfo(float).eps
        active = np.ones(flat.shape, dtype=bool)
        for _ in range(maxiter):
            xa, la, ha, up = x[active], lo[active], hi[active], upper[active]
            cdf, sf = self.cdf(xa), self.sf(xa)
            # residual on the scale of the smaller tail; positive when x is too large
            f = np.where(up, comp[active] - sf, cdf - flat[active])
            la = np.where(f < 0.0, xa, la)
            ha = np.where(f > 0.0, xa, ha)
            tail = np.where(up, sf, cdf)
            dens = self.pdf(xa)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                g = np.log(tail) - target[active]
                step = xa - np.where(up, -1.0, 1.0) * g * tail / dens
            bad = ~np.isfinite(step) | (step <= la) | (step >= ha)
            new = np.where(bad, 0.5 * (la + ha), step)
            # the bracket may shrink to adjacent doubles: with a tiny bandwidth
            # one ulp of x can move the cdf by much more than the tolerance
            xtol = np.maximum(4.0 * eps * self.bandwidth, np.spacing(np.maximum(np.abs(la), np.abs(ha))))
            converged = (np.abs(f) <= ftol[active]) | (ha - la <= xtol)
            new = np.where(converged, xa, new)
            x[active], lo[active], hi[active] = new, la, ha
            idx = np.flatnonzero(active)
            active[idx[converged]] = False
            if not active.any():
                break
        out = x.reshape(p.shape)
        return out[()] if out.ndim == 0 else out


def fit_kernel_cdf(sample):
    """Fit a :class:`KernelMargin` with the normal-reference bandwidth."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 10:
        raise DegenerateMarginError(f"need at least 10 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DegenerateMarginError("sample contains non-finite values")
    if np.ptp(x) == 0.0:
        raise DegenerateMarginError("constant sample has no smooth distribution function")
    return KernelMargin(x, normal_reference_bandwidth(x))


@dataclass(frozen=True, eq=False)
class PseudoData:
    """Copula-scale data: response PITs ``v`` and covariate PITs ``U`` (n x d)."""

    v: np.ndarray
    U: np.ndarray
    response: str = "y"
    covariates: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).ravel()
        U = np.asarray(self.U, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if U.shape[0] != v.size:
            raise ValueError(f"row mismatch: {v.size} response values, {U.shape[0]} covariate rows")
        if np.any((v <= 0.0) | (v >= 1.0)) or np.any((U <= 0.0) | (U >= 1.0)):
            raise ValueError("pseudo observations must lie strictly inside (0, 1)")
        names = tuple(self.covariates) or tuple(f"x{j + 1}" for j in range(U.shape[1]))
        if len(names) != U.shape[1]:
            raise ValueError("one name per covariate column is required")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "covariates", names)

    @property
    def n(self):
        return self.v.size

    @property
    def d(self):
        return self.U.shape[1]


def clamp_pit(p, n):
    return np.clip(p, 1.0 / (n + 1.0), n / (n + 1.0))


def pit_transform(raw, names, response):
    """Fit one kernel margin per column and map the data to the copula scale.

    Parameters
    ----------
    raw : array, shape (n, d + 1)
    names : sequence of str
        Column names of ``raw``.
    response : str
        Name of the response column.

    Returns
    -------
    pseudo : PseudoData
    margins : list of KernelMargin
        One per column of ``raw``, in column order.
    """
    raw = np.asarray(raw, dtype=float)
    names = list(names)
    if raw.ndim != 2 or raw.shape[1] != len(names):
        raise ValueError(f"data has shape {raw.shape} but {len(names)} column names")
    if response not in names:
        raise KeyError(f"response column {response!r} not found among {names}")
    margins = [fit_kernel_cdf(raw[:, j]) for j in range(raw.shape[1])]
    n = raw.shape[0]
    pits = np.column_stack([clamp_pit(m.cdf(raw[:, j]), n) for j, m in enumerate(margins)])
    r = names.index(response)
    cov = [j for j in range(len(names)) if j != r]
    pseudo = PseudoData(pits[:, r], pits[:, cov], response, tuple(names[j] for j in cov))
    return pseudo, margins
