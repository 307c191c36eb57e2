"""Shared constructors for hand-built vines and reference data in the tests."""
import numpy as np

from dvqr.bicop import BiCop, Family, tau_to_param
from dvqr.dvine import DVineRegression

# worked selection example: Y, X1, X2, X3 with Y in column 0
WORKED_SIGMA = np.array([
    [1.0, 0.4, 0.8, 0.0],
    [0.4, 1.0, 0.32, 0.0],
    [0.8, 0.32, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
])


def random_correlation(rng, dim):
    a = rng.standard_normal((dim, dim))
    s = a @ a.T + np.eye(dim)
    d = np.sqrt(np.diag(s))
    return s / np.outer(d, d)


def partial_correlation(R, i, j, cond):
    idx = [i, j] + list(cond)
    prec = np.linalg.inv(R[np.ix_(idx, idx)])
    return -prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1])


def gaussian_dvine(R):
    """D-vine over positions 0..k of ``R`` (response first, covariates in order)."""
    k = R.shape[0] - 1
    pairs = [
        [BiCop(Family.GAUSSIAN, 0, (partial_correlation(R, e, e + t, range(e + 1, e + t)),))
         for e in range(k + 1 - t)]
        for t in range(1, k + 1)
    ]
    return DVineRegression(tuple(range(k)), pairs)


def clayton_trivariate_vine(delta):
    c = BiCop(Family.CLAYTON, 0, (delta,))
    return DVineRegression((0, 1), ((c, c), (BiCop(Family.CLAYTON, 0, (delta / (1.0 + delta),)),)))


_RANDOM_FAMILIES = [Family.GAUSSIAN, Family.STUDENT, Family.CLAYTON, Family.GUMBEL, Family.FRANK, Family.JOE]


def random_pair(rng, max_tau=0.6, positive=False, families=None):
    families = families or _RANDOM_FAMILIES
    fam = families[int(rng.integers(len(families)))]
    tau = rng.uniform(0.05, max_tau) * (1.0 if positive else rng.choice([-1.0, 1.0]))
    if fam in (Family.CLAYTON, Family.GUMBEL, Family.JOE):
        rotation = (0 if tau > 0 else 90) if positive else int(rng.choice([0, 180] if tau > 0 else [90, 270]))
    else:
        rotation = 0
    par = tau_to_param(fam, tau, rotation)
    if fam is Family.STUDENT:
        par = (par[0], float(rng.choice([3.0, 6.0, 15.0])))
    return BiCop(fam, rotation, tuple(par))


def random_vine(rng, k, **kw):
    order = tuple(int(j) for j in rng.permutation(k))
    pairs = [[random_pair(rng, **kw) for _ in range(k + 1 - t)] for t in range(1, k + 1)]
    return DVineRegression(order, pairs)


GRID = np.linspace(0.05, 0.95, 19)

# three dependence levels per family/rotation; beyond |tau| ~ 0.6 the grid
# corners push h within 1e-13 of 0 or 1, where double precision cannot hold
# the inverse to 1e-8
TAUS = {
    Family.GAUSSIAN: (-0.6, 0.2, 0.6),
    Family.STUDENT: (-0.4, 0.2, 0.6),
    Family.FRANK: (-0.6, 0.1, 0.6),
    Family.CLAYTON: (0.1, 0.35, 0.6),
    Family.GUMBEL: (0.1, 0.35, 0.6),
    Family.JOE: (0.1, 0.35, 0.6),
}
T_DF = (3.0, 8.0, 25.0)


def all_copulas():
    out = [BiCop()]
    for fam, taus in TAUS.items():
        rots = (0, 90, 180, 270) if fam in (Family.CLAYTON, Family.GUMBEL, Family.JOE) else (0,)
        for rot in rots:
            for i, tau in enumerate(taus):
                signed = -tau if rot in (90, 270) else tau
                params = tau_to_param(fam, signed, rot)
                if fam is Family.STUDENT:
                    params = (params[0], T_DF[i])
                out.append(BiCop(fam, rot, params))
    return out
