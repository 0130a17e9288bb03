"""Independent reference computations used only by the tests."""

import math

import numpy as np


def m_matrix_test(f: np.ndarray, x: float) -> bool:
    """True iff ``x I - F`` is a nonsingular M-matrix, i.e. ``x > rho(F)``.

    For a Z-matrix this holds iff Gaussian elimination without pivoting
    produces only positive pivots.
    """
    a = x * np.eye(f.shape[0]) - f
    n = a.shape[0]
    a = a.astype(float).copy()
    for k in range(n):
        if not a[k, k] > 0:
            return False
        if k + 1 < n:
            m = a[k + 1:, k] / a[k, k]
            a[k + 1:, k:] -= np.outer(m, a[k, k:])
    return True


def rho_bisect(f: np.ndarray, tol: float = 1e-13) -> float:
    """Spectral radius of a nonnegative matrix by bisection on the M-matrix test."""
    f = np.asarray(f, dtype=float)
    if f.size == 0 or not f.any():
        return 0.0
    lo, hi = 0.0, float(f.sum(axis=1).max())  # rho never exceeds the max row sum
    while hi - lo > tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if m_matrix_test(f, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _d2d_powers(cs, p0: np.ndarray) -> np.ndarray:
    """Smallest D2D powers meeting every D2D target for each cellular power in ``p0``."""
    f = cs.f_matrix
    fdd = f[1:, 1:]
    rhs = cs.b_vec[1:, None] + f[1:, :1] * p0[None, :]
    return np.linalg.solve(np.eye(fdd.shape[0]) - fdd, rhs)


def _objective(cs, p0, pd):
    return cs.g0 * p0 / (cs.noise_w + cs.g0c @ pd)


def best_cell_sinr_1d(cs, n_grid: int = 10_000) -> float:
    """Best cellular SINR by grid search over the cellular power.

    For a fixed cellular power the D2D powers that meet all targets and
    disturb the cellular link least are the componentwise-smallest ones, so
    the program reduces to one dimension.  The coarse pass joins a linear
    and a log-spaced grid (the feasible window can be far narrower than a
    linear step); a second grid of the same size refines between the
    neighbours of the best coarse point.  Returns ``-inf`` if nothing is
    feasible.
    """
    pmax = cs.p_max_vec
    if cs.size == 1:
        return cs.g0 * pmax[0] / cs.noise_w if pmax[0] >= cs.b_vec[0] else -math.inf

    def scan(p0):
        pd = _d2d_powers(cs, p0)
        ok = np.all(pd >= 0, axis=0) & np.all(pd <= pmax[1:, None], axis=0)
        ok &= p0 >= cs.f_matrix[0, 1:] @ pd + cs.b_vec[0]
        if not ok.any():
            return -math.inf, None
        val = np.where(ok, _objective(cs, p0, pd), -np.inf)
        i = int(np.argmax(val))
        return float(val[i]), i

    coarse = np.union1d(np.linspace(0.0, pmax[0], n_grid), np.geomspace(pmax[0] * 1e-12, pmax[0], n_grid))
    best, i = scan(coarse)
    if i is None:
        return best
    lo, hi = coarse[max(i - 1, 0)], coarse[min(i + 1, coarse.size - 1)]
    fine, _ = scan(np.linspace(lo, hi, n_grid))
    return max(best, fine)


def best_cell_sinr_full_grid(cs, n_grid: int = 161) -> float:
    """Brute-force grid over every power (2 or 3 variables)."""
    pmax = cs.p_max_vec
    axes = [np.linspace(0, pm, n_grid) for pm in pmax]
    mesh = np.meshgrid(*axes, indexing="ij")
    p = np.stack([m.ravel() for m in mesh])  # (n, points)
    need = cs.f_matrix @ p + cs.b_vec[:, None]
    ok = np.all(p >= need, axis=0)
    if not ok.any():
        return -math.inf
    val = cs.g0 * p[0] / (cs.noise_w + cs.g0c @ p[1:])
    return float(np.max(val[ok]))


def random_constraint_system(rng, k: int, beta_db: float = 0.0):
    """Random gain matrix in the shape of a small drop, as a ConstraintSystem."""
    from d2dpower.centralized import constraints_from_gains
    from d2dpower.netmodel import DEFAULT_NOISE_W

    n = k + 1
    dist = rng.uniform(60, 600, size=(n, n))
    dist[np.diag_indices(n)] = np.r_[rng.uniform(20, 500), rng.uniform(10, 80, size=k)]
    gains = rng.exponential(1.0, size=(n, n)) * dist ** -4.0
    b = 10 ** (beta_db / 10)
    return constraints_from_gains(gains, b, b, DEFAULT_NOISE_W, 0.1, 1e-4)
