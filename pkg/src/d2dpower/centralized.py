"""Centralized power control: maximize the cellular SINR subject to per-link
SINR targets, with successive removal of the worst interferer until the
program becomes feasible."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .netmodel import NetworkRealization, PowerProfile, SystemParams

RHO_MARGIN = 1e-9
_POWER_ITER_TOL = 1e-12
_POWER_ITER_MAX = 10_000
_DENSE_MAX = 300


class InfeasibleError(RuntimeError):
    """The SINR targets cannot be met by any admissible power vector."""


@dataclass(frozen=True)
class ConstraintSystem:
    """``(I - F) p >= b`` and ``0 <= p <= p_max`` over the retained links.

    Position 0 is always the cellular link; ``active_set[i]`` is the original
    realization index of position ``i``.
    """

    f_matrix: np.ndarray
    b_vec: np.ndarray
    g0: float
    g0c: np.ndarray
    p_max_vec: np.ndarray
    active_set: tuple
    noise_w: float

    def __post_init__(self):
        f = np.asarray(self.f_matrix, dtype=float)
        n = f.shape[0]
        if f.shape != (n, n) or n < 1:
            raise ValueError("F must be a nonempty square matrix")
        object.__setattr__(self, "f_matrix", f)
        object.__setattr__(self, "b_vec", np.asarray(self.b_vec, dtype=float).reshape(n))
        object.__setattr__(self, "g0c", np.asarray(self.g0c, dtype=float).reshape(n - 1))
        object.__setattr__(self, "p_max_vec", np.asarray(self.p_max_vec, dtype=float).reshape(n))
        object.__setattr__(self, "active_set", tuple(int(i) for i in self.active_set))
        if len(self.active_set) != n or self.active_set[0] != 0:
            raise ValueError("active_set must start with the cellular link and match F")
        if np.any(f < 0) or np.any(np.diag(f) != 0):
            raise ValueError("F must be nonnegative with zero diagonal")

    @property
    def size(self) -> int:
        return self.f_matrix.shape[0]

    @property
    def admitted(self) -> tuple:
        return self.active_set[1:]


@dataclass(frozen=True)
class AdmissionStep:
    removed: int          # original index of the removed D2D link
    rho_before: float
    rho_after: float
    reason: str           # "spectral" or "power_caps"


@dataclass(frozen=True)
class ControlOutcome:
    admitted: tuple
    profile: PowerProfile
    achieved_cell_sinr: float
    spectral_radius_final: float
    removals: tuple = field(default=())


def constraints_from_gains(gains: np.ndarray, beta_cell: float, beta_d2d: float,
                           noise_w: float, p_max_cell: float, p_max_d2d: float) -> ConstraintSystem:
    """Build ``F``, ``b`` and the objective vectors from a full gain matrix."""
    gains = np.asarray(gains, dtype=float)
    n = gains.shape[0]
    direct = np.diag(gains).copy()
    if np.any(direct <= 0):
        raise ValueError("degenerate direct link")
    betas = np.full(n, float(beta_d2d))
    betas[0] = beta_cell
    f = betas[:, None] * gains / direct[:, None]
    np.fill_diagonal(f, 0.0)
    b = betas * noise_w / direct
    pmax = np.full(n, float(p_max_d2d))
    pmax[0] = p_max_cell
    return ConstraintSystem(f_matrix=f, b_vec=b, g0=float(direct[0]), g0c=gains[0, 1:].copy(),
                            p_max_vec=pmax, active_set=tuple(range(n)), noise_w=float(noise_w))


def build_constraints(real: NetworkRealization, params: SystemParams,
                      beta_cell: float | None = None, beta_d2d: float | None = None) -> ConstraintSystem:
    g = real.gain_matrix(params.pathloss_exp)
    return constraints_from_gains(
        g,
        params.beta_cell if beta_cell is None else beta_cell,
        params.beta_d2d if beta_d2d is None else beta_d2d,
        params.noise_w, params.p_max_cell_w, params.p_max_d2d_w)


def spectral_radius(f: np.ndarray, method: str = "auto", tol: float = _POWER_ITER_TOL,
                    max_iter: int = _POWER_ITER_MAX) -> float:
    """Perron root of a nonnegative square matrix.

    ``method="eig"`` takes the largest eigenvalue modulus from a dense
    eigensolve.  ``method="power"`` runs power iteration, stopped when the
    Collatz-Wielandt bracket ``[min (Fx)_i/x_i, max (Fx)_i/x_i]`` (which
    always contains the spectral radius) is relatively narrower than
    ``tol``; it falls back to the eigensolve for reducible or periodic
    inputs.  ``"auto"`` uses the eigensolve up to ``_DENSE_MAX`` rows, since
    interference matrices often have a small spectral gap.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("matrix must be finite and nonnegative")
    if method not in ("auto", "eig", "power"):
        raise ValueError(f"unknown method {method!r}")
    n = f.shape[0]
    if n == 0 or not f.any():
        return 0.0
    if method == "eig" or (method == "auto" and n <= _DENSE_MAX):
        return float(np.max(np.abs(np.linalg.eigvals(f))))
    x = np.full(n, 1.0 / n)
    last_width = np.inf
    for it in range(max_iter):
        y = f @ x
        if not np.all(y > 0):
            break
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        width = hi - lo
        if width <= tol * hi:
            return float(0.5 * (lo + hi))
        # periodic matrices keep a fixed bracket; stop wasting iterations
        if it % 200 == 199:
            if width > 0.5 * last_width:
                break
            last_width = width
        x = y / y.sum()
    return float(np.max(np.abs(np.linalg.eigvals(f))))


def is_feasible(cs: ConstraintSystem) -> bool:
    """Feasibility test ``rho(F) < 1`` with a small safety margin (no power caps)."""
    return spectral_radius(cs.f_matrix) < 1.0 - RHO_MARGIN


def column_norms(cs: ConstraintSystem) -> np.ndarray:
    """Euclidean norms of the D2D columns ``f_1 .. f_K`` of ``F``."""
    return np.linalg.norm(cs.f_matrix[:, 1:], axis=0)


def worst_link(cs: ConstraintSystem) -> int:
    """Position of the D2D column with the largest norm (first on ties)."""
    if cs.size < 2:
        raise ValueError("no D2D link to remove")
    return 1 + int(np.argmax(column_norms(cs)))


def remove_link(cs: ConstraintSystem, pos: int) -> ConstraintSystem:
    if pos < 1 or pos >= cs.size:
        raise ValueError("can only remove a D2D position")
    keep = np.array([i for i in range(cs.size) if i != pos])
    return ConstraintSystem(
        f_matrix=cs.f_matrix[np.ix_(keep, keep)],
        b_vec=cs.b_vec[keep],
        g0=cs.g0,
        g0c=np.delete(cs.g0c, pos - 1),
        p_max_vec=cs.p_max_vec[keep],
        active_set=tuple(cs.active_set[i] for i in keep),
        noise_w=cs.noise_w,
    )


def admission_control(cs: ConstraintSystem, trace: list | None = None) -> ConstraintSystem:
    """Drop max-norm D2D columns until ``rho(F) < 1``."""
    rho = spectral_radius(cs.f_matrix)
    while rho >= 1.0 - RHO_MARGIN and cs.size > 1:
        pos = worst_link(cs)
        removed = cs.active_set[pos]
        cs = remove_link(cs, pos)
        new_rho = spectral_radius(cs.f_matrix)
        if trace is not None:
            trace.append(AdmissionStep(removed, rho, new_rho, "spectral"))
        rho = new_rho
    return cs


def minimal_powers(cs: ConstraintSystem) -> np.ndarray:
    """Componentwise-smallest solution of ``(I - F) p = b`` (needs rho < 1)."""
    return np.linalg.solve(np.eye(cs.size) - cs.f_matrix, cs.b_vec)


def constraint_ratios(cs: ConstraintSystem, p: np.ndarray) -> np.ndarray:
    """``SINR_i / beta_i`` for each retained link, from ``F`` and ``b``."""
    need = cs.f_matrix @ p + cs.b_vec
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(need > 0, p / np.where(need > 0, need, 1.0), np.inf)


def cell_sinr(cs: ConstraintSystem, p: np.ndarray) -> float:
    den = float(cs.g0c @ p[1:]) + cs.noise_w
    num = cs.g0 * p[0]
    if den == 0:
        return np.inf if num > 0 else 0.0
    return num / den


def solve_power(cs: ConstraintSystem) -> PowerProfile:
    """Optimal powers for the retained links (positions of ``cs``).

    The linear-fractional objective is turned into one LP with the
    change of variables ``y = t q``, ``q = p / p_max``, and normalized
    denominator.  Raises :class:`InfeasibleError` when the caps cannot
    be met.
    """
    if not is_feasible(cs):
        raise InfeasibleError("spectral radius not below one")
    n = cs.size
    pmax = cs.p_max_vec
    if n == 1:
        if cs.b_vec[0] > pmax[0]:
            raise InfeasibleError("infeasible under power caps")
        return PowerProfile(pmax.copy())
    if cs.noise_w <= 0:
        raise ValueError("centralized solve needs positive noise when D2D links are present")

    p_min = minimal_powers(cs)
    if np.any(p_min < 0) or np.any(p_min > pmax * (1 + 1e-12)):
        raise InfeasibleError("infeasible under power caps")

    p_lp = _solve_lp(cs)
    candidates = [np.minimum(p_min, pmax)]
    if p_lp is not None:
        candidates.insert(0, p_lp)
    for p in candidates:
        if np.all(constraint_ratios(cs, p) >= 1 - 1e-9) and np.all(p <= pmax * (1 + 1e-12)):
            return PowerProfile(np.minimum(p, pmax))
    return PowerProfile(candidates[-1])


def _solve_lp(cs: ConstraintSystem) -> np.ndarray | None:
    n = cs.size
    pmax = cs.p_max_vec
    fn = cs.f_matrix * pmax[None, :] / pmax[:, None]
    bn = cs.b_vec / pmax
    a = np.eye(n) - fn
    w = np.concatenate([[0.0], cs.g0c * pmax[1:]])
    ref = cs.noise_w + w.sum()
    w = w / ref
    ws = cs.noise_w / ref

    # variables z = [y_0 .. y_{n-1}, t]
    sinr_rows = np.hstack([-a, bn[:, None]])
    sinr_rows /= np.abs(sinr_rows).max(axis=1, keepdims=True)
    cap_rows = np.hstack([np.eye(n), -np.ones((n, 1))])
    a_ub = np.vstack([sinr_rows, cap_rows])
    b_ub = np.zeros(2 * n)
    a_eq = np.concatenate([w, [ws]])[None, :]
    c = np.zeros(n + 1)
    c[0] = -1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=[(0, None)] * (n + 1),
                  method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0 or res.x[-1] <= 0:
        return None
    q = np.clip(res.x[:n] / res.x[-1], 0.0, 1.0)
    return _polish(cs, float(q[0] * pmax[0]))


def _polish(cs: ConstraintSystem, p0: float) -> np.ndarray:
    """Exact powers for the LP's cellular power ``p0``.

    For fixed ``p0`` the componentwise-smallest D2D powers meeting their
    targets are affine in ``p0`` and disturb the cellular link least, so
    they replace the LP's D2D powers; if that breaks a cap (LP tolerance),
    ``p0`` is lowered onto the binding cap.
    """
    f = cs.f_matrix
    m = np.eye(cs.size - 1) - f[1:, 1:]
    base = np.linalg.solve(m, cs.b_vec[1:])
    slope = np.linalg.solve(m, f[1:, 0])
    caps = cs.p_max_vec[1:]
    pd = base + slope * p0
    over = pd > caps
    if np.any(over):
        with np.errstate(divide="ignore"):
            lim = np.where(slope > 0, (caps - base) / slope, np.inf)
        p0 = max(min(p0, float(lim.min())), 0.0)
        pd = np.minimum(base + slope * p0, caps)
    return np.concatenate([[p0], pd])


def centralized_control(real: NetworkRealization, params: SystemParams,
                        beta_cell: float | None = None, beta_d2d: float | None = None,
                        gains: np.ndarray | None = None) -> ControlOutcome:
    """Admission control followed by the optimal power solve, on one realization.

    Cap infeasibility after ``rho(F) < 1`` triggers one more max-norm
    removal.  If even the cellular link alone cannot reach its target it
    transmits at peak power with no D2D link admitted.
    """
    if gains is None:
        gains = real.gain_matrix(params.pathloss_exp)
    cs = constraints_from_gains(
        gains,
        params.beta_cell if beta_cell is None else beta_cell,
        params.beta_d2d if beta_d2d is None else beta_d2d,
        params.noise_w, params.p_max_cell_w, params.p_max_d2d_w)
    trace: list = []
    while True:
        cs = admission_control(cs, trace)
        try:
            sub = solve_power(cs)
            break
        except InfeasibleError:
            if cs.size == 1:
                sub = PowerProfile(cs.p_max_vec.copy())
                break
            rho = spectral_radius(cs.f_matrix)
            pos = worst_link(cs)
            removed = cs.active_set[pos]
            cs = remove_link(cs, pos)
            trace.append(AdmissionStep(removed, rho, spectral_radius(cs.f_matrix), "power_caps"))

    p = np.zeros(gains.shape[0])
    p[list(cs.active_set)] = sub.p
    achieved = _cell_sinr_full(gains, p, params.noise_w)
    return ControlOutcome(admitted=cs.admitted, profile=PowerProfile(p), achieved_cell_sinr=achieved,
                          spectral_radius_final=spectral_radius(cs.f_matrix), removals=tuple(trace))


def _cell_sinr_full(gains: np.ndarray, p: np.ndarray, noise: float) -> float:
    den = float(gains[0, 1:] @ p[1:]) + noise
    num = gains[0, 0] * p[0]
    if den == 0:
        return np.inf if num > 0 else 0.0
    return float(num / den)


# -- plain-text matrix format ---------------------------------------------------

_HEADER = "# d2d-constraints v1"


def dump_constraints(cs: ConstraintSystem) -> str:
    def row(v):
        return " ".join(repr(float(x)) for x in np.atleast_1d(v))

    lines = [_HEADER,
             f"size {cs.size}",
             f"noise {cs.noise_w!r}",
             "active " + " ".join(str(i) for i in cs.active_set),
             f"g0 {cs.g0!r}",
             "g0c " + row(cs.g0c) if cs.size > 1 else "g0c",
             "p_max " + row(cs.p_max_vec),
             "b " + row(cs.b_vec),
             "F"]
    lines += [row(r) for r in cs.f_matrix]
    return "\n".join(lines) + "\n"


def load_constraints(text: str) -> ConstraintSystem:
    fields: dict = {}
    it = iter(io.StringIO(text))
    for raw in it:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.split()
        if key == "F":
            n = int(fields["size"][0])
            rows = []
            while len(rows) < n:
                r = next(it).split("#", 1)[0].split()
                if r:
                    rows.append([float(v) for v in r])
            fields["F"] = rows
        else:
            fields[key] = vals
    try:
        return ConstraintSystem(
            f_matrix=np.array(fields["F"], dtype=float),
            b_vec=[float(v) for v in fields["b"]],
            g0=float(fields["g0"][0]),
            g0c=[float(v) for v in fields["g0c"]],
            p_max_vec=[float(v) for v in fields["p_max"]],
            active_set=[int(v) for v in fields["active"]],
            noise_w=float(fields["noise"][0]),
        )
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r} in constraint record") from None
