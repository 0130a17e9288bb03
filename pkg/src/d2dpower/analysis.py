"""Analytic coverage, rate, and capacity expressions.

Conventions
-----------
* ``sinc`` is the normalized sinc, ``sin(pi x) / (pi x)``.
* ``d2d_moment`` is ``E[p_k^(2/alpha)]`` over D2D transmit powers.  When
  on-off control is in force the moment already contains the transmit
  probability (see :func:`d2dpower.distributed.d2d_power_moment`), so the
  density passed alongside it is the unthinned one.
* Rate integrals use the kernel ``1/(1+x)``, so they are in nats per
  channel use.  Transmission capacity carries the ``log2(1+beta)`` factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .distributed import beta_tilde, p_tilde
from .netmodel import SystemParams, dist_pdf_crosslink, mean_crosslink_distance, sinc

QUAD_RTOL = 1e-8
RATE_RTOL = 1e-7
SUM_RATE_RTOL = 1e-6
_QUAD_LIMIT = 400


class _Unbounded:
    """Marker for an integral that diverges (no interference and no noise)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "unbounded"

    __str__ = __repr__

    def __reduce__(self):
        return (_Unbounded, ())


UNBOUNDED = _Unbounded()


@dataclass(frozen=True)
class CoverageCoefficients:
    a1: float
    a2: float
    b1: float
    b2: float
    kappa: float
    beta_tilde: float


@dataclass(frozen=True)
class ConstantPower:
    """Cellular transmit power fixed at ``p``."""

    p: float


@dataclass(frozen=True)
class OnOffPower:
    """Cellular power ``p_on`` with probability ``prob``, otherwise silent."""

    p_on: float
    prob: float


@dataclass(frozen=True)
class ErgodicRate:
    """Typical-link ergodic rate in nats; either field may be ``UNBOUNDED``."""

    exact: object
    approx: object


def _sinc2(alpha: float) -> float:
    return float(sinc(2 / alpha))


def interference_coeff(density: float, beta, alpha: float, moment: float):
    """``pi lam beta^(2/alpha) E[p^(2/alpha)] / sinc(2/alpha)``."""
    return math.pi * density * np.asarray(beta, dtype=float) ** (2 / alpha) * moment / _sinc2(alpha)


def kappa(params: SystemParams, power_ratio: float | None = None) -> float:
    """Cross-tier coefficient ``(p0/pk)^(2/alpha) (d_kk / E[d_k0])^2``."""
    a = params.pathloss_exp
    ratio = params.p_max_cell_w / params.p_max_d2d_w if power_ratio is None else power_ratio
    return ratio ** (2 / a) * (params.d2d_link_dist_m / mean_crosslink_distance(params.cell_radius_m)) ** 2


def coverage_coefficients(params: SystemParams, beta0: float | None = None, beta: float | None = None,
                          d2d_moment: float | None = None) -> CoverageCoefficients:
    """Coefficients of the cellular (``a``) and D2D (``b``) coverage exponents.

    ``d2d_moment`` defaults to all D2D links on at peak power.
    """
    a = params.pathloss_exp
    b0 = params.beta_cell if beta0 is None else beta0
    b = params.beta_d2d if beta is None else beta
    m = params.p_max_d2d_w ** (2 / a) if d2d_moment is None else d2d_moment
    lam = params.d2d_density
    return CoverageCoefficients(
        a1=params.noise_w * b0,
        a2=float(interference_coeff(lam, b0, a, m)),
        b1=params.noise_w * b,
        b2=float(interference_coeff(lam, b, a, m)),
        kappa=kappa(params),
        beta_tilde=beta_tilde(lam, params.d2d_link_dist_m, a),
    )


def laplace_ppp(s, density: float, alpha: float, moment: float):
    """Laplace transform of PPP shot-noise interference with Rayleigh fading.

    ``exp(-pi lam E[p^(2/alpha)] s^(2/alpha) / sinc(2/alpha))``.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("s must be nonnegative")
    if not alpha > 2:
        raise ValueError("alpha must exceed 2")
    out = np.exp(-math.pi * density * moment * s ** (2 / alpha) / _sinc2(alpha))
    return out if out.ndim else float(out)


# -- cellular link ------------------------------------------------------------

def _cell_cov_const(p0: float, a1: float, a2: float, params: SystemParams, rtol: float) -> float:
    if p0 <= 0:
        return 0.0
    a = params.pathloss_exp
    r = params.cell_radius_m
    c1 = a1 * r ** a / p0
    c2 = a2 * r ** 2 / p0 ** (2 / a)
    if c1 == 0 and c2 == 0:
        return 1.0
    # u = d^2 / R^2 is uniform on [0, 1] for a user uniform in the cell
    f = lambda u: math.exp(-c1 * u ** (a / 2) - c2 * u)
    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=rtol, limit=_QUAD_LIMIT)
    return float(val)


def cell_coverage_exact(params: SystemParams, p0_dist, d2d_moment: float, beta0: float | None = None,
                       rtol: float = QUAD_RTOL) -> float:
    """Cellular coverage ``E_X[exp(-a1 X - a2 X^(2/alpha))]``, ``X = d^alpha / p0``,
    averaging over a user uniform in the cell by quadrature.

    ``p0_dist`` is a :class:`ConstantPower` or :class:`OnOffPower`; the
    silent state of an on-off law counts as not covered.
    """
    b0 = params.beta_cell if beta0 is None else beta0
    co = coverage_coefficients(params, beta0=b0, d2d_moment=d2d_moment)
    if isinstance(p0_dist, ConstantPower):
        return _cell_cov_const(p0_dist.p, co.a1, co.a2, params, rtol)
    if isinstance(p0_dist, OnOffPower):
        if not 0 <= p0_dist.prob <= 1:
            raise ValueError("on probability must lie in [0, 1]")
        return p0_dist.prob * _cell_cov_const(p0_dist.p_on, co.a1, co.a2, params, rtol)
    raise TypeError(f"unsupported cellular power law: {type(p0_dist).__name__}")


def cell_coverage_closed_alpha4(params: SystemParams, beta0: float | None = None, p_s: float = 1.0) -> float:
    """Closed-form cellular coverage ``(1 - e^-c)/c`` for ``alpha = 4``, no noise,
    ``p0 = P_max,c``, D2D on-off with transmit probability ``p_s``.

    Noise in ``params`` is ignored.
    """
    if params.pathloss_exp != 4:
        raise ValueError("closed form needs pathloss_exp == 4")
    b0 = params.beta_cell if beta0 is None else beta0
    c = (math.pi * params.d2d_density * p_s * params.cell_radius_m ** 2 / float(sinc(0.5))
         * math.sqrt(params.p_max_d2d_w / params.p_max_cell_w) * math.sqrt(b0))
    if c < 1e-12:
        return 1.0 - c / 2
    return -math.expm1(-c) / c


def cell_coverage_lower_bound(params: SystemParams, e_inv_p0: float, d2d_moment: float,
                              beta0: float | None = None) -> float:
    """Jensen lower bound on :func:`cell_coverage_exact` given ``E[1/p0]``."""
    a = params.pathloss_exp
    r = params.cell_radius_m
    co = coverage_coefficients(params, beta0=beta0, d2d_moment=d2d_moment)
    w = 2 / (2 + a)
    expo = co.a1 * w * r ** a * e_inv_p0 + co.a2 * w ** (2 / a) * r ** 2 * e_inv_p0 ** (2 / a)
    return math.exp(-expo)


def cell_coverage_location_aware(d: float, params: SystemParams, d2d_moment: float, p0: float,
                                 beta0: float | None = None) -> float:
    """Coverage of a cellular user at distance ``d`` always sending at ``p0`` (noise included)."""
    a = params.pathloss_exp
    co = coverage_coefficients(params, beta0=beta0, d2d_moment=d2d_moment)
    if p0 <= 0:
        return 0.0
    return math.exp(-co.a1 * d ** a / p0 - co.a2 * d ** 2 * p0 ** (-2 / a))


def cell_coverage_optimal_onoff(d: float, params: SystemParams, d2d_moment: float,
                                beta0: float | None = None) -> float:
    """Interference-limited coverage at distance ``d`` under the optimal two-point law.

    Three regimes by where the unconstrained optimum ``p~0(d)`` sits relative
    to ``[P_avg,c, P_max,c]``.  In the middle regime the exponent evaluates to
    ``alpha/2`` at the optimum.
    """
    a = params.pathloss_exp
    b0 = params.beta_cell if beta0 is None else beta0
    pavg, pmax = params.p_avg_cell_w, params.p_max_cell_w
    # a2 d^2 = E[K] beta0^(2/a) E[p^(2/a)] (d/R)^2 / sinc(2/a)
    e = params.expected_k() * b0 ** (2 / a) * d2d_moment * (d / params.cell_radius_m) ** 2 / _sinc2(a)
    pt = p_tilde(d, params, d2d_moment, b0)
    if pt >= pmax:
        return pavg / pmax * math.exp(-e * pmax ** (-2 / a))
    if pt > pavg:
        return pavg * math.exp(-a / 2) / pt
    return math.exp(-e * pavg ** (-2 / a))


# -- D2D link -----------------------------------------------------------------

def _cross_expect(ratio: float, params: SystemParams, rtol: float) -> float:
    """``E[1 / (1 + ratio (d_kk/d_k0)^alpha)]`` over the disk line-picking distance."""
    if ratio <= 0:
        return 1.0
    a = params.pathloss_exp
    r_cell = params.cell_radius_m
    t = ratio * params.d2d_link_dist_m ** a

    def f(r):
        ra = r ** a
        return dist_pdf_crosslink(r, r_cell) * ra / (ra + t)

    # the integrand rises from zero near r ~ t^(1/alpha); give quad the knee
    knee = min(t ** (1 / a), 2 * r_cell)
    pts = [knee] if 0 < knee < 2 * r_cell else None
    val, _ = integrate.quad(f, 0.0, 2 * r_cell, epsabs=0.0, epsrel=rtol, limit=_QUAD_LIMIT, points=pts)
    return float(val)


def d2d_coverage(params: SystemParams, beta: float | None = None, p0: float | None = None,
                 pk: float | None = None, density: float | None = None, rtol: float = QUAD_RTOL) -> float:
    """Typical D2D link coverage with fixed powers.

    ``exp(-pi lam beta^(2/alpha) d^2 / sinc(2/alpha)) E[1/(1 + beta (p0/pk)(d/d_k0)^alpha)]``
    times ``exp(-beta sigma^2 d^alpha / pk)``; the expectation is over the
    distance between two uniform points of the cell.
    """
    a = params.pathloss_exp
    b = params.beta_d2d if beta is None else beta
    p0 = params.p_max_cell_w if p0 is None else p0
    pk = params.p_max_d2d_w if pk is None else pk
    lam = params.d2d_density if density is None else density
    if b == 0:
        return 1.0
    d = params.d2d_link_dist_m
    val = math.exp(-math.pi * lam * b ** (2 / a) * d ** 2 / _sinc2(a) - b * params.noise_w * d ** a / pk)
    return val * _cross_expect(b * p0 / pk, params, rtol)


def d2d_coverage_approx(params: SystemParams, beta: float | None = None, p0: float | None = None,
                        pk: float | None = None, density: float | None = None) -> float:
    """Closed-form approximation of :func:`d2d_coverage` (interference limited),
    replacing the cross-tier expectation by its value at the mean distance."""
    a = params.pathloss_exp
    b = params.beta_d2d if beta is None else beta
    p0 = params.p_max_cell_w if p0 is None else p0
    pk = params.p_max_d2d_w if pk is None else pk
    lam = params.d2d_density if density is None else density
    d = params.d2d_link_dist_m
    ed = mean_crosslink_distance(params.cell_radius_m)
    lap = math.exp(-math.pi * lam * b ** (2 / a) * d ** 2 / _sinc2(a))
    return lap / (1 + (b * p0 / pk) ** (2 / a) * d ** 2 / ed ** 2)


# -- rates --------------------------------------------------------------------

def _half_line(f, rtol: float) -> float:
    """``int_0^inf f(x) dx`` through ``x = u/(1-u)``."""
    def g(u):
        if u >= 1.0:
            return 0.0
        w = 1.0 - u
        return f(u / w) / (w * w)

    val, _ = integrate.quad(g, 0.0, 1.0, epsabs=0.0, epsrel=rtol, limit=_QUAD_LIMIT)
    return float(val)


def d2d_ergodic_rate(params: SystemParams, thinned_density: float, power_ratio: float,
                     rtol: float = RATE_RTOL) -> ErgodicRate:
    """Ergodic SIR rate of the typical D2D link, ``int P[SIR >= x] / (1+x) dx``.

    ``thinned_density`` is the density of active D2D transmitters and
    ``power_ratio`` is ``p0 / pk``.  ``exact`` averages the cross-tier term
    over the line-picking distance; ``approx`` uses the mean-distance
    replacement.  Both are ``UNBOUNDED`` when there is no interference.
    """
    if thinned_density < 0 or power_ratio < 0:
        raise ValueError("density and power ratio must be nonnegative")
    if thinned_density == 0 and power_ratio == 0:
        return ErgodicRate(UNBOUNDED, UNBOUNDED)
    a = params.pathloss_exp
    d = params.d2d_link_dist_m
    lap = math.pi * thinned_density * d ** 2 / _sinc2(a)
    kap = kappa(params, power_ratio)

    def exact(x):
        return math.exp(-lap * x ** (2 / a)) * _cross_expect(x * power_ratio, params, rtol) / (1 + x)

    def approx(x):
        return math.exp(-lap * x ** (2 / a)) / ((1 + kap * x ** (2 / a)) * (1 + x))

    return ErgodicRate(_half_line(exact, rtol), _half_line(approx, rtol))


def transmission_capacity_fixed(beta: float, params: SystemParams, p_s: float) -> float:
    """``lam P_s pi R^2 exp(-pi lam P_s beta^(2/alpha) d^2 / sinc) log2(1+beta) / (1 + kappa beta^(2/alpha))``."""
    a = params.pathloss_exp
    lt = params.d2d_density * p_s
    d = params.d2d_link_dist_m
    x = beta ** (2 / a)
    return (lt * math.pi * params.cell_radius_m ** 2 * math.exp(-math.pi * lt * x * d ** 2 / _sinc2(a))
            * math.log2(1 + beta) / (1 + kappa(params) * x))


def transmission_capacity(beta: float, params: SystemParams) -> float:
    """Capacity at the sum-rate-optimal transmit probability, in closed form.

    Below ``beta~`` every link transmits; above it the value no longer
    depends on the density.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    a = params.pathloss_exp
    bt = beta_tilde(params.d2d_density, params.d2d_link_dist_m, a)
    if beta <= bt:
        return transmission_capacity_fixed(beta, params, 1.0)
    x = beta ** (2 / a)
    return (_sinc2(a) / math.e * (params.cell_radius_m / params.d2d_link_dist_m) ** 2 / x
            * math.log2(1 + beta) / (1 + kappa(params) * x))


def d2d_sum_rate(params: SystemParams, rtol: float = SUM_RATE_RTOL) -> float:
    """D2D sum rate under the optimal on-off threshold, in nats.

    Integral over ``[0, beta~]`` with all links on plus a density-free tail.
    """
    lam = params.d2d_density
    if lam == 0:
        return 0.0
    a = params.pathloss_exp
    d = params.d2d_link_dist_m
    r = params.cell_radius_m
    kap = kappa(params)
    bt = beta_tilde(lam, d, a)
    lap = math.pi * lam * d ** 2 / _sinc2(a)

    def head(x):
        y = x ** (2 / a)
        return math.exp(-lap * y) / ((1 + kap * y) * (1 + x))

    def tail(x):
        y = x ** (2 / a)
        return 1.0 / (y * (1 + kap * y) * (1 + x))

    first, _ = integrate.quad(head, 0.0, bt, epsabs=0.0, epsrel=rtol, limit=_QUAD_LIMIT)
    second = _half_line(lambda x: tail(bt + x), rtol)
    return lam * math.pi * r ** 2 * first + _sinc2(a) / math.e * (r / d) ** 2 * second
