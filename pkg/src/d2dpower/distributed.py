"""Distributed on-off power control.

D2D pairs transmit at peak power iff their direct-link gain exceeds a common
threshold; the cellular user, when location aware, uses a two-point
(on-off) law whose on-power depends on its distance to the base station.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netmodel import NetworkRealization, PowerProfile, SystemParams, sinc


@dataclass(frozen=True)
class OnOffPolicy:
    g_min: float
    p_s: float
    p_on: float

    def __post_init__(self):
        if self.g_min < 0:
            raise ValueError("g_min must be nonnegative")
        if not 0 <= self.p_s <= 1:
            raise ValueError("p_s must lie in [0, 1]")

    @classmethod
    def from_threshold(cls, g_min: float, d_kk: float, alpha: float, p_on: float) -> "OnOffPolicy":
        return cls(g_min=float(g_min), p_s=math.exp(-g_min * d_kk ** alpha), p_on=float(p_on))

    @classmethod
    def from_probability(cls, p_s: float, d_kk: float, alpha: float, p_on: float) -> "OnOffPolicy":
        return cls(g_min=optimal_threshold(p_s, d_kk, alpha), p_s=float(p_s), p_on=float(p_on))


@dataclass(frozen=True)
class CellularOnOff:
    d: float
    p_star: float
    tx_prob: float
    p_tilde: float


def on_off_decision(direct_gain, policy: OnOffPolicy):
    """``p_on`` where the gain is strictly above ``g_min``, else 0."""
    g = np.asarray(direct_gain, dtype=float)
    if np.any(g < 0):
        raise ValueError("direct gain must be nonnegative")
    out = np.where(g > policy.g_min, policy.p_on, 0.0)
    return out if out.ndim else float(out)


def beta_tilde(density: float, d_kk: float, alpha: float) -> float:
    """Target SINR above which the sum-rate-optimal transmit probability drops below 1."""
    if density <= 0:
        return math.inf
    return (float(sinc(2 / alpha)) / (math.pi * density * d_kk ** 2)) ** (alpha / 2)


def optimal_ps(density: float, beta: float, d_kk: float, alpha: float) -> float:
    """Sum-rate-optimal transmit probability ``min{sinc(2/a) / (pi lam beta^(2/a) d^2), 1}``.

    ``density == 0`` or ``beta == 0`` return the limit 1.
    """
    if density < 0 or beta < 0:
        raise ValueError("density and beta must be nonnegative")
    if density == 0 or beta == 0:
        return 1.0
    val = float(sinc(2 / alpha)) / (math.pi * density * beta ** (2 / alpha) * d_kk ** 2)
    return min(val, 1.0)


def optimal_threshold(p_s_star: float, d_kk: float, alpha: float) -> float:
    """Direct-gain threshold ``-ln(P_s) / d^alpha`` realizing a transmit probability."""
    if not 0 < p_s_star <= 1:
        raise ValueError("transmit probability must lie in (0, 1]")
    if p_s_star == 1:
        return 0.0
    return -math.log(p_s_star) / d_kk ** alpha


def d2d_power_moment(p_s: float, p_on: float, alpha: float) -> float:
    """``E[p_k^(2/alpha)]`` for on-off D2D powers ``{0, p_on}`` with ``P[on] = p_s``.

    This is the only place where thinning is folded into the power moment;
    analytic formulas that take a moment must then use the unthinned density.
    """
    return p_s * p_on ** (2 / alpha)


def p_tilde(d: float, params: SystemParams, d2d_moment: float, beta0: float | None = None) -> float:
    """Unconstrained maximizer of ``phi(p)/p`` in the interference-limited case."""
    a = params.pathloss_exp
    b0 = params.beta_cell if beta0 is None else beta0
    ek = params.expected_k()
    coef = (2 * d2d_moment / (a * float(sinc(2 / a)))) ** (a / 2)
    return coef * ek ** (a / 2) * b0 * (d / params.cell_radius_m) ** a


def cellular_power_policy(d: float, params: SystemParams, d2d_moment: float,
                          beta0: float | None = None) -> CellularOnOff:
    """Optimal two-point cellular law for a user at distance ``d``.

    Closed form derived with zero noise; with noise it is an approximation
    (see :func:`cellular_power_numeric`).
    """
    pt = p_tilde(d, params, d2d_moment, beta0)
    p_star = max(min(pt, params.p_max_cell_w), params.p_avg_cell_w)
    return CellularOnOff(d=float(d), p_star=p_star, tx_prob=params.p_avg_cell_w / p_star, p_tilde=pt)


def conditional_cell_coverage(p, d: float, params: SystemParams, d2d_moment: float,
                              beta0: float | None = None):
    """Coverage of a cellular user at distance ``d`` sending at power ``p`` (``phi(p)``)."""
    a = params.pathloss_exp
    b0 = params.beta_cell if beta0 is None else beta0
    a1 = params.noise_w * b0
    a2 = math.pi * params.d2d_density * b0 ** (2 / a) * d2d_moment / float(sinc(2 / a))
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(-a1 * d ** a / p - a2 * d ** 2 * p ** (-2 / a))
    return out if out.ndim else float(out)


def cellular_power_numeric(d: float, params: SystemParams, d2d_moment: float,
                           beta0: float | None = None, rtol: float = 1e-10) -> CellularOnOff:
    """Like :func:`cellular_power_policy` but maximizing ``phi(p)/p`` numerically,
    noise included, by golden-section search on ``log p``."""
    lo = math.log(1e-6 * params.p_avg_cell_w)
    hi = math.log(params.p_max_cell_w)

    def objective(u):
        p = math.exp(u)
        # log(phi(p)/p) is unimodal in log p
        return math.log(max(conditional_cell_coverage(p, d, params, d2d_moment, beta0), 1e-300)) - u

    u = _golden_max(objective, lo, hi, rtol)
    pt = math.exp(u)
    p_star = max(min(pt, params.p_max_cell_w), params.p_avg_cell_w)
    return CellularOnOff(d=float(d), p_star=p_star, tx_prob=params.p_avg_cell_w / p_star, p_tilde=pt)


def _golden_max(f, a: float, b: float, rtol: float) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = f(c), f(e)
    while abs(b - a) > rtol * max(1.0, abs(a) + abs(b)) * 0.5:
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = f(e)
    return 0.5 * (a + b)


def apply_distributed(real: NetworkRealization, params: SystemParams, policy: OnOffPolicy,
                      p0: float | None = None, cell_onoff: bool = False,
                      rng: np.random.Generator | None = None, cell_uniform: float | None = None,
                      gains: np.ndarray | None = None, beta0: float | None = None) -> PowerProfile:
    """Power profile under on-off D2D control.

    The cellular user sends at ``p0`` (default ``P_max,c``) or, with
    ``cell_onoff``, at its optimal on-power with probability ``tx_prob``;
    the coin is ``cell_uniform`` if given, otherwise drawn from ``rng``.
    """
    if gains is None:
        gains = real.gain_matrix(params.pathloss_exp)
    p = np.empty(real.k + 1)
    p[1:] = on_off_decision(np.diag(gains)[1:], policy)
    if cell_onoff:
        moment = d2d_power_moment(policy.p_s, policy.p_on, params.pathloss_exp)
        cp = cellular_power_policy(real.cell_user_distance(), params, moment, beta0)
        if cell_uniform is None:
            if rng is None:
                raise ValueError("cellular on-off needs a random stream")
            cell_uniform = float(rng.random())
        p[0] = cp.p_star if cell_uniform < cp.tx_prob else 0.0
    else:
        p[0] = params.p_max_cell_w if p0 is None else p0
    return PowerProfile(p)
