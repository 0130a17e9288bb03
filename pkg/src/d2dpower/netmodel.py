"""Spatial model of a single-cell uplink with underlaid D2D pairs.

Index convention used everywhere in the package: receiver 0 is the base
station, transmitter 0 is the cellular user; receiver/transmitter ``k >= 1``
is D2D pair ``k``.  Gain matrices are indexed ``[receiver, transmitter]``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


def sinc(x):
    """Normalized sinc, ``sin(pi x) / (pi x)``."""
    return np.sinc(x)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    return 10.0 * np.log10(lin)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w) + 30.0


# thermal noise floor for a 1 MHz band
DEFAULT_NOISE_W = dbm_to_watt(-143.97)


@dataclass(frozen=True)
class SystemParams:
    """Scenario constants.  Powers in watts, distances in meters, betas linear."""

    cell_radius_m: float = 500.0
    d2d_density: float = 2e-5
    pathloss_exp: float = 4.0
    d2d_link_dist_m: float = 50.0
    p_max_cell_w: float = 0.1
    p_max_d2d_w: float = 1e-4
    p_avg_cell_w: float = 0.1
    noise_w: float = DEFAULT_NOISE_W
    drop_margin_m: float = 250.0
    beta_cell: float = 1.0
    beta_d2d: float = 1.0

    def __post_init__(self):
        if not self.cell_radius_m > 0:
            raise ValueError("cell_radius_m must be positive")
        if not self.d2d_density >= 0:
            raise ValueError("d2d_density must be nonnegative")
        if not self.pathloss_exp > 2:
            raise ValueError("pathloss_exp must exceed 2")
        if not self.d2d_link_dist_m > 0:
            raise ValueError("d2d_link_dist_m must be positive")
        if not 0 < self.p_avg_cell_w <= self.p_max_cell_w:
            raise ValueError("need 0 < p_avg_cell_w <= p_max_cell_w")
        if not self.p_max_d2d_w > 0:
            raise ValueError("p_max_d2d_w must be positive")
        if not self.noise_w >= 0:
            raise ValueError("noise_w must be nonnegative")
        if not self.drop_margin_m >= 0:
            raise ValueError("drop_margin_m must be nonnegative")
        if not (self.beta_cell >= 0 and self.beta_d2d >= 0):
            raise ValueError("SINR targets must be nonnegative")

    @property
    def drop_radius_m(self) -> float:
        return self.cell_radius_m + self.drop_margin_m

    def expected_k(self) -> float:
        """Mean number of D2D transmitters inside the cell."""
        return self.d2d_density * math.pi * self.cell_radius_m ** 2

    def expected_drop_count(self) -> float:
        return self.d2d_density * math.pi * self.drop_radius_m ** 2

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class PowerProfile:
    """Transmit powers in watts, index 0 is the cellular user."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    def check(self, params: SystemParams, rtol: float = 1e-9) -> None:
        p = self.p
        if p.ndim != 1 or p.size < 1:
            raise ValueError("power profile must be a nonempty vector")
        if np.any(p < 0):
            raise ValueError("negative transmit power")
        if p[0] > params.p_max_cell_w * (1 + rtol):
            raise ValueError("cellular power above P_max,c")
        if np.any(p[1:] > params.p_max_d2d_w * (1 + rtol)):
            raise ValueError("D2D power above P_max,d")

    @property
    def k(self) -> int:
        return self.p.size - 1


def _as_power(profile) -> np.ndarray:
    if isinstance(profile, PowerProfile):
        return profile.p
    return np.asarray(profile, dtype=float)


@dataclass(frozen=True)
class NetworkRealization:
    """One geometry and fading draw.

    ``fading`` is ``(K+1, K+1)`` with entry ``[k, l]`` the power gain
    ``|h_{k,l}|^2`` from transmitter ``l`` to receiver ``k``.
    """

    cell_user_pos: np.ndarray
    d2d_tx_pos: np.ndarray
    d2d_rx_pos: np.ndarray
    fading: np.ndarray
    bs_pos: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        for name in ("cell_user_pos", "bs_pos"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(2))
        for name in ("d2d_tx_pos", "d2d_rx_pos"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1, 2))
        fading = np.asarray(self.fading, dtype=float)
        k = self.d2d_tx_pos.shape[0]
        if self.d2d_rx_pos.shape[0] != k or fading.shape != (k + 1, k + 1):
            raise ValueError("inconsistent realization dimensions")
        if np.any(fading < 0):
            raise ValueError("fading power gains must be nonnegative")
        object.__setattr__(self, "fading", fading)

    @property
    def k(self) -> int:
        return self.d2d_tx_pos.shape[0]

    @property
    def tx_pos(self) -> np.ndarray:
        return np.vstack([self.cell_user_pos, self.d2d_tx_pos])

    @property
    def rx_pos(self) -> np.ndarray:
        return np.vstack([self.bs_pos, self.d2d_rx_pos])

    def distances(self) -> np.ndarray:
        """``d[k, l]`` = distance from transmitter ``l`` to receiver ``k``."""
        diff = self.rx_pos[:, None, :] - self.tx_pos[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def gain_matrix(self, alpha: float) -> np.ndarray:
        """Path-loss-and-fading gains ``G = |h|^2 d^-alpha``."""
        d = self.distances()
        if np.any(d == 0):
            raise ValueError("coincident nodes")
        return self.fading * d ** (-alpha)

    def in_cell(self, radius: float) -> np.ndarray:
        """Mask over D2D pairs whose transmitter lies inside ``radius``."""
        return np.hypot(self.d2d_tx_pos[:, 0], self.d2d_tx_pos[:, 1]) < radius

    def cell_user_distance(self) -> float:
        return float(np.hypot(*(self.cell_user_pos - self.bs_pos)))


def sample_realization(params: SystemParams, rng: np.random.Generator) -> NetworkRealization:
    """Draw one network: PPP of D2D transmitters in the drop disk, receivers
    at fixed distance with uniform angle, a uniform cellular user in the
    cell and i.i.d. unit-mean exponential power gains."""
    rd = params.drop_radius_m
    n = int(rng.poisson(params.d2d_density * math.pi * rd ** 2))
    r = rd * np.sqrt(rng.random(n))
    th = 2 * math.pi * rng.random(n)
    tx = np.column_stack([r * np.cos(th), r * np.sin(th)])
    phi = 2 * math.pi * rng.random(n)
    rx = tx + params.d2d_link_dist_m * np.column_stack([np.cos(phi), np.sin(phi)])
    rc = params.cell_radius_m * math.sqrt(rng.random())
    tc = 2 * math.pi * rng.random()
    cu = np.array([rc * math.cos(tc), rc * math.sin(tc)])
    fading = rng.exponential(1.0, size=(n + 1, n + 1))
    return NetworkRealization(cell_user_pos=cu, d2d_tx_pos=tx, d2d_rx_pos=rx, fading=fading)


def channel_gain(real: NetworkRealization, rx: int, tx: int, alpha: float) -> float:
    """``|h_{rx,tx}|^2 d_{rx,tx}^-alpha`` for a single pair of indices."""
    d = float(np.hypot(*(real.rx_pos[rx] - real.tx_pos[tx])))
    if d == 0:
        raise ValueError("coincident nodes")
    return float(real.fading[rx, tx]) * d ** (-alpha)


def sinr_all(gains: np.ndarray, p: np.ndarray, noise: float) -> np.ndarray:
    """SINR at every receiver for gain matrix ``gains`` and powers ``p``.

    A zero denominator gives ``inf`` when the desired signal is positive
    and 0 otherwise.
    """
    p = np.asarray(p, dtype=float)
    rx = gains @ p
    sig = np.diag(gains) * p
    den = rx - sig + noise
    # guard against a slightly negative denominator from cancellation
    den = np.maximum(den, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, sig / np.where(den > 0, den, 1.0), np.where(sig > 0, np.inf, 0.0))
    return out


def sinr_cellular(real: NetworkRealization, profile, params: SystemParams) -> float:
    p = _as_power(profile)
    if p.size != real.k + 1:
        raise ValueError("profile length must be K+1")
    g = real.gain_matrix(params.pathloss_exp)
    return float(_sinr_row(g, p, 0, params.noise_w))


def sinr_d2d(k: int, real: NetworkRealization, profile, params: SystemParams) -> float:
    p = _as_power(profile)
    if p.size != real.k + 1:
        raise ValueError("profile length must be K+1")
    if not 1 <= k <= real.k:
        raise IndexError("D2D index out of range")
    g = real.gain_matrix(params.pathloss_exp)
    return float(_sinr_row(g, p, k, params.noise_w))


def _sinr_row(g: np.ndarray, p: np.ndarray, k: int, noise: float) -> float:
    sig = g[k, k] * p[k]
    interf = sum(g[k, l] * p[l] for l in range(p.size) if l != k)
    den = interf + noise
    if den == 0:
        return math.inf if sig > 0 else 0.0
    return sig / den


def dist_cdf_cellular(r, radius: float):
    """CDF of the distance of a point uniform in a disk of radius ``radius``."""
    r = np.asarray(r, dtype=float)
    out = np.clip(r / radius, 0.0, 1.0) ** 2
    return out if out.ndim else float(out)


def dist_pdf_crosslink(r, radius: float):
    """Density of the distance between two independent uniform points of a
    disk of radius ``radius``; supported on ``[0, 2 radius]``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be nonnegative")
    x = np.clip(r / (2 * radius), 0.0, 1.0)
    val = 2 * r / radius ** 2 * (
        2 / np.pi * np.arccos(x) - r / (np.pi * radius) * np.sqrt(1 - x * x))
    out = np.where(r <= 2 * radius, np.maximum(val, 0.0), 0.0)
    return out if out.ndim else float(out)


def mean_crosslink_distance(radius: float) -> float:
    return 128 * radius / (45 * math.pi)


# -- plain-text record format -------------------------------------------------

_HEADER = "# d2d-realization v1"


def dump_realization(real: NetworkRealization) -> str:
    """Serialize to text: one node per line (``role x y``) then the fading
    matrix as ``fading N`` followed by N rows."""
    f = repr
    lines = [_HEADER,
             f"bs {f(float(real.bs_pos[0]))} {f(float(real.bs_pos[1]))}",
             f"cell_user {f(float(real.cell_user_pos[0]))} {f(float(real.cell_user_pos[1]))}"]
    for k in range(real.k):
        tx, rx = real.d2d_tx_pos[k], real.d2d_rx_pos[k]
        lines.append(f"tx {f(float(tx[0]))} {f(float(tx[1]))}")
        lines.append(f"rx {f(float(rx[0]))} {f(float(rx[1]))}")
    n = real.k + 1
    lines.append(f"fading {n}")
    for row in real.fading:
        lines.append(" ".join(f(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def load_realization(text: str) -> NetworkRealization:
    bs = cu = None
    tx, rx = [], []
    fading = None
    it = iter(io.StringIO(text))
    for raw in it:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        role, *rest = line.split()
        if role == "fading":
            n = int(rest[0])
            rows = []
            while len(rows) < n:
                row = next(it).split("#", 1)[0].split()
                if row:
                    rows.append([float(v) for v in row])
            fading = np.array(rows, dtype=float)
            continue
        x, y = (float(v) for v in rest)
        if role == "bs":
            bs = (x, y)
        elif role == "cell_user":
            cu = (x, y)
        elif role == "tx":
            tx.append((x, y))
        elif role == "rx":
            rx.append((x, y))
        else:
            raise ValueError(f"unknown node role {role!r}")
    if cu is None or fading is None:
        raise ValueError("incomplete realization record")
    return NetworkRealization(
        cell_user_pos=cu,
        d2d_tx_pos=np.array(tx, dtype=float).reshape(-1, 2),
        d2d_rx_pos=np.array(rx, dtype=float).reshape(-1, 2),
        fading=fading,
        bs_pos=bs if bs is not None else (0.0, 0.0),
    )


def save_realization(real: NetworkRealization, path) -> None:
    Path(path).write_text(dump_realization(real), encoding="utf-8")


def read_realization(path) -> NetworkRealization:
    return load_realization(Path(path).read_text(encoding="utf-8"))
