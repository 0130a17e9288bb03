"""Run configuration: flat ``key = value`` text with ``#`` comments.

Powers carry a unit suffix (``W``, ``mW`` or ``dBm``) and are stored in
watts; target SINRs are given in dB.  Unknown keys are rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields, replace

from .montecarlo import SCHEMES, ExperimentSpec
from .netmodel import DEFAULT_NOISE_W, SystemParams, db_to_linear, dbm_to_watt


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


DEFAULT_GRID = tuple(float(b) for b in range(-6, 22, 3))


@dataclass(frozen=True)
class RunConfig:
    cell_radius_m: float = 500.0
    d2d_density: float = 2e-5
    pathloss_exp: float = 4.0
    d2d_link_dist_m: float = 50.0
    p_max_cell: float = 0.1
    p_max_d2d: float = 1e-4
    p_avg_cell: float = 0.1
    noise: float = DEFAULT_NOISE_W
    drop_margin_m: float = 250.0
    beta_cell_db: float = 0.0
    beta_d2d_db: float = 0.0
    scheme: str = "no_control"
    beta_grid_db: tuple = DEFAULT_GRID
    n_drops: int = 1000
    seed: int = 0
    workers: int = 1
    out: str | None = None
    gmin: float | None = None
    ps: float | None = None
    auto_optimal_ps: bool = False
    cell_onoff: bool = False
    quad_rtol: float = 1e-8
    rate_rtol: float = 1e-7

    def system_params(self) -> SystemParams:
        return SystemParams(
            cell_radius_m=self.cell_radius_m,
            d2d_density=self.d2d_density,
            pathloss_exp=self.pathloss_exp,
            d2d_link_dist_m=self.d2d_link_dist_m,
            p_max_cell_w=self.p_max_cell,
            p_max_d2d_w=self.p_max_d2d,
            p_avg_cell_w=self.p_avg_cell,
            noise_w=self.noise,
            drop_margin_m=self.drop_margin_m,
            beta_cell=float(db_to_linear(self.beta_cell_db)),
            beta_d2d=float(db_to_linear(self.beta_d2d_db)),
        )

    def experiment(self) -> ExperimentSpec:
        return ExperimentSpec(
            params=self.system_params(),
            scheme=self.scheme,
            beta_grid_db=self.beta_grid_db,
            n_drops=self.n_drops,
            seed=self.seed,
            gmin=self.gmin,
            ps=self.ps,
            cell_onoff=self.cell_onoff,
        )

    def validate(self) -> "RunConfig":
        """Raise :class:`ConfigError` unless every derived object can be built."""
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {', '.join(SCHEMES)}")
        if sum(x is not None for x in (self.gmin, self.ps)) + bool(self.auto_optimal_ps) > 1:
            raise ConfigError("set at most one of gmin, ps, auto_optimal_ps")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        for name in ("quad_rtol", "rate_rtol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must lie in (0, 1)")
        try:
            self.experiment()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


_POWER_KEYS = {"p_max_cell", "p_max_d2d", "p_avg_cell", "noise"}
_FLOAT_KEYS = {"cell_radius_m", "d2d_density", "pathloss_exp", "d2d_link_dist_m", "drop_margin_m",
               "beta_cell_db", "beta_d2d_db", "quad_rtol", "rate_rtol"}
_OPT_FLOAT_KEYS = {"gmin", "ps"}
_INT_KEYS = {"n_drops", "seed", "workers"}
_BOOL_KEYS = {"auto_optimal_ps", "cell_onoff"}
KEYS = tuple(f.name for f in fields(RunConfig))

_POWER_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(W|mW|dBm)\s*$")


def parse_power(text: str) -> float:
    """``'100 mW'``, ``'0.1W'`` or ``'-143.97 dBm'`` to watts."""
    m = _POWER_RE.match(text)
    if not m:
        raise ConfigError(f"power needs a unit suffix W, mW or dBm: {text!r}")
    v, unit = float(m.group(1)), m.group(2)
    if unit == "dBm":
        return dbm_to_watt(v)
    w = v * 1e-3 if unit == "mW" else v
    if w < 0:
        raise ConfigError(f"negative power: {text!r}")
    return w


def _parse_float(text: str, key: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {text!r}") from None
    if math.isnan(v):
        raise ConfigError(f"{key}: NaN not allowed")
    return v


def _parse_int(text: str, key: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {text!r}") from None


def _parse_bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key}: not a boolean: {text!r}")


def parse_value(key: str, text: str):
    """Convert the text of one entry to its typed value."""
    text = text.strip()
    if key not in KEYS:
        raise ConfigError(f"unknown key {key!r}")
    if key in _POWER_KEYS:
        return parse_power(text)
    if key in _FLOAT_KEYS:
        return _parse_float(text, key)
    if key in _OPT_FLOAT_KEYS:
        return None if text.lower() in ("", "none") else _parse_float(text, key)
    if key in _INT_KEYS:
        return _parse_int(text, key)
    if key in _BOOL_KEYS:
        return _parse_bool(text, key)
    if key == "beta_grid_db":
        parts = [p for p in text.replace(",", " ").split() if p]
        if not parts:
            raise ConfigError("beta_grid_db is empty")
        return tuple(_parse_float(p, key) for p in parts)
    if key == "out":
        return text or None
    return text  # scheme


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse config text on top of ``base`` (defaults if omitted) and validate."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = parse_value(key, val)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    cfg = replace(base or RunConfig(), **values)
    return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Text that :func:`parse_config` maps back to an identical ``RunConfig``."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _POWER_KEYS:
            s = f"{v!r} W"
        elif f.name == "beta_grid_db":
            s = ", ".join(repr(float(b)) for b in v)
        elif v is None:
            continue
        elif isinstance(v, bool):
            s = "true" if v else "false"
        else:
            s = repr(v) if isinstance(v, float) else str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"
