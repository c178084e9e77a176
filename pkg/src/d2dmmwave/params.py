"""Scenario parameters for the D2D-enabled mmWave uplink model.

Everything is stored in linear units (mW, metres, linear gains, radians).
Decibel values only appear in the config file and on the command line.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Any, Mapping, NamedTuple

import tomli

LOS = "L"
NLOS = "N"
CELLULAR = "cellular"
D2D = "d2d"


class ParameterError(ValueError):
    """Raised for malformed config documents or invariant violations."""


class RegimeWarning(UserWarning):
    """Parameters are valid but outside the regime the closed forms assume."""


def db_to_linear(x):
    return 10.0 ** (x / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


class LosBall(NamedTuple):
    p_los: float
    radius: float


class Exponents(NamedTuple):
    los_c: float
    nlos_c: float
    los_d: float
    nlos_d: float


@dataclass(frozen=True)
class AntennaPattern:
    """Two-level sectored pattern: main_gain over `beamwidth` rad, side_gain elsewhere."""

    main_gain: float
    side_gain: float
    beamwidth: float


@dataclass(frozen=True)
class NetworkParams:
    lambda_b: float = 1e-5
    lambda_c: float = 1e-4
    lambda_cu: float = 1e-4
    sigma_d_sq: float = 25.0
    n_total: int = 40
    n_bar: float = 3.0
    p_c: float = 200.0
    p_d: float = 200.0
    alpha: Exponents = Exponents(2.0, 4.0, 2.0, 4.0)
    los_ball_c: LosBall = LosBall(1.0, 100.0)
    los_ball_d: LosBall = LosBall(1.0, 50.0)
    antenna_bs: AntennaPattern = AntennaPattern(100.0, 0.1, math.radians(30.0))
    antenna_ue: AntennaPattern = AntennaPattern(100.0, 0.1, math.radians(30.0))
    t_d: float = 1.0
    beta: int = 1
    delta: float = 0.2
    gamma: float = 1.0
    noise: float = 10.0 ** (-7.4)
    sigma_be: float = 0.0
    w_c: float = 0.6
    w_d: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "alpha", Exponents(*self.alpha))
        object.__setattr__(self, "los_ball_c", LosBall(*self.los_ball_c))
        object.__setattr__(self, "los_ball_d", LosBall(*self.los_ball_d))
        problems = validate(self)
        if problems:
            raise ParameterError("invalid parameters: " + "; ".join(problems))
        if self.n_bar > self.n_total / 4:
            warnings.warn(
                f"n_bar={self.n_bar} exceeds n_total/4={self.n_total / 4}; "
                "the Poisson-limit approximations of the Laplace transforms degrade",
                RegimeWarning,
                stacklevel=3,
            )
        if self.lambda_cu <= self.lambda_b:
            warnings.warn(
                "lambda_cu <= lambda_b: the saturated-uplink assumption "
                "(every BS has a UE to serve) is doubtful",
                RegimeWarning,
                stacklevel=3,
            )

    @property
    def sigma_d(self) -> float:
        return math.sqrt(self.sigma_d_sq)

    def los_ball(self, link_kind: str) -> LosBall:
        return self.los_ball_c if link_kind == CELLULAR else self.los_ball_d

    def exponent(self, state: str, link_kind: str) -> float:
        a = self.alpha
        if link_kind == CELLULAR:
            return a.los_c if state == LOS else a.nlos_c
        return a.los_d if state == LOS else a.nlos_d

    def power(self, link_kind: str) -> float:
        return self.p_c if link_kind == CELLULAR else self.p_d

    def replace(self, **changes) -> "NetworkParams":
        return dataclasses.replace(self, **changes)

    def isclose(self, other: "NetworkParams", rtol: float = 1e-12) -> bool:
        """Field-wise comparison tolerant to dB round-off."""
        return _flatten(self).keys() == _flatten(other).keys() and all(
            math.isclose(a, b, rel_tol=rtol, abs_tol=1e-300)
            for a, b in zip(_flatten(self).values(), _flatten(other).values())
        )


def _flatten(p: NetworkParams) -> dict:
    out = {}
    for f in dataclasses.fields(p):
        val = getattr(p, f.name)
        if isinstance(val, tuple):
            for i, x in enumerate(val):
                out[f"{f.name}.{i}"] = float(x)
        elif isinstance(val, AntennaPattern):
            for g in dataclasses.fields(val):
                out[f"{f.name}.{g.name}"] = float(getattr(val, g.name))
        else:
            out[f.name] = float(val)
    return out


def validate(p: NetworkParams) -> list[str]:
    """Return every violated invariant as a message naming the offending field."""
    problems = []

    def positive(name, value):
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            problems.append(f"{name} must be a finite positive number (got {value!r})")

    for name in ("lambda_b", "lambda_c", "lambda_cu", "sigma_d_sq", "p_c", "p_d", "noise"):
        positive(name, getattr(p, name))
    if not (isinstance(p.n_total, int) and p.n_total >= 2):
        problems.append(f"n_total must be an integer >= 2 (got {p.n_total!r})")
    if not (math.isfinite(p.n_bar) and p.n_bar >= 0):
        problems.append(f"n_bar must be >= 0 (got {p.n_bar!r})")
    elif isinstance(p.n_total, int) and p.n_bar > p.n_total / 2:
        problems.append(f"n_bar must not exceed n_total/2 = {p.n_total / 2} (got {p.n_bar})")
    for name, value in zip(("alpha_lc", "alpha_nc", "alpha_ld", "alpha_nd"), p.alpha):
        if not (math.isfinite(value) and value >= 2):
            problems.append(f"{name} must be >= 2 (got {value})")
    # NLOS tails extend to infinity; exponent 2 makes the mean interference diverge
    for name, value in (("alpha_nc", p.alpha.nlos_c), ("alpha_nd", p.alpha.nlos_d)):
        if value == 2:
            problems.append(f"{name} must be > 2 for a finite NLOS interference tail")
    for name in ("los_ball_c", "los_ball_d"):
        ball = getattr(p, name)
        if not 0.0 <= ball.p_los <= 1.0:
            problems.append(f"{name}.p_los must lie in [0, 1] (got {ball.p_los})")
        positive(f"{name}.radius", ball.radius)
    for name in ("antenna_bs", "antenna_ue"):
        ant = getattr(p, name)
        if not (ant.side_gain > 0 and ant.main_gain >= ant.side_gain):
            problems.append(f"{name}: need main_gain >= side_gain > 0")
        if not 0 < ant.beamwidth <= 2 * math.pi:
            problems.append(f"{name}.beamwidth must lie in (0, 2*pi]")
    if not (math.isfinite(p.t_d) and p.t_d >= 0):
        problems.append(f"t_d must be >= 0 (got {p.t_d})")
    if p.beta not in (0, 1):
        problems.append(f"beta must be 0 or 1 (got {p.beta!r})")
    if not 0.0 <= p.delta <= 1.0:
        problems.append(f"delta must lie in [0, 1] (got {p.delta})")
    positive("gamma", p.gamma)
    if not (math.isfinite(p.sigma_be) and p.sigma_be >= 0):
        problems.append(f"sigma_be must be >= 0 (got {p.sigma_be})")
    if not (0.0 <= p.w_d <= 1.0 and 0.0 <= p.w_c <= 1.0 and abs(p.w_c + p.w_d - 1.0) <= 1e-12):
        problems.append(f"w_c + w_d must equal 1 with both in [0, 1] (got {p.w_c}, {p.w_d})")
    return problems


def default_params() -> NetworkParams:
    return NetworkParams()


# --- config file ---------------------------------------------------------------

CONFIG_KEYS = (
    "lambda_b", "lambda_c", "lambda_cu", "sigma_d_sq", "n_total", "n_bar",
    "p_c_mw", "p_d_mw", "alpha_lc", "alpha_nc", "alpha_ld", "alpha_nd",
    "p_l_c", "r_b_c", "p_l_d", "r_b_d", "m_bs_db", "s_bs_db", "theta_bs_deg",
    "m_ue_db", "s_ue_db", "theta_ue_deg", "t_d", "beta", "delta", "gamma_db",
    "noise_dbm", "sigma_be_deg", "w_d",
)

_INT_KEYS = {"n_total", "beta"}


def to_config(p: NetworkParams) -> dict[str, float]:
    """Express `p` in config-file units (dB, dBm, degrees)."""
    return {
        "lambda_b": p.lambda_b,
        "lambda_c": p.lambda_c,
        "lambda_cu": p.lambda_cu,
        "sigma_d_sq": p.sigma_d_sq,
        "n_total": p.n_total,
        "n_bar": p.n_bar,
        "p_c_mw": p.p_c,
        "p_d_mw": p.p_d,
        "alpha_lc": p.alpha.los_c,
        "alpha_nc": p.alpha.nlos_c,
        "alpha_ld": p.alpha.los_d,
        "alpha_nd": p.alpha.nlos_d,
        "p_l_c": p.los_ball_c.p_los,
        "r_b_c": p.los_ball_c.radius,
        "p_l_d": p.los_ball_d.p_los,
        "r_b_d": p.los_ball_d.radius,
        "m_bs_db": linear_to_db(p.antenna_bs.main_gain),
        "s_bs_db": linear_to_db(p.antenna_bs.side_gain),
        "theta_bs_deg": math.degrees(p.antenna_bs.beamwidth),
        "m_ue_db": linear_to_db(p.antenna_ue.main_gain),
        "s_ue_db": linear_to_db(p.antenna_ue.side_gain),
        "theta_ue_deg": math.degrees(p.antenna_ue.beamwidth),
        "t_d": p.t_d,
        "beta": p.beta,
        "delta": p.delta,
        "gamma_db": linear_to_db(p.gamma),
        "noise_dbm": linear_to_db(p.noise),
        "sigma_be_deg": math.degrees(p.sigma_be),
        "w_d": p.w_d,
    }


def from_config(values: Mapping[str, Any]) -> NetworkParams:
    """Build parameters from config-unit values; missing keys take the defaults."""
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    problems = [f"unknown key {k!r}" + (" (the config stores the variance: use sigma_d_sq)"
                                          if k == "sigma_d" else "")
                for k in unknown]
    cfg = to_config(default_params())
    for key, val in values.items():
        if key in unknown:
            continue
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            problems.append(f"{key} must be a number (got {val!r})")
            continue
        if key in _INT_KEYS:
            if float(val) != int(val):
                problems.append(f"{key} must be an integer (got {val!r})")
                continue
            val = int(val)
        cfg[key] = val
    if problems:
        raise ParameterError("; ".join(problems))

    w_d = float(cfg["w_d"])
    return NetworkParams(
        lambda_b=float(cfg["lambda_b"]),
        lambda_c=float(cfg["lambda_c"]),
        lambda_cu=float(cfg["lambda_cu"]),
        sigma_d_sq=float(cfg["sigma_d_sq"]),
        n_total=int(cfg["n_total"]),
        n_bar=float(cfg["n_bar"]),
        p_c=float(cfg["p_c_mw"]),
        p_d=float(cfg["p_d_mw"]),
        alpha=Exponents(float(cfg["alpha_lc"]), float(cfg["alpha_nc"]),
                        float(cfg["alpha_ld"]), float(cfg["alpha_nd"])),
        los_ball_c=LosBall(float(cfg["p_l_c"]), float(cfg["r_b_c"])),
        los_ball_d=LosBall(float(cfg["p_l_d"]), float(cfg["r_b_d"])),
        antenna_bs=AntennaPattern(db_to_linear(cfg["m_bs_db"]), db_to_linear(cfg["s_bs_db"]),
                                  math.radians(cfg["theta_bs_deg"])),
        antenna_ue=AntennaPattern(db_to_linear(cfg["m_ue_db"]), db_to_linear(cfg["s_ue_db"]),
                                  math.radians(cfg["theta_ue_deg"])),
        t_d=float(cfg["t_d"]),
        beta=int(cfg["beta"]),
        delta=float(cfg["delta"]),
        gamma=db_to_linear(cfg["gamma_db"]),
        noise=db_to_linear(cfg["noise_dbm"]),
        sigma_be=math.radians(cfg["sigma_be_deg"]),
        w_c=1.0 - w_d,
        w_d=w_d,
    )


def load_params(source: str) -> NetworkParams:
    """Parse a flat TOML document of config keys into validated parameters."""
    try:
        doc = tomli.loads(source)
    except tomli.TOMLDecodeError as exc:
        raise ParameterError(f"malformed config: {exc}") from exc
    nested = [k for k, v in doc.items() if isinstance(v, dict)]
    if nested:
        raise ParameterError(f"config must be flat; found tables {nested}")
    return from_config(doc)


def render(p: NetworkParams) -> str:
    lines = []
    for key, val in to_config(p).items():
        lines.append(f"{key} = {val!r}" if isinstance(val, float) else f"{key} = {val}")
    return "\n".join(lines) + "\n"


def with_overrides(p: NetworkParams, overrides: Mapping[str, Any]) -> NetworkParams:
    """Apply config-unit overrides (e.g. ``{"gamma_db": 40}``) on top of `p`."""
    cfg = to_config(p)
    cfg.update(overrides)
    return from_config(cfg)
