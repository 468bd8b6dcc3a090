"""Case configuration: flat key=value files mirroring the case tables.

Keys use the table symbols (ta_c, hr_pct, pa_atm, im_b, n_steps, r_max,
dt_s, ...). Parsing is strict: unknown keys, missing keys, and out-of-range
values are hard errors, and `parse -> echo -> parse` is a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

_REQUIRED = (
    "ta_c", "hr_pct", "pa_atm", "f_s", "freqs_hz", "im_b",
    "n_b", "n_t", "n_r", "n_w", "n_tree", "dim",
    "theta_min_deg", "theta_max_deg", "phi_min_deg", "phi_max_deg",
    "n_theta", "n_phi", "n_steps", "r_max", "dt_s", "src_pos", "n_obs",
)
_OPTIONAL = (
    "phi_amp", "mode", "workers", "split_threshold", "memory_budget_bytes",
    "obs_grid_origin", "obs_grid_axis1", "obs_grid_axis2", "obs_grid_n1",
    "obs_grid_n2", "obs_point",
)
_GRID_KEYS = ("obs_grid_origin", "obs_grid_axis1", "obs_grid_axis2",
              "obs_grid_n1", "obs_grid_n2")


@dataclass(frozen=True)
class ObserverGridSpec:
    origin: tuple
    axis1: tuple
    axis2: tuple
    n1: int
    n2: int

    def points(self) -> np.ndarray:
        o = np.asarray(self.origin)
        a1 = np.asarray(self.axis1)
        a2 = np.asarray(self.axis2)
        pts = (o[None, None, :]
               + np.arange(self.n1)[None, :, None] * a1[None, None, :]
               + np.arange(self.n2)[:, None, None] * a2[None, None, :])
        return pts.reshape(-1, 3)  # row-major: axis2 rows, axis1 columns


@dataclass(frozen=True)
class CaseConfig:
    ta_c: float
    hr_pct: float
    pa_atm: float
    f_s: int
    freqs_hz: tuple
    im_b: float
    n_b: int
    n_t: int
    n_r: int
    n_w: int
    n_tree: int
    dim: int
    theta_min_deg: float
    theta_max_deg: float
    phi_min_deg: float
    phi_max_deg: float
    n_theta: int
    n_phi: int
    n_steps: int
    r_max: int
    dt_s: float
    src_pos: tuple
    n_obs: int
    phi_amp: float = 1.0
    mode: str = "sequential"
    workers: int = 1
    split_threshold: int = 4096
    memory_budget_bytes: int | None = None
    obs_grid: ObserverGridSpec | None = None
    obs_points: tuple = ()

    def observer_points(self) -> np.ndarray:
        if self.obs_grid is not None:
            return self.obs_grid.points()
        return np.asarray(self.obs_points, dtype=np.float64).reshape(-1, 3)


def _parse_float(key, val):
    try:
        return float(val)
    except ValueError:
        raise ConfigError(f"key {key}: expected a number, got {val!r}") from None


def _parse_int(key, val):
    try:
        return int(val)
    except ValueError:
        raise ConfigError(f"key {key}: expected an integer, got {val!r}") from None


def _parse_vec3(key, val):
    parts = val.split(",")
    if len(parts) != 3:
        raise ConfigError(f"key {key}: expected x,y,z")
    return tuple(_parse_float(key, p) for p in parts)


def parse_config_text(text: str, origin: str = "<config>") -> CaseConfig:
    raw: dict = {}
    obs_points = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _REQUIRED and key not in _OPTIONAL:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key == "obs_point":
            obs_points.append(_parse_vec3(key, val))
            continue
        if key in raw:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        raw[key] = val

    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"{origin}: missing keys: {', '.join(missing)}")

    dim_val = raw["dim"].upper().rstrip("D")
    if dim_val != "3":
        raise ConfigError(f"{origin}: only 3-dimensional cases are supported (dim={raw['dim']})")

    freqs = tuple(_parse_float("freqs_hz", p) for p in raw["freqs_hz"].split(","))
    f_s = _parse_int("f_s", raw["f_s"])
    if f_s != len(freqs):
        raise ConfigError(f"{origin}: f_s={f_s} but freqs_hz lists {len(freqs)} values")
    if any(f <= 0 for f in freqs):
        raise ConfigError(f"{origin}: frequencies must be positive")

    im_b = _parse_float("im_b", raw["im_b"])
    if not im_b < 0:
        raise ConfigError(f"{origin}: im_b must be negative")

    dt_s = _parse_float("dt_s", raw["dt_s"])
    if not dt_s > 0:
        raise ConfigError(f"{origin}: dt_s must be positive")
    n_steps = _parse_int("n_steps", raw["n_steps"])
    r_max = _parse_int("r_max", raw["r_max"])
    if n_steps <= 0 or r_max <= 0:
        raise ConfigError(f"{origin}: n_steps and r_max must be positive")

    ta_c = _parse_float("ta_c", raw["ta_c"])
    if ta_c <= -273.15:
        raise ConfigError(f"{origin}: temperature below absolute zero")

    n_theta = _parse_int("n_theta", raw["n_theta"])
    n_phi = _parse_int("n_phi", raw["n_phi"])
    if n_theta < 1 or n_phi < 1:
        raise ConfigError(f"{origin}: ray grid counts must be at least 1")

    theta_min = _parse_float("theta_min_deg", raw["theta_min_deg"])
    theta_max = _parse_float("theta_max_deg", raw["theta_max_deg"])
    phi_min = _parse_float("phi_min_deg", raw["phi_min_deg"])
    phi_max = _parse_float("phi_max_deg", raw["phi_max_deg"])
    if not (0 <= theta_min < theta_max <= 180):
        raise ConfigError(f"{origin}: elevation range must be non-degenerate within [0, 180]")
    if not (0 <= phi_min < phi_max <= 360):
        raise ConfigError(f"{origin}: azimuth range must be non-degenerate within [0, 360]")

    mode = raw.get("mode", "sequential")
    if mode not in ("sequential", "flat", "dynamic"):
        raise ConfigError(f"{origin}: mode must be sequential, flat, or dynamic")
    workers = _parse_int("workers", raw.get("workers", "1"))
    if workers < 1:
        raise ConfigError(f"{origin}: workers must be at least 1")
    split_threshold = _parse_int("split_threshold", raw.get("split_threshold", "4096"))
    if split_threshold < 1:
        raise ConfigError(f"{origin}: split_threshold must be at least 1")
    budget = raw.get("memory_budget_bytes")
    memory_budget = _parse_int("memory_budget_bytes", budget) if budget is not None else None
    if memory_budget is not None and memory_budget < 1:
        raise ConfigError(f"{origin}: memory budget must be positive")

    phi_amp = _parse_float("phi_amp", raw.get("phi_amp", "1.0"))
    if not phi_amp > 0:
        raise ConfigError(f"{origin}: phi_amp must be positive")

    grid_given = [k for k in _GRID_KEYS if k in raw]
    obs_grid = None
    if grid_given and obs_points:
        raise ConfigError(f"{origin}: give either an observer grid or obs_point lines, not both")
    if grid_given:
        if len(grid_given) != len(_GRID_KEYS):
            missing_g = set(_GRID_KEYS) - set(grid_given)
            raise ConfigError(f"{origin}: incomplete observer grid, missing {sorted(missing_g)}")
        obs_grid = ObserverGridSpec(
            origin=_parse_vec3("obs_grid_origin", raw["obs_grid_origin"]),
            axis1=_parse_vec3("obs_grid_axis1", raw["obs_grid_axis1"]),
            axis2=_parse_vec3("obs_grid_axis2", raw["obs_grid_axis2"]),
            n1=_parse_int("obs_grid_n1", raw["obs_grid_n1"]),
            n2=_parse_int("obs_grid_n2", raw["obs_grid_n2"]))
        if obs_grid.n1 < 1 or obs_grid.n2 < 1:
            raise ConfigError(f"{origin}: observer grid counts must be at least 1")
    elif not obs_points:
        raise ConfigError(f"{origin}: no observers given (grid keys or obs_point lines)")

    n_obs = _parse_int("n_obs", raw["n_obs"])
    actual = obs_grid.n1 * obs_grid.n2 if obs_grid is not None else len(obs_points)
    if n_obs != actual:
        raise ConfigError(f"{origin}: n_obs={n_obs} but the observer spec yields {actual}")

    return CaseConfig(
        ta_c=ta_c, hr_pct=_parse_float("hr_pct", raw["hr_pct"]),
        pa_atm=_parse_float("pa_atm", raw["pa_atm"]),
        f_s=f_s, freqs_hz=freqs, im_b=im_b,
        n_b=_parse_int("n_b", raw["n_b"]), n_t=_parse_int("n_t", raw["n_t"]),
        n_r=_parse_int("n_r", raw["n_r"]), n_w=_parse_int("n_w", raw["n_w"]),
        n_tree=_parse_int("n_tree", raw["n_tree"]), dim=3,
        theta_min_deg=theta_min, theta_max_deg=theta_max,
        phi_min_deg=phi_min, phi_max_deg=phi_max,
        n_theta=n_theta, n_phi=n_phi, n_steps=n_steps, r_max=r_max, dt_s=dt_s,
        src_pos=_parse_vec3("src_pos", raw["src_pos"]), n_obs=n_obs,
        phi_amp=phi_amp, mode=mode, workers=workers,
        split_threshold=split_threshold, memory_budget_bytes=memory_budget,
        obs_grid=obs_grid, obs_points=tuple(obs_points))


def parse_config(path) -> CaseConfig:
    """Parse a case file; see module docstring for the key schema."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, origin=str(path))


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def echo_config(cfg: CaseConfig) -> str:
    """Canonical text form; parsing it reproduces the config exactly."""
    lines = [
        f"ta_c={_fmt(cfg.ta_c)}",
        f"hr_pct={_fmt(cfg.hr_pct)}",
        f"pa_atm={_fmt(cfg.pa_atm)}",
        f"f_s={cfg.f_s}",
        "freqs_hz=" + ",".join(_fmt(f) for f in cfg.freqs_hz),
        f"im_b={_fmt(cfg.im_b)}",
        f"n_b={cfg.n_b}",
        f"n_t={cfg.n_t}",
        f"n_r={cfg.n_r}",
        f"n_w={cfg.n_w}",
        f"n_tree={cfg.n_tree}",
        f"dim={cfg.dim}",
        f"theta_min_deg={_fmt(cfg.theta_min_deg)}",
        f"theta_max_deg={_fmt(cfg.theta_max_deg)}",
        f"phi_min_deg={_fmt(cfg.phi_min_deg)}",
        f"phi_max_deg={_fmt(cfg.phi_max_deg)}",
        f"n_theta={cfg.n_theta}",
        f"n_phi={cfg.n_phi}",
        f"n_steps={cfg.n_steps}",
        f"r_max={cfg.r_max}",
        f"dt_s={_fmt(cfg.dt_s)}",
        "src_pos=" + ",".join(_fmt(v) for v in cfg.src_pos),
        f"n_obs={cfg.n_obs}",
        f"phi_amp={_fmt(cfg.phi_amp)}",
        f"mode={cfg.mode}",
        f"workers={cfg.workers}",
        f"split_threshold={cfg.split_threshold}",
    ]
    if cfg.memory_budget_bytes is not None:
        lines.append(f"memory_budget_bytes={cfg.memory_budget_bytes}")
    if cfg.obs_grid is not None:
        g = cfg.obs_grid
        lines.append("obs_grid_origin=" + ",".join(_fmt(v) for v in g.origin))
        lines.append("obs_grid_axis1=" + ",".join(_fmt(v) for v in g.axis1))
        lines.append("obs_grid_axis2=" + ",".join(_fmt(v) for v in g.axis2))
        lines.append(f"obs_grid_n1={g.n1}")
        lines.append(f"obs_grid_n2={g.n2}")
    for p in cfg.obs_points:
        lines.append("obs_point=" + ",".join(_fmt(v) for v in p))
    return "\n".join(lines) + "\n"
