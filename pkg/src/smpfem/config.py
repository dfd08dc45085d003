"""INI scenario configuration: typed schema, scenario defaults, parsing and echo."""

from __future__ import annotations

import configparser
import copy
import re
from pathlib import Path

from .coil import Program


class ConfigError(ValueError):
    pass


# key -> type code: f float, i int, b bool, s str, p program, l list of str, fl list of float
SCHEMA: dict[str, dict[str, str]] = {
    "scenario": {"name": "s", "mode": "s", "em_body_force": "b", "period_averaged_source": "b"},
    "mesh": {
        "generator": "s", "file": "s", "size": "f",
        "outer_radius": "f", "thickness": "f", "length": "f", "n_circ": "i", "n_axial": "i", "n_thick": "i",
    },
    "mechanics": {
        "E_r": "f", "E_g": "f", "nu_r": "f", "nu_g": "f", "R_pg": "f", "h": "f",
        "delta_theta": "f", "theta_t": "f", "w": "f", "c": "f", "c_p": "f",
    },
    "thermal": {
        "rho0": "f", "cp": "f", "kappa0": "f", "alpha_kappa": "f", "theta_ref": "f", "theta0": "f",
        "h": "p", "theta_B": "p", "eps_R": "f", "theta_R": "f", "convection_regions": "l", "radiation_regions": "l",
    },
    "em": {"sigma0": "f", "alpha": "f", "theta_ref": "f", "mu_r": "f"},
    "coil": {"N": "f", "L": "f", "mu_r": "f", "f": "f", "a": "f", "b": "f", "I0": "p", "axis": "s"},
    "solver": {
        "dt": "f", "t_end": "f", "newton_tol": "f", "newton_atol": "f", "newton_max": "i", "ls_backtrack": "f",
        "max_cuts": "i", "scale_phi": "f", "scale_theta": "f", "scale_u": "f", "staggered": "b", "fd_coupling": "b",
    },
    "schedule": {
        "top_region": "s", "bottom_region": "s", "u_top": "p", "release_time": "f", "release_duration": "f",
        "theta_imposed": "p", "theta_dirichlet": "b", "recovery_threshold": "f", "support": "s",
    },
    "output": {"dir": "s", "vtk": "b", "vtk_times": "fl"},
}

_COMMON = {
    "scenario": {"em_body_force": False, "period_averaged_source": True},
    "mechanics": {
        "E_r": 0.9e6, "E_g": 771e6, "nu_r": 0.49, "nu_g": 0.29, "R_pg": 10e6, "h": 0.0,
        "delta_theta": 30.0, "theta_t": 350.0, "w": 0.2, "c": 1.0, "c_p": 0.0,
    },
    "thermal": {
        "rho0": 270.0, "cp": 10.0, "kappa0": 237.0, "alpha_kappa": 0.0, "theta_ref": 293.15,
        "eps_R": 0.0, "theta_R": 293.15, "radiation_regions": [],
    },
    "em": {"sigma0": 1e4, "alpha": 0.0, "theta_ref": 293.15, "mu_r": 20.0},
    "coil": {"N": 1000.0, "L": 1.0, "mu_r": 20.0, "f": 1000.0, "a": 0.0, "b": 1.0},
    "solver": {
        "newton_tol": 1e-8, "newton_atol": 1e-10, "newton_max": 25, "ls_backtrack": 0.0, "max_cuts": 8,
        "scale_phi": 0.0, "scale_theta": 0.0, "scale_u": 0.0, "staggered": False, "fd_coupling": False,
    },
    "mesh": {
        "file": "", "size": 1e-3, "outer_radius": 1.5e-3, "thickness": 0.25e-3, "length": 20e-3,
        "n_circ": 16, "n_axial": 20, "n_thick": 1,
    },
    "output": {"dir": "out", "vtk": True},
}

_SEC = {
    "scenario": {"name": "sec", "mode": "imposed"},
    "mesh": {"generator": "unit_cube"},
    "thermal": {"theta0": 400.0, "h": Program.constant(0.0), "theta_B": Program.constant(400.0), "convection_regions": []},
    "coil": {"I0": Program.constant(0.0), "axis": "z"},
    "solver": {"dt": 0.02, "t_end": 4.0, "ls_backtrack": 0.5},
    "schedule": {
        "top_region": "ymax", "bottom_region": "ymin",
        "u_top": Program([[0.0, 0.0], [1.0, 1e-4]]),
        "release_time": 2.0, "release_duration": 1.0,
        "theta_imposed": Program([[0.0, 400.0], [1.0, 400.0], [2.0, 200.0], [3.0, 200.0], [4.0, 400.0]]),
        "theta_dirichlet": True, "recovery_threshold": 380.0, "support": "roller",
    },
    "output": {"vtk_times": [1.0, 2.0, 3.0, 4.0]},
}

# The reheat current program is a stored design (see scenarios.design_reheat_current):
# it makes the stent's mean temperature follow 320 -> 355 K over 3.5-5.5 ms and hold.
CVS_REHEAT_I0 = [
    [0.0, 0.0], [3.5e-3, 0.0], [3.5002e-3, 903.3], [3.75e-3, 977.7], [4.0e-3, 1046.9], [4.25e-3, 1111.8],
    [4.5e-3, 1173.1], [4.75e-3, 1231.3], [5.0e-3, 1286.9], [5.25e-3, 1340.2], [5.5e-3, 1391.5],
    [5.5002e-3, 1058.5], [6.0e-3, 1058.5],
]

_CVS = {
    "scenario": {"name": "cvs", "mode": "coupled"},
    "mesh": {"generator": "tube"},
    "mechanics": {"delta_theta": 5.0, "theta_t": 344.0, "w": 0.375},
    "thermal": {
        "theta0": 350.0,
        "h": Program([[0.0, 5000.0], [3.0e-3, 5000.0], [3.5e-3, 500.0]]),
        "theta_B": Program([[0.0, 350.0], [1.0e-3, 350.0], [2.0e-3, 320.0]]),
        "convection_regions": ["inner"],
    },
    "coil": {"I0": Program(CVS_REHEAT_I0), "axis": "y"},
    "solver": {"dt": 5e-5, "t_end": 6e-3},
    "schedule": {
        "top_region": "top", "bottom_region": "bottom",
        "u_top": Program([[0.0, 0.0], [1.0e-3, 1.0e-3]]),
        "release_time": 3.0e-3, "release_duration": 0.5e-3,
        "theta_imposed": Program([[0.0, 350.0], [1.0e-3, 350.0], [2.0e-3, 320.0], [3.5e-3, 320.0], [5.5e-3, 355.0]]),
        "theta_dirichlet": False, "recovery_threshold": 349.0, "support": "roller",
    },
    "output": {"vtk_times": [1.0e-3, 3.0e-3, 3.5e-3, 4.8e-3, 6.0e-3]},
}


def _merge(*parts) -> dict:
    out = {s: {} for s in SCHEMA}
    for p in parts:
        for sec, kv in p.items():
            out[sec].update(copy.deepcopy(kv))
    return out


def defaults(scenario: str) -> dict:
    if scenario == "sec":
        return _merge(_COMMON, _SEC)
    if scenario == "cvs":
        return _merge(_COMMON, _CVS)
    raise ConfigError(f"unknown scenario '{scenario}' (expected sec or cvs)")


# ---------------------------------------------------------------- value codecs

_NUM = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _float(text: str) -> float:
    t = text.strip()
    if not _NUM.match(t):
        raise ValueError(f"malformed number '{text}'")
    return float(t)


def parse_value(code: str, text: str):
    text = text.strip()
    if code == "f":
        return _float(text)
    if code == "i":
        if not re.match(r"^[+-]?\d+$", text):
            raise ValueError(f"malformed integer '{text}'")
        return int(text)
    if code == "b":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"malformed boolean '{text}'")
    if code == "s":
        return text
    if code == "l":
        return [s.strip() for s in text.split(",") if s.strip()]
    if code == "fl":
        return [_float(s) for s in text.split(",") if s.strip()]
    if code == "p":
        pts = []
        for item in text.split(","):
            if not item.strip():
                continue
            if ":" not in item:
                raise ValueError(f"malformed program point '{item.strip()}' (expected t:value)")
            a, b = item.split(":", 1)
            pts.append([_float(a), _float(b)])
        return Program(pts)
    raise AssertionError(code)


def format_value(code: str, value) -> str:
    if code in ("f",):
        return repr(float(value))
    if code == "i":
        return str(int(value))
    if code == "b":
        return "true" if value else "false"
    if code == "s":
        return str(value)
    if code == "l":
        return ", ".join(value)
    if code == "fl":
        return ", ".join(repr(float(x)) for x in value)
    if code == "p":
        return ", ".join(f"{t!r}:{v!r}" for t, v in value.points())
    raise AssertionError(code)


def _line_of(lines: list[str], section: str, key: str) -> int:
    """1-based line of ``key`` in ``section``, or of the section header when key is empty."""
    cur = None
    for i, raw in enumerate(lines, 1):
        s = raw.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip()
            if not key and cur == section:
                return i
        elif key and cur == section and re.match(rf"^{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return i
    return 0


def parse_config(path, scenario: str | None = None, overrides: dict | None = None) -> dict:
    """Resolve a config file on top of the scenario defaults.

    The scenario comes from ``scenario`` (CLI) or ``[scenario] name`` in the file, else sec.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    name = scenario or (cp.get("scenario", "name", fallback=None) if cp.has_section("scenario") else None) or "sec"
    cfg = defaults(name.strip())
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}:{_line_of(lines, section, '') or '?'}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}:{_line_of(lines, section, key)}: unknown key '{key}' in [{section}]")
            try:
                cfg[section][key] = parse_value(SCHEMA[section][key], raw)
            except ValueError as exc:
                raise ConfigError(f"{path}:{_line_of(lines, section, key)}: [{section}] {key}: {exc}") from exc
    cfg["scenario"]["name"] = name.strip()
    for (section, key), value in (overrides or {}).items():
        cfg[section][key] = value
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    sc = cfg["scenario"]
    if sc["mode"] not in ("imposed", "coupled"):
        raise ConfigError(f"mode must be imposed or coupled, got '{sc['mode']}'")
    mesh = cfg["mesh"]
    if mesh["generator"] not in ("unit_cube", "tube", "gmsh"):
        raise ConfigError(f"unknown mesh generator '{mesh['generator']}'")
    if mesh["generator"] == "gmsh" and not mesh["file"]:
        raise ConfigError("mesh generator gmsh needs [mesh] file")
    if mesh["generator"] == "gmsh" and not Path(mesh["file"]).is_file():
        raise ConfigError(f"mesh file not found: {mesh['file']}")
    if sc["em_body_force"] and sc["period_averaged_source"]:
        raise ConfigError("em_body_force needs instantaneous fields; set period_averaged_source = false")
    if cfg["schedule"]["support"] not in ("roller", "clamped"):
        raise ConfigError(f"support must be roller or clamped, got '{cfg['schedule']['support']}'")
    if cfg["solver"]["dt"] <= 0 or cfg["solver"]["t_end"] <= 0:
        raise ConfigError("dt and t_end must be positive")


def echo(cfg: dict) -> str:
    """Full resolved config as INI text; parsing it reproduces ``cfg``."""
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, code in keys.items():
            if key in cfg[section]:
                out.append(f"{key} = {format_value(code, cfg[section][key])}")
        out.append("")
    return "\n".join(out)


def comparable(cfg: dict) -> dict:
    """Config with programs replaced by their breakpoints, for equality tests."""
    return {s: {k: (v.points() if isinstance(v, Program) else v) for k, v in kv.items()} for s, kv in cfg.items()}
