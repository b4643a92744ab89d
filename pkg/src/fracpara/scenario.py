"""Scenario configuration: presets, TOML loading and validation.

A scenario file has the sections ``[grid]``, ``[sigma]``, ``[masks]``,
``[fractional]`` and ``[checks]``.  Keys missing from the file are taken
from the preset named by ``scenario`` (top level) or by the ``--scenario``
flag, ``default1d`` otherwise.
"""

from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .conductivity import ConductivityField
from .grid import DomainMasks, Grid, GridError, GridSpec, SpaceTimeField, build_grid

DEFAULT_TOLERANCES = {
    "route_agreement": 1e-2,
    "min_order": 1.0,
    "extension_agreement": 5e-2,
    "duality_residual": 5e-2,
    "duality_roundtrip": 2e-2,
    "key_equation": 5e-2,
    "control_ratio": 10.0,
    "u_v_relation": 5e-2,
    "transfer": 5e-2,
    "causality": 1e-10,
    "dn_causal": 1e-12,
    "dn_linearity": 1e-10,
    "pushforward": 5e-2,
    "control_floor": 0.1,
    "decay_band": 0.2,
    "kernel_l1": 1e-2,
    "kernel_mass": 1e-4,
    "kernel_symmetry": 1e-6,
    "chapman_kolmogorov": 1e-3,
}

PRESETS = {
    "default1d": {
        "grid": {"n": 1, "L": 4.0, "Nx": 64, "T": 1.0, "Nt": 64, "Ny": 64, "grade": 3.0},
        "sigma": {"kind": "family", "name": "anisotropic_bump", "center": [0.0], "radius": 0.8,
                  "amplitude": 0.5},
        "masks": {
            "omega": [[-1.0, 1.0]],
            "w": [[1.75, 3.0]],
            "bumps": [
                {"center": [2.375], "radius": 0.55, "time": -0.2, "duration": 0.6},
                {"center": [2.2], "radius": 0.4, "time": 0.0, "duration": 0.6},
                {"center": [2.6], "radius": 0.35, "time": -0.4, "duration": 0.6},
            ],
        },
        "fractional": {"s": [0.25, 0.5, 0.75], "decay_s": 0.75},
        "checks": {
            "diffeo": {"name": "cubic_bump_1d", "center": 0.0, "width": 0.7, "strength": 0.3},
            "control_diffeo": {"name": "shift_bump", "center": [1.0], "width": 0.6, "strength": 0.4},
        },
    },
    "default2d": {
        "grid": {"n": 2, "L": 3.0, "Nx": 24, "T": 1.0, "Nt": 32, "Ny": 32, "grade": 3.0},
        "sigma": {"kind": "family", "name": "anisotropic_bump", "center": [0.0, 0.0], "radius": 0.8,
                  "amplitude": 0.5},
        "masks": {
            "omega": [[-1.0, 1.0], [-1.0, 1.0]],
            "w": [[1.75, 2.75], [-0.5, 0.5]],
            "bumps": [
                {"center": [2.25, 0.0], "radius": 0.45, "time": -0.2, "duration": 0.6},
                {"center": [2.25, 0.1], "radius": 0.3, "time": 0.0, "duration": 0.6},
                {"center": [2.3, -0.1], "radius": 0.3, "time": -0.4, "duration": 0.6},
            ],
        },
        "fractional": {"s": [0.5], "decay_s": 0.75},
        "checks": {
            "diffeo": {"name": "radial_bump_2d", "center": [0.0, 0.0], "radius": 0.7, "strength": 0.3},
            "control_diffeo": {"name": "shift_bump", "center": [1.0, 0.0], "width": 0.6, "strength": 0.4},
        },
    },
}

SECTIONS = ("grid", "sigma", "masks", "fractional", "checks")


class ConfigError(ValueError):
    """Invalid scenario configuration; ``str()`` names the field and line."""

    def __init__(self, message: str, field_name: str | None = None, line: int | None = None):
        where = []
        if field_name:
            where.append(field_name)
        if line:
            where.append(f"line {line}")
        prefix = f"{' / '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field_name = field_name
        self.line = line


def _locate(text: str | None, section: str, key: str | None) -> int | None:
    """Line number of ``key`` inside ``[section]`` (or of the header) in ``text``."""
    if not text:
        return None
    current = None
    header = re.compile(r"^\s*\[+\s*([^\]]+?)\s*\]+")
    for i, raw in enumerate(text.splitlines(), start=1):
        m = header.match(raw)
        if m:
            current = m.group(1).split(".")[0]
            if current == section and key is None:
                return i
            continue
        if current == section and key is not None and re.match(rf"^\s*{re.escape(key)}\s*=", raw):
            return i
    return None


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class Scenario:
    """Validated scenario with helpers to build the numerical objects."""

    name: str
    raw: dict
    spec: GridSpec
    s_values: list
    tolerances: dict
    disabled: set = field(default_factory=set)

    @property
    def grid_config(self) -> dict:
        return self.raw["grid"]

    def grid(self, level: int = 0) -> Grid:
        return build_grid(self.spec.refined(2 ** level) if level else self.spec)

    def sigma(self, grid: Grid) -> ConductivityField:
        return build_sigma(grid, self.raw["sigma"])

    def masks(self, grid: Grid) -> DomainMasks:
        m = self.raw["masks"]
        return DomainMasks.from_boxes(grid, m["omega"], m["w"])

    def bumps(self, grid: Grid) -> list[SpaceTimeField]:
        return [exterior_bump(grid, b) for b in self.raw["masks"]["bumps"]]

    def enabled(self, check: str) -> bool:
        return check not in self.disabled

    def as_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def build_sigma(grid: Grid, cfg: dict) -> ConductivityField:
    kind = cfg.get("kind", "identity")
    if kind == "identity":
        return ConductivityField.identity(grid)
    if kind == "constant":
        return ConductivityField.constant(grid, cfg["matrix"])
    if kind == "family":
        params = {k: v for k, v in cfg.items() if k not in ("kind", "name")}
        return ConductivityField.family(grid, cfg["name"], **params)
    raise GridError(f"unknown conductivity kind '{kind}'")


def exterior_bump(grid: Grid, cfg: dict) -> SpaceTimeField:
    """Smooth space-time bump ``exp(1 - 1/(1 - r^2))`` in the ellipsoidal radius."""
    center = np.asarray(cfg["center"], float)
    radius = float(cfg["radius"])
    t0 = float(cfg["time"])
    width = float(cfg["duration"])

    def func(t, x):
        r2 = np.sum(((x - center) / radius) ** 2, axis=-1) + ((t - t0) / width) ** 2
        inside = r2 < 1
        return np.where(inside, np.exp(1.0 - 1.0 / np.where(inside, 1.0 - r2, 1.0)), 0.0)

    return SpaceTimeField.from_function(grid, func)


def operator_datum(grid: Grid) -> SpaceTimeField:
    """Smooth Gaussian space-time datum used by the operator and extension checks."""
    def func(t, x):
        return np.exp(-(t / 0.25) ** 2 - np.sum((x / 0.5) ** 2, axis=-1))

    return SpaceTimeField.from_function(grid, func)


def _require(cond: bool, msg: str, section: str, key: str | None, text: str | None):
    if not cond:
        raise ConfigError(msg, f"[{section}].{key}" if key else f"[{section}]", _locate(text, section, key))


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_boxes(value, n: int, key: str, text: str | None):
    ok = (isinstance(value, list) and len(value) == n
          and all(isinstance(b, list) and len(b) == 2 and all(_is_number(c) for c in b) and b[0] < b[1]
                  for b in value))
    _require(ok, f"expected {n} intervals [lo, hi] with lo < hi", "masks", key, text)


def validate(raw: dict, name: str, text: str | None = None) -> Scenario:
    """Check field types and ranges; raise :class:`ConfigError` with the offending field."""
    for sec in raw:
        if sec in ("scenario", "seed"):
            continue
        _require(sec in SECTIONS, f"unknown section (expected one of {', '.join(SECTIONS)})", sec, None, text)
    g = raw["grid"]
    for key in ("n", "Nx", "Nt", "Ny"):
        _require(isinstance(g.get(key), int) and not isinstance(g.get(key), bool), "expected an integer",
                 "grid", key, text)
    for key in ("L", "T", "grade"):
        _require(_is_number(g.get(key)), "expected a number", "grid", key, text)
    if "Ymax" in g:
        _require(_is_number(g["Ymax"]) and g["Ymax"] > 0, "expected a positive number", "grid", "Ymax", text)
    try:
        spec = GridSpec(**{k: g[k] for k in ("n", "L", "Nx", "T", "Nt", "Ny", "grade")}, Ymax=g.get("Ymax"))
    except GridError as exc:
        raise ConfigError(str(exc), "[grid]", _locate(text, "grid", None)) from None
    sig = raw["sigma"]
    kind = sig.get("kind")
    _require(kind in ("identity", "constant", "family"), "expected identity, constant or family",
             "sigma", "kind", text)
    if kind == "constant":
        m = sig.get("matrix")
        ok = isinstance(m, list) and np.asarray(m, dtype=object).shape == (spec.n, spec.n)
        _require(ok, f"expected a {spec.n}x{spec.n} matrix", "sigma", "matrix", text)
        arr = np.asarray(m, float)
        _require(np.allclose(arr, arr.T) and np.all(np.linalg.eigvalsh(arr) > 0),
                 "matrix must be symmetric positive definite", "sigma", "matrix", text)
    if kind == "family":
        _require(sig.get("name") in ("anisotropic_bump", "isotropic_bump"), "unknown family", "sigma", "name", text)
        if "center" in sig:
            c = sig["center"]
            _require(isinstance(c, list) and len(c) == spec.n and all(_is_number(v) for v in c),
                     f"expected {spec.n} coordinates", "sigma", "center", text)
    masks = raw["masks"]
    _check_boxes(masks.get("omega"), spec.n, "omega", text)
    _check_boxes(masks.get("w"), spec.n, "w", text)
    bumps = masks.get("bumps", [])
    _require(isinstance(bumps, list) and len(bumps) > 0, "expected a non-empty list of bumps", "masks", "bumps", text)
    for b in bumps:
        ok = (isinstance(b, dict) and isinstance(b.get("center"), list) and len(b["center"]) == spec.n
              and all(_is_number(b.get(k)) for k in ("radius", "time", "duration")))
        _require(ok, "each bump needs center (n numbers), radius, time and duration", "masks", "bumps", text)
    frac = raw["fractional"]
    s_vals = frac.get("s")
    if _is_number(s_vals):
        s_vals = [s_vals]
    _require(isinstance(s_vals, list) and len(s_vals) > 0 and all(_is_number(v) and 0 < v < 1 for v in s_vals),
             "expected order(s) in (0, 1)", "fractional", "s", text)
    if "decay_s" in frac:
        _require(_is_number(frac["decay_s"]) and 0 < frac["decay_s"] < 1, "expected an order in (0, 1)",
                 "fractional", "decay_s", text)
    checks = raw["checks"]
    tol = dict(DEFAULT_TOLERANCES)
    for key, val in checks.items():
        if key in ("diffeo", "control_diffeo", "disable"):
            continue
        _require(key in DEFAULT_TOLERANCES, "unknown tolerance name", "checks", key, text)
        _require(_is_number(val) and val > 0, "expected a positive number", "checks", key, text)
        tol[key] = float(val)
    disabled = checks.get("disable", [])
    _require(isinstance(disabled, list) and all(isinstance(d, str) for d in disabled),
             "expected a list of check names", "checks", "disable", text)
    try:
        grid = build_grid(spec)
        dm = DomainMasks.from_boxes(grid, masks["omega"], masks["w"])
    except GridError as exc:
        raise ConfigError(str(exc), "[masks]", _locate(text, "masks", None)) from None
    for i, b in enumerate(bumps):
        vals = exterior_bump(grid, b).values
        _require(not np.any(vals[:, ~dm.w_set]), f"bump {i} reaches lattice nodes outside w",
                 "masks", "bumps", text)
        _require(np.any(vals), f"bump {i} covers no lattice node", "masks", "bumps", text)
    return Scenario(name, raw, spec, [float(v) for v in s_vals], tol, set(disabled))


def load_scenario(path: str | Path | None = None, preset: str | None = None,
                  s_override: float | None = None) -> Scenario:
    """Read a TOML scenario (optional) on top of a preset and validate it."""
    text = None
    user: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
        try:
            user = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"malformed TOML ({exc})", str(path), int(m.group(1)) if m else None) from None
    name = preset or user.get("scenario") or "default1d"
    if name not in PRESETS:
        raise ConfigError(f"unknown scenario '{name}' (available: {', '.join(sorted(PRESETS))})", "scenario",
                          _locate(text, "scenario", None))
    raw = _merge(PRESETS[name], {k: v for k, v in user.items() if k != "scenario"})
    if s_override is not None:
        if not 0 < s_override < 1:
            raise ConfigError("order must lie in (0, 1)", "--s")
        raw["fractional"]["s"] = [float(s_override)]
    return validate(raw, name, text)
