"""YAML run configuration with schema validation.

Example (all keys optional; these are the defaults)::

    geometry:
      n: 32
      inclusion: [[0.25, 0.75], [0.25, 0.75]]   # null for the classical case
    coefficients:
      a1: 1.0          # scalar, 2x2 list, or {laminate: {a_minus, a_plus, fraction, axis}}
      a0: 1.0
      nu: 1.0
    sweep:
      eps: [0.5, 0.25, 0.125, 0.0625]
      radii: 40
      directions: [axis1, axis2, diagonal]
      alpha: [0.5]
      method: auto
    correctors:
      theta_radii: [0.0, 0.25, 0.5, 1.0]
      draws: 20
      eps: [0.5, 0.25, 0.125, 0.0625]
    spectra:
      J: null          # null keeps every Dirichlet eigenpair
      lam_max: 300.0
      bands: 4
      eps: [0.25, 0.125, 0.0625]
      theta_points: 24
    output:
      dir: run
      formats: [json, csv]
      fields: false
    seed: 0
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .cell_model import CellGeometry, CellModel, build_cell, sample_coefficients
from .errors import ConfigError

DEFAULTS: dict[str, Any] = {
    "geometry": {"n": 32, "inclusion": [[0.25, 0.75], [0.25, 0.75]]},
    "coefficients": {"a1": 1.0, "a0": 1.0, "nu": 1.0},
    "sweep": {
        "eps": [0.5, 0.25, 0.125, 0.0625],
        "radii": 40,
        "directions": ["axis1", "axis2", "diagonal"],
        "alpha": [0.5],
        "method": "auto",
    },
    "correctors": {
        "theta_radii": [0.0, 0.25, 0.5, 1.0],
        "draws": 20,
        "eps": [0.5, 0.25, 0.125, 0.0625],
    },
    "spectra": {
        "J": None,
        "lam_max": 300.0,
        "bands": 4,
        "eps": [0.25, 0.125, 0.0625],
        "theta_points": 24,
    },
    "output": {"dir": "run", "formats": ["json", "csv"], "fields": False},
    "seed": 0,
}

_DIRECTIONS = {"axis1", "axis2", "diagonal"}
_METHODS = {"auto", "lanczos", "dense"}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _positive_list(values, name: str, upper: Optional[float] = None) -> list[float]:
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigError(f"'{name}' must be a nonempty list")
    try:
        out = [float(v) for v in values]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{name}' must hold numbers") from exc
    for v in out:
        if not v > 0 or (upper is not None and v > upper):
            raise ConfigError(f"'{name}' entries must lie in (0, {upper if upper else 'inf'}]")
    return out


@dataclass(frozen=True)
class RunConfig:
    data: dict

    # canonical form ---------------------------------------------------------
    @property
    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical.encode()).hexdigest()[:16]

    def section(self, name: str) -> dict:
        return self.data[name]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def with_overrides(self, **top) -> "RunConfig":
        data = copy.deepcopy(self.data)
        for k, v in top.items():
            if v is not None:
                data[k] = v
        return validate_config(data)

    # model ------------------------------------------------------------------
    def build_model(self) -> CellModel:
        g = self.data["geometry"]
        c = self.data["coefficients"]
        box = g["inclusion"]
        geom = CellGeometry(
            resolution=int(g["n"]),
            inclusion_box=None if box is None else tuple(tuple(float(x) for x in ab) for ab in box),
        )
        a1 = c["a1"]
        if isinstance(a1, dict):
            lam = a1["laminate"]
            axis = int(lam.get("axis", 0))
            frac = float(lam.get("fraction", 0.5))
            lo, hi = float(lam["a_minus"]), float(lam["a_plus"])

            def a1(y1, y2, axis=axis, frac=frac, lo=lo, hi=hi):
                return lo if (y1, y2)[axis] < frac else hi

        return build_cell(geom, sample_coefficients(geom, a1=_tensor(a1), a0=_tensor(c["a0"]), nu=float(c["nu"])))


def _tensor(v):
    if callable(v):
        return v
    return np.asarray(v, dtype=float)


def validate_config(raw: Any) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    data = _merge(DEFAULTS, raw)

    g = data["geometry"]
    if not isinstance(g["n"], int) or g["n"] < 4:
        raise ConfigError("'geometry.n' must be an integer >= 4")
    box = g["inclusion"]
    if box is not None:
        if not (isinstance(box, list) and len(box) == 2 and all(isinstance(ab, list) and len(ab) == 2 for ab in box)):
            raise ConfigError("'geometry.inclusion' must be [[a1, b1], [a2, b2]] or null")

    c = data["coefficients"]
    for key in ("a1", "a0"):
        v = c[key]
        if isinstance(v, dict):
            if key != "a1" or set(v) != {"laminate"}:
                raise ConfigError(f"'coefficients.{key}' mapping form is only {{laminate: ...}} for a1")
            lam = v["laminate"]
            if not isinstance(lam, dict) or not {"a_minus", "a_plus"} <= set(lam):
                raise ConfigError("laminate needs a_minus and a_plus")
        else:
            arr = np.asarray(v, dtype=float) if not isinstance(v, str) else None
            if arr is None or arr.shape not in ((), (2, 2)):
                raise ConfigError(f"'coefficients.{key}' must be a scalar or a 2x2 list")
    if not float(c["nu"]) > 0:
        raise ConfigError("'coefficients.nu' must be positive")

    s = data["sweep"]
    s["eps"] = _positive_list(s["eps"], "sweep.eps", 1.0)
    if not isinstance(s["radii"], int) or s["radii"] < 2:
        raise ConfigError("'sweep.radii' must be an integer >= 2")
    if not s["directions"] or not set(s["directions"]) <= _DIRECTIONS:
        raise ConfigError(f"'sweep.directions' must be a nonempty subset of {sorted(_DIRECTIONS)}")
    s["alpha"] = [float(a) for a in (s["alpha"] or [])]
    if any(not 0 < a < 1 for a in s["alpha"]):
        raise ConfigError("'sweep.alpha' entries must lie in (0, 1)")
    if s["method"] not in _METHODS:
        raise ConfigError(f"'sweep.method' must be one of {sorted(_METHODS)}")

    co = data["correctors"]
    co["eps"] = _positive_list(co["eps"], "correctors.eps", 1.0)
    co["theta_radii"] = [float(r) for r in co["theta_radii"]]
    if any(not 0 <= r <= 1 for r in co["theta_radii"]):
        raise ConfigError("'correctors.theta_radii' must lie in [0, 1]")
    if not isinstance(co["draws"], int) or co["draws"] < 1:
        raise ConfigError("'correctors.draws' must be a positive integer")

    sp_ = data["spectra"]
    sp_["eps"] = _positive_list(sp_["eps"], "spectra.eps", 1.0)
    if sp_["J"] is not None and (not isinstance(sp_["J"], int) or sp_["J"] < 1):
        raise ConfigError("'spectra.J' must be a positive integer or null")
    if not float(sp_["lam_max"]) > 0:
        raise ConfigError("'spectra.lam_max' must be positive")
    sp_["lam_max"] = float(sp_["lam_max"])
    for key in ("bands", "theta_points"):
        if not isinstance(sp_[key], int) or sp_[key] < 1:
            raise ConfigError(f"'spectra.{key}' must be a positive integer")

    o = data["output"]
    if not set(o["formats"]) <= {"json", "csv"}:
        raise ConfigError("'output.formats' must be drawn from [json, csv]")
    if not isinstance(data["seed"], int):
        raise ConfigError("'seed' must be an integer")
    return RunConfig(data=data)


def load_config(path: Optional[Path]) -> RunConfig:
    if path is None:
        return validate_config({})
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return validate_config(raw)
