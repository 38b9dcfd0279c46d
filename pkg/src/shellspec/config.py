"""Run configuration read from a TOML file, with dotted-key overrides."""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .gamma import Coupling
from .geometry import GeometrySpec

__all__ = ["ConfigError", "DEFAULTS", "RunConfig", "load_config", "parse_complex"]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


DEFAULTS: dict = {
    "seed": 42,
    "mass": 1.0,
    "out": "out",
    "geometry": {"kind": "sphere", "params": {}, "resolution": 1, "order": 6},
    "coupling": {"family": "electrostatic", "strengths": [1.0]},
    "spectral": {
        "n_samples": 64,
        "margin": 0.999,
        "tol_root": 1e-6,
        "fraction": 1.0 / 6.0,
        "correspondence": True,
        "oracle": False,
        "oracle_factor": 4,
    },
    "identities": {"a_values": [0.0, 0.5], "n_densities": 6, "jump_z": 0.3},
    "tolerances": {
        "square": 5e-2,
        "calderon": 5e-2,
        "norm_lower": 0.49,
        "symmetry": 1e-10,
        "jump": 1e-2,
        "bc_identity": 1e-8,
        "min_order": 1.0,
    },
    "resolvent": {
        "z": "0.3+0.2j",
        "source": [0.2, 0.1, 2.0],
        "spinor": ["1", "0", "0", "0"],
        "points": [[0.0, 0.0, 0.3], [0.0, 0.0, 3.0]],
        "cond_tol": 1e-8,
    },
    "diagnostics": {
        "operators": ["anticommutator_C", "K", "K_star", "commutator_N_R", "anticommutator_W"],
        "factors": [1, 2],
        "n_sv": 60,
        "fraction": 1.0 / 6.0,
        "cauchy_a": 0.3,
        "eta": 2.0,
        "compare": {},
    },
    "converge": {"factors": [1, 2, 4], "a_values": [0.0, 0.5]},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_complex(x) -> complex:
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, (int, float, complex)):
        return complex(x)
    try:
        return complex(str(x).replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"cannot parse complex value {x!r}") from exc


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _set_dotted(d: dict, key: str, value):
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"cannot set {key}: {p} is not a table")
    cur[parts[-1]] = value


@dataclass
class RunConfig:
    data: dict

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def mass(self) -> float:
        return float(self.data["mass"])

    @property
    def out(self) -> Path:
        return Path(self.data["out"])

    @property
    def geometry(self) -> GeometrySpec:
        g = self.data["geometry"]
        try:
            return GeometrySpec(g["kind"], dict(g.get("params", {})), int(g.get("resolution", 1)),
                                int(g.get("order", 6)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"geometry: {exc}") from exc

    @property
    def coupling(self) -> Coupling:
        c = self.data["coupling"]
        try:
            mass = c.get("mass")
            if mass is None and "cauchy" in str(c["family"]):
                mass = self.mass
            return Coupling(c["family"], tuple(c.get("strengths", ())), mass)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"coupling: {exc}") from exc

    def section(self, name: str) -> dict:
        return self.data[name]

    def validate(self) -> "RunConfig":
        if not self.mass > 0:
            raise ConfigError(f"mass must be positive, got {self.mass}")
        for k, v in self.data["tolerances"].items():
            if not float(v) > 0:
                raise ConfigError(f"tolerance {k} must be positive, got {v}")
        sp = self.data["spectral"]
        if int(sp["n_samples"]) < 2:
            raise ConfigError("spectral.n_samples must be at least 2")
        if not 0 < float(sp["margin"]) < 1:
            raise ConfigError("spectral.margin must lie in (0, 1)")
        if not 0 < float(sp["fraction"]) <= 1:
            raise ConfigError("spectral.fraction must lie in (0, 1]")
        self.geometry  # noqa: B018 - validates
        return self

    def digest(self) -> str:
        text = json.dumps(self.data, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (TOML) over the defaults, then apply dotted-key ``overrides``."""
    data = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        data = _merge(data, user)
    for key, value in (overrides or {}).items():
        _set_dotted(data, key, _parse_value(value) if isinstance(value, str) else value)
    return RunConfig(data).validate()
