"""Run configuration: a flat ``key = value`` file, overridable from the command line.

Lines starting with ``#`` are comments. Angles accept expressions such as
``pi/2`` or ``0.25*pi``. A JSON manifest written by a previous run can be used
in place of a key-value file; its ``config`` block is read back.
"""

from __future__ import annotations

import configparser
import json
import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .spin_space import Boundary, ConstraintKind, ConstraintSpec, SpinConfiguration

MODELS = (
    "unconstrained",
    "east",
    "fa",
    "excluded_volume_classical",
    "quantum_kcm",
    "rydberg_effective",
    "rydberg_three_level",
)
CLASSICAL_MODELS = MODELS[:4]
RYDBERG_MODELS = MODELS[5:]

INITIAL_STATES = ("all_up", "all_down", "product_s")
TIME_GRIDS = ("log", "linear")

_ANGLE = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*?\s*)?pi\s*(?:/\s*([0-9.eE+-]+))?\s*$")


def parse_angle(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    m = _ANGLE.match(str(text))
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}") from None


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("on", "true", "yes", "1"):
        return True
    if value in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"cannot parse {text!r} as on/off")


@dataclass
class ExperimentConfig:
    model: str
    n_sites: int = 4
    constraint: str | None = None
    kappa_ratio: float | None = None
    x: float | None = None
    theta: float | None = None
    lam: float = 1.0
    boundary: str | None = None
    initial_state: str | None = None
    t_max: float = 100.0
    t_min: float = 1e-2
    time_grid: str = "log"
    n_points: int = 60
    n_trajectories: int = 100
    master_seed: int = 0
    oracle: bool = False
    output_path: str = "qkcm_out"
    n_jobs: int = 1
    omega_c: float | None = None
    gamma: float | None = None
    v: float | None = None

    # ------------------------------------------------------------------
    def __post_init__(self):
        self._coerce()
        self._check()

    def _coerce(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or value == "":
                setattr(self, f.name, None if f.default is None else value)
                continue
            if f.name == "theta":
                self.theta = parse_angle(value)
            elif f.name == "oracle":
                self.oracle = _parse_bool(value)
            elif f.type in ("int",):
                setattr(self, f.name, int(value))
            elif f.type in ("float", "float | None"):
                setattr(self, f.name, float(value))
            elif f.type in ("int | None",):
                setattr(self, f.name, int(value))

    def _check(self):
        m = self.model
        if m not in MODELS:
            raise ConfigError(f"unknown model {m!r}; choose from {', '.join(MODELS)}")
        if self.theta is not None and m != "quantum_kcm":
            raise ConfigError("theta only applies to model quantum_kcm")
        if self.x is not None and m not in RYDBERG_MODELS:
            raise ConfigError("x only applies to rydberg_* models")
        if self.kappa_ratio is not None and m in RYDBERG_MODELS:
            raise ConfigError("rydberg models take x, not kappa_ratio (kappa/(1-kappa) = x^2)")
        if self.constraint is not None and m != "quantum_kcm":
            raise ConfigError("constraint only applies to model quantum_kcm (classical models name it directly)")
        for name in ("omega_c", "gamma", "v"):
            if getattr(self, name) is not None and m != "rydberg_three_level":
                raise ConfigError(f"{name} only applies to model rydberg_three_level")
        if m in RYDBERG_MODELS and self.x is None:
            raise ConfigError(f"model {m} needs x")
        if m not in RYDBERG_MODELS and self.kappa_ratio is None:
            raise ConfigError(f"model {m} needs kappa_ratio")
        if self.theta is None and m == "quantum_kcm":
            self.theta = math.pi / 2
        if m == "quantum_kcm":
            self.constraint = self.constraint or "east"
            if self.constraint not in ("unconstrained", "east", "fa"):
                raise ConfigError(f"unknown quantum constraint {self.constraint!r}")
        if self.boundary is None:
            self.boundary = "open" if m in RYDBERG_MODELS else "periodic"
        if self.boundary not in ("open", "periodic"):
            raise ConfigError(f"boundary must be open or periodic, got {self.boundary!r}")
        if self.initial_state is None:
            self.initial_state = "all_down" if m in RYDBERG_MODELS else "all_up"
        if self.initial_state not in INITIAL_STATES and not re.fullmatch(r"[01]+", self.initial_state):
            raise ConfigError(f"initial_state must be one of {INITIAL_STATES} or a bitstring")
        if re.fullmatch(r"[01]+", self.initial_state) and len(self.initial_state) != self.n_sites:
            raise ConfigError("bitstring initial_state length differs from n_sites")
        if self.initial_state == "product_s" and m in CLASSICAL_MODELS:
            raise ConfigError("product_s is a quantum state; classical models need a configuration")
        if m == "rydberg_three_level":
            for name, default in (("omega_c", 1.0), ("gamma", 20.0), ("v", 400.0)):
                if getattr(self, name) is None:
                    setattr(self, name, default)
            if self.initial_state != "all_down":
                raise ConfigError("the three-level solver starts from all atoms in the ground state")
        if self.time_grid not in TIME_GRIDS:
            raise ConfigError(f"time_grid must be log or linear, got {self.time_grid!r}")
        if not self.t_max > 0 or not self.t_min > 0 or self.t_min >= self.t_max:
            raise ConfigError("need 0 < t_min < t_max")
        if self.n_sites < 1 or self.n_points < 2 or self.n_trajectories < 1 or self.n_jobs < 1:
            raise ConfigError("n_sites, n_trajectories, n_jobs must be positive and n_points >= 2")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        for name in ("x", "kappa_ratio", "omega_c", "gamma", "v"):
            value = getattr(self, name)
            if value is not None and not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive and finite, got {value!r}")

    # ------------------------------------------------------------------
    def as_dict(self) -> dict:
        return asdict(self)

    def times(self) -> np.ndarray:
        if self.time_grid == "log":
            grid = np.logspace(np.log10(self.t_min), np.log10(self.t_max), self.n_points)
            return np.concatenate([[0.0], grid])
        return np.linspace(0.0, self.t_max, self.n_points)

    def constraint_spec(self) -> ConstraintSpec:
        kind = {
            "unconstrained": ConstraintKind.UNCONSTRAINED,
            "east": ConstraintKind.EAST,
            "fa": ConstraintKind.FA,
            "excluded_volume_classical": ConstraintKind.EXCLUDED_VOLUME,
        }[self.constraint if self.model == "quantum_kcm" else self.model]
        return ConstraintSpec(kind, Boundary(self.boundary))

    def initial_configuration(self) -> SpinConfiguration:
        n = self.n_sites
        if self.initial_state == "all_up":
            return SpinConfiguration((1,) * n)
        if self.initial_state == "all_down":
            return SpinConfiguration((0,) * n)
        if self.initial_state == "product_s":
            raise ConfigError("product_s is not a configuration")
        return SpinConfiguration.from_string(self.initial_state)


_ALIASES = {"n": "n_sites", "lambda": "lam", "tmax": "t_max", "tmin": "t_min", "trajectories": "n_trajectories",
            "seed": "master_seed", "out": "output_path", "kappa-ratio": "kappa_ratio"}


def normalize_key(key: str) -> str:
    key = key.strip().lower()
    key = _ALIASES.get(key, key)
    return key.replace("-", "_")


def read_config_file(path) -> dict:
    """Raw key/value pairs from a key-value file or a previous run's manifest."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        data = data.get("config", data)
        return {normalize_key(k): v for k, v in data.items()}
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {normalize_key(k): v for k, v in parser["run"].items()}


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    values = dict(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "model" not in values:
        raise ConfigError("config needs a model")
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
