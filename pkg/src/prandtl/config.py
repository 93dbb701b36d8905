"""Run configuration: plain-text key = value sections, presets, canonical echo.

The canonical text form is byte-stable: parsing a canonical config and
re-emitting it reproduces the input exactly, which keeps artifacts
reproducible and diffable.  Flags override config values; presets are named
bundles applied before either.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError

COMMANDS = ("blasius", "eigen", "solve", "decay", "sharpness")


@dataclass
class BlasiusSection:
    z_max: float = 10.0
    step: float = 1e-3
    shoot_tol: float = 1e-10
    residual_tol: float = 1e-6
    fit_lo_frac: float = 0.6
    fit_hi_frac: float = 0.8
    tail_tol: float = 1e-3

    def validate(self):
        if self.z_max < 8.0:
            raise ConfigError("blasius.z_max must be >= 8")
        if self.step <= 0 or self.z_max / self.step < 400:
            raise ConfigError("blasius.step must leave at least 400 points")
        if not (0.6 <= self.fit_lo_frac < self.fit_hi_frac <= 0.95):
            raise ConfigError("fit window fractions must satisfy 0.6 <= lo < hi <= 0.95")


@dataclass
class GridSection:
    psi_max: float = 10.0
    j_cells: int = 1024
    stretch: float = 8.0

    def validate(self):
        if self.j_cells < 64:
            raise ConfigError("grid.j_cells must be >= 64")
        if self.psi_max <= 0:
            raise ConfigError("grid.psi_max must be positive")


@dataclass
class EigenSection:
    tol: float = 1e-12
    shift: float = 0.5
    refine_levels: int = 4

    def validate(self):
        if self.tol < 1e-12:
            raise ConfigError("eigen.tol must be >= 1e-12")
        if self.refine_levels < 1:
            raise ConfigError("eigen.refine_levels must be >= 1")


@dataclass
class SolveSection:
    d_shift: float = 1.0
    s_shift: float = 4.0
    init_csv: str = ""
    x_end: float = 50.0
    dxi: float = 1e-2
    scheme: str = "CrankNicolson"
    n_outputs: int = 5
    guards_fatal: bool = True
    concave_guard: bool = False

    def validate(self):
        if self.d_shift < 1.0:
            raise ConfigError("solve.d_shift must be >= 1")
        if self.x_end <= 0:
            raise ConfigError("solve.x_end must be positive")
        if self.scheme not in ("CrankNicolson", "BackwardEuler"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.n_outputs < 1:
            raise ConfigError("solve.n_outputs must be >= 1")


@dataclass
class DecaySection:
    x_lo: float = 5.0
    x_hi: float = 50.0
    n_stations: int = 12
    barrier_b: float = 1.0
    barrier_delta: float = 0.5
    barrier_alpha: float = 0.5
    barrier_mu: float = 0.125

    def validate(self):
        if not (0 < self.x_lo < self.x_hi):
            raise ConfigError("decay window must satisfy 0 < x_lo < x_hi")
        if self.n_stations < 1:
            raise ConfigError("decay.n_stations must be >= 1")


@dataclass
class SharpnessSection:
    s_shift: float = 4.0
    d_shift: float = 1.0
    x_lo: float = 10.0
    x_hi: float = 200.0
    n_stations: int = 16

    def validate(self):
        if not (0 < self.x_lo < self.x_hi):
            raise ConfigError("sharpness window must satisfy 0 < x_lo < x_hi")


_SECTION_TYPES = {
    "blasius": BlasiusSection,
    "grid": GridSection,
    "eigen": EigenSection,
    "solve": SolveSection,
    "decay": DecaySection,
    "sharpness": SharpnessSection,
}


@dataclass
class RunConfig:
    command: str = "blasius"
    seed: int = 0
    out: str = "out"
    blasius: BlasiusSection = field(default_factory=BlasiusSection)
    grid: GridSection = field(default_factory=GridSection)
    eigen: EigenSection = field(default_factory=EigenSection)
    solve: SolveSection = field(default_factory=SolveSection)
    decay: DecaySection = field(default_factory=DecaySection)
    sharpness: SharpnessSection = field(default_factory=SharpnessSection)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for name in _SECTION_TYPES:
            getattr(self, name).validate()

    def to_dict(self) -> dict:
        return asdict(self)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str, typ):
    text = text.strip()
    try:
        if typ is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        return typ(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r} as {typ.__name__}") from exc


def canonical_text(cfg: RunConfig) -> str:
    """Stable text form: fixed section order, declaration-ordered keys."""
    lines = ["[run]",
             f"command = {cfg.command}",
             f"seed = {cfg.seed}",
             f"out = {cfg.out}",
             ""]
    for name, typ in _SECTION_TYPES.items():
        lines.append(f"[{name}]")
        section = getattr(cfg, name)
        for f in fields(typ):
            lines.append(f"{f.name} = {_format_value(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def parse_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    cfg = RunConfig()
    if parser.has_section("run"):
        for key in parser["run"]:
            if key == "command":
                cfg.command = parser["run"][key].strip()
            elif key == "seed":
                cfg.seed = _parse_value(parser["run"][key], int)
            elif key == "out":
                cfg.out = parser["run"][key].strip()
            else:
                raise ConfigError(f"unknown key run.{key}")
    for name, typ in _SECTION_TYPES.items():
        if not parser.has_section(name):
            continue
        section = getattr(cfg, name)
        known = {f.name: f.type for f in fields(typ)}
        types = {f.name: type(getattr(section, f.name)) for f in fields(typ)}
        for key in parser[name]:
            if key not in known:
                raise ConfigError(f"unknown key {name}.{key}")
            setattr(section, key, _parse_value(parser[name][key], types[key]))
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read())


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Apply 'section.key=value' strings (flags override config)."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        where, value = pair.split("=", 1)
        where = where.strip()
        if "." in where:
            sect_name, key = where.split(".", 1)
        else:
            sect_name, key = "run", where
        if sect_name == "run":
            if key == "seed":
                cfg.seed = _parse_value(value, int)
            elif key == "out":
                cfg.out = value.strip()
            elif key == "command":
                cfg.command = value.strip()
            else:
                raise ConfigError(f"unknown key run.{key}")
            continue
        if sect_name not in _SECTION_TYPES:
            raise ConfigError(f"unknown section {sect_name!r}")
        section = getattr(cfg, sect_name)
        try:
            current = getattr(section, key)
        except AttributeError as exc:
            raise ConfigError(f"unknown key {sect_name}.{key}") from exc
        setattr(section, key, _parse_value(value, type(current)))
    return cfg


PRESETS: dict[str, dict] = {
    # marching the steady profile itself; J is large enough that the gap to
    # the discrete equilibrium stays below 1e-6
    "equilibrium-smoke": {
        "command": "solve",
        "grid": {"psi_max": 10.0, "j_cells": 4096},
        # x_end = e - 1, i.e. 100 steps of the default dxi
        "solve": {"s_shift": 1.0, "x_end": 1.718281828459045, "n_outputs": 1},
    },
    # shifted similarity family, the exact-solution oracle run
    "shifted-s4": {
        "command": "decay",
        "grid": {"psi_max": 11.0, "j_cells": 512},
        "solve": {"s_shift": 4.0, "x_end": 50.0},
        "decay": {"x_lo": 5.0, "x_hi": 50.0, "n_stations": 12},
    },
    # small-shift run used for weighted-norm decay rates
    "weighted-s12": {
        "command": "decay",
        "grid": {"psi_max": 10.0, "j_cells": 512},
        "solve": {"s_shift": 1.2, "x_end": 50.0},
        "decay": {"x_lo": 5.0, "x_hi": 50.0, "n_stations": 12},
    },
}


def apply_preset(cfg: RunConfig, name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    spec = PRESETS[name]
    for key, value in spec.items():
        if key == "command":
            cfg.command = value
        elif key in _SECTION_TYPES:
            section = getattr(cfg, key)
            for k, v in value.items():
                setattr(section, k, v)
        else:
            raise ConfigError(f"bad preset entry {key!r}")
    return cfg
