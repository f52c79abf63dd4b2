"""Experiment and sweep configuration files (YAML, strict schema).

An experiment file::

    schema_version: 1
    name: n14-t500
    system: {N: 14, J: 1.0, U: 10.0}
    solver: redfield            # or lindblad
    bath: {gamma: 0.01, T: 500.0, omega_c: 500.0, lamb_shift: false}
    # lindblad: {Gamma: 0.1}    # exactly one of bath / lindblad
    grid: {t_min: 1.0e-3, t_max: 1.0e7, ratio: 1.122}
    initial_state: ground       # or {occupations: [0, 14]}
    analysis: {span: 1.5}       # WindowPolicy overrides
    output: {directory: results, formats: [csv, json]}

A sweep file holds ``base`` (an experiment mapping or a path to one),
``axes`` (lists over N, U, J, T, omega_c, gamma, Gamma), ``mode``
(``product`` or ``zip``) and optionally ``max_runs``.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..analysis import WindowPolicy
from ..bath import BathSpec
from ..fock import SystemSpec

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SweepSpec",
    "load_config",
    "load_sweep",
    "parse_config",
    "parse_sweep",
    "SCHEMA_VERSION",
    "DEFAULT_SWEEP_CAP",
]

SCHEMA_VERSION = 1
DEFAULT_SWEEP_CAP = 512

_TOP_KEYS = {"schema_version", "name", "system", "solver", "bath", "lindblad", "grid", "initial_state",
             "analysis", "output"}
_SYSTEM_KEYS = {"N", "J", "U"}
_BATH_KEYS = {"gamma", "T", "omega_c", "lamb_shift"}
_LINDBLAD_KEYS = {"Gamma"}
_GRID_KEYS = {"t_min", "t_max", "ratio"}
_OUTPUT_KEYS = {"directory", "formats"}
_FORMATS = {"csv", "json"}
_POLICY_KEYS = {f.name for f in dataclasses.fields(WindowPolicy)}
_SWEEP_KEYS = {"schema_version", "base", "axes", "mode", "max_runs"}
_AXES = {"N": ("system", "N"), "U": ("system", "U"), "J": ("system", "J"), "T": ("bath", "T"),
         "omega_c": ("bath", "omega_c"), "gamma": ("bath", "gamma"), "Gamma": ("lindblad", "Gamma")}


class ConfigError(ValueError):
    """Invalid configuration (CLI exit code 2)."""


def _mapping(value, where):
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(value).__name__}")
    return value


def _strict(d, allowed, where):
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(map(str, unknown))}")


def _number(value, where):
    # YAML 1.1 reads "1e-3" as a string; accept numeric strings and "inf"
    if isinstance(value, bool):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a number, got {value!r}") from None


def _integer(value, where):
    x = _number(value, where)
    if x != int(x):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return int(x)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    system: SystemSpec
    solver: str
    bath: BathSpec | None
    Gamma: float | None
    t_min: float
    t_max: float
    ratio: float
    initial_state: object = "ground"
    policy: WindowPolicy = field(default_factory=WindowPolicy)
    output_dir: str = "results"
    formats: tuple = ("csv", "json")

    def to_dict(self) -> dict:
        """Fully resolved mapping; ``parse_config(to_dict())`` round-trips."""
        d = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "system": {"N": self.system.N, "J": self.system.J, "U": self.system.U},
            "solver": self.solver,
            "grid": {"t_min": self.t_min, "t_max": self.t_max, "ratio": self.ratio},
            "initial_state": self.initial_state if self.initial_state == "ground"
            else {"occupations": list(self.initial_state)},
            "analysis": dataclasses.asdict(self.policy),
            "output": {"directory": self.output_dir, "formats": list(self.formats)},
        }
        d["analysis"]["alpha_bounds"] = list(self.policy.alpha_bounds)
        if self.bath is not None:
            d["bath"] = {"gamma": self.bath.gamma, "T": _json_float(self.bath.T), "omega_c": self.bath.omega_c,
                         "lamb_shift": self.bath.include_lamb_shift}
        else:
            d["lindblad"] = {"Gamma": self.Gamma}
        return d

    def physics_dict(self) -> dict:
        """The part of the config that determines the numbers (no output settings)."""
        d = self.to_dict()
        d.pop("output")
        d.pop("name")
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.physics_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _json_float(x):
    return "inf" if math.isinf(x) else x


def parse_config(raw, where="config") -> ExperimentConfig:
    raw = _mapping(raw, where)
    _strict(raw, _TOP_KEYS, where)
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{where}: schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    for key in ("system", "solver", "grid"):
        if key not in raw:
            raise ConfigError(f"{where}: missing required key {key!r}")

    sysd = _mapping(raw["system"], "system")
    _strict(sysd, _SYSTEM_KEYS, "system")
    if "N" not in sysd:
        raise ConfigError("system: missing required key 'N'")
    try:
        system = SystemSpec(_integer(sysd["N"], "system.N"), _number(sysd.get("J", 1.0), "system.J"),
                            _number(sysd.get("U", 0.0), "system.U"))
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from None

    solver = raw["solver"]
    if solver not in ("redfield", "lindblad"):
        raise ConfigError(f"solver must be 'redfield' or 'lindblad', got {solver!r}")
    has_bath = raw.get("bath") is not None
    has_lind = raw.get("lindblad") is not None
    if has_bath and has_lind:
        raise ConfigError("conflicting keys 'bath' and 'lindblad': give exactly one")
    bath = None
    Gamma = None
    if solver == "redfield":
        if not has_bath:
            raise ConfigError("solver 'redfield' needs a 'bath' section" + (" (found 'lindblad')" if has_lind else ""))
        bd = _mapping(raw["bath"], "bath")
        _strict(bd, _BATH_KEYS, "bath")
        missing = sorted({"gamma", "T", "omega_c"} - set(bd))
        if missing:
            raise ConfigError(f"bath: missing key(s) {', '.join(missing)}")
        lamb = bd.get("lamb_shift", False)
        if not isinstance(lamb, bool):
            raise ConfigError("bath.lamb_shift must be true or false")
        try:
            bath = BathSpec(_number(bd["gamma"], "bath.gamma"), _number(bd["T"], "bath.T"),
                            _number(bd["omega_c"], "bath.omega_c"), include_lamb_shift=lamb)
        except ValueError as exc:
            raise ConfigError(f"bath: {exc}") from None
    else:
        if not has_lind:
            raise ConfigError("solver 'lindblad' needs a 'lindblad' section" + (" (found 'bath')" if has_bath else ""))
        ld = _mapping(raw["lindblad"], "lindblad")
        _strict(ld, _LINDBLAD_KEYS, "lindblad")
        if "Gamma" not in ld:
            raise ConfigError("lindblad: missing key 'Gamma'")
        Gamma = _number(ld["Gamma"], "lindblad.Gamma")
        if not Gamma >= 0:
            raise ConfigError(f"lindblad.Gamma must be >= 0, got {Gamma}")

    gd = _mapping(raw["grid"], "grid")
    _strict(gd, _GRID_KEYS, "grid")
    missing = sorted(_GRID_KEYS - set(gd))
    if missing:
        raise ConfigError(f"grid: missing key(s) {', '.join(missing)}")
    t_min, t_max, ratio = (_number(gd[k], f"grid.{k}") for k in ("t_min", "t_max", "ratio"))
    if not 0 < t_min < t_max:
        raise ConfigError("grid: need 0 < t_min < t_max")
    if t_max / t_min < 10:
        raise ConfigError(f"grid: t_max / t_min = {t_max / t_min:.3g} spans less than one decade")
    if not 1 < ratio <= 2:
        raise ConfigError(f"grid.ratio must lie in (1, 2], got {ratio}")

    init = raw.get("initial_state", "ground")
    if isinstance(init, dict):
        _strict(init, {"occupations"}, "initial_state")
        occ = init.get("occupations")
        if not isinstance(occ, list) or not occ:
            raise ConfigError("initial_state.occupations must be a non-empty list")
        occ = tuple(_integer(o, "initial_state.occupations") for o in occ)
        if any(not 0 <= o <= system.N for o in occ):
            raise ConfigError(f"initial_state.occupations must lie in 0..{system.N}")
        init = occ
    elif init != "ground":
        raise ConfigError(f"initial_state must be 'ground' or {{occupations: [...]}}, got {init!r}")

    ad = _mapping(raw.get("analysis") or {}, "analysis")
    _strict(ad, _POLICY_KEYS, "analysis")
    pol = {}
    for k, v in ad.items():
        if k == "alpha_bounds":
            if not isinstance(v, (list, tuple)) or len(v) != 2:
                raise ConfigError("analysis.alpha_bounds must be a two-element list")
            pol[k] = tuple(_number(x, "analysis.alpha_bounds") for x in v)
        else:
            pol[k] = _number(v, f"analysis.{k}")
    policy = WindowPolicy(**pol)

    od = _mapping(raw.get("output") or {}, "output")
    _strict(od, _OUTPUT_KEYS, "output")
    formats = od.get("formats", ["csv", "json"])
    if not isinstance(formats, list) or not set(formats) <= _FORMATS:
        raise ConfigError(f"output.formats must be a list drawn from {sorted(_FORMATS)}")
    name = str(raw.get("name") or f"{solver}-N{system.N}")
    return ExperimentConfig(name, system, solver, bath, Gamma, t_min, t_max, ratio, init, policy,
                            str(od.get("directory", "results")), tuple(formats))


def _read_yaml(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None


def load_config(path) -> ExperimentConfig:
    return parse_config(_read_yaml(path), where=str(path))


@dataclass(frozen=True)
class SweepSpec:
    base: dict
    axes: dict
    mode: str = "product"
    max_runs: int = DEFAULT_SWEEP_CAP

    @property
    def size(self) -> int:
        lengths = [len(v) for v in self.axes.values()]
        return math.prod(lengths) if self.mode == "product" else lengths[0]

    def cells(self, override_cap=False):
        """Configs in deterministic axis order (first axis slowest)."""
        if self.size > self.max_runs and not override_cap:
            raise ConfigError(f"sweep has {self.size} runs, above the cap of {self.max_runs}; "
                              "raise max_runs or pass the override flag")
        names = list(self.axes)
        combos = itertools.product(*self.axes.values()) if self.mode == "product" else zip(*self.axes.values())
        out = []
        for combo in combos:
            raw = copy.deepcopy(self.base)
            tags = []
            for name, value in zip(names, combo):
                section, key = _AXES[name]
                if raw.get(section) is None:
                    raise ConfigError(f"axis {name!r} needs a {section!r} section in the base config")
                raw[section][key] = value
                tags.append(f"{name}={value:g}" if isinstance(value, (int, float)) else f"{name}={value}")
            raw["name"] = f"{self.base.get('name', 'cell')}[{','.join(tags)}]"
            out.append(parse_config(raw, where=f"sweep cell {raw['name']}"))
        return out


def parse_sweep(raw, where="sweep", base_dir=None) -> SweepSpec:
    raw = _mapping(raw, where)
    _strict(raw, _SWEEP_KEYS, where)
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{where}: schema_version must be {SCHEMA_VERSION}")
    base = raw.get("base")
    if isinstance(base, str):
        p = Path(base)
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        base = _read_yaml(p)
    base = copy.deepcopy(_mapping(base, "sweep.base"))
    parse_config(base, where="sweep.base")
    axes = _mapping(raw.get("axes"), "sweep.axes")
    if not axes:
        raise ConfigError("sweep.axes is empty")
    _strict(axes, set(_AXES), "sweep.axes")
    for k, v in axes.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"sweep axis {k!r} must be a non-empty list")
    mode = raw.get("mode", "product")
    if mode not in ("product", "zip"):
        raise ConfigError(f"sweep.mode must be 'product' or 'zip', got {mode!r}")
    if mode == "zip" and len({len(v) for v in axes.values()}) != 1:
        raise ConfigError("zip mode needs axes of equal length")
    cap = _integer(raw.get("max_runs", DEFAULT_SWEEP_CAP), "sweep.max_runs")
    return SweepSpec(base, {k: list(v) for k, v in axes.items()}, mode, cap)


def load_sweep(path) -> SweepSpec:
    return parse_sweep(_read_yaml(path), where=str(path), base_dir=Path(path).parent)
