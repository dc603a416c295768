"""Run configuration files.

The format is line based::

    # comments start with '#'
    [model]
    gamma = 2.0
    delta = 1e-2

    [grid]
    grid_points = 64

    [time]
    dt = 1e-3
    t_end = 0.5

    [initial]
    name = gaussian_blob
    width = 0.08

    [sweep]
    delta = [1e-1, 1e-2, 1e-3]

Values are Python literals (numbers, strings, tuples, lists, booleans); a
value that is not a literal is taken as a bare string.  Keys may also appear
before the first section header.  Every error carries the offending line.

Documented defaults: ``epsilon = delta = kappa = 0``, ``n_modes =
grid_points // 3``, ``dim = 2``, ``rho_floor = 1e-8``, ``picard_tol =
1e-9``, ``picard_max_iter = 50``, ``lp_moments = (2, 4)``, initial condition
``constant`` with ``seed = 0``, ``cadence = 1``, ``directory = "out"``,
``snapshot_every = 0`` (initial and final snapshots only).
"""
from __future__ import annotations

import ast
import dataclasses
import itertools
import re
from dataclasses import dataclass, field

from .initial import GENERATORS
from .model import Params

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "expand_sweep", "REQUIRED"]


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


_PARAM_TYPES = {
    "gamma": float,
    "epsilon": float,
    "delta": float,
    "kappa": float,
    "n_modes": int,
    "dim": int,
    "grid_points": int,
    "dt": float,
    "t_end": float,
    "rho_floor": float,
    "picard_tol": float,
    "picard_max_iter": int,
    "lp_moments": tuple,
}

SECTIONS = {
    "model": {"gamma", "epsilon", "delta", "kappa"},
    "grid": {"grid_points", "n_modes", "dim"},
    "time": {"dt", "t_end", "rho_floor", "picard_tol", "picard_max_iter"},
    "initial": {"name", "seed"} | set().union(*GENERATORS.values()),
    "output": {"cadence", "directory", "snapshot_every", "lp_moments"},
    "sweep": set(),
}

_OTHER_TYPES = {"name": str, "seed": int, "cadence": int, "directory": str, "snapshot_every": int}
_ALIASES = {"grid": "grid_points", "n": "n_modes"}

REQUIRED = ("gamma", "grid_points", "dt", "t_end")
_SWEEPABLE = set(_PARAM_TYPES) - {"lp_moments"}


@dataclass(frozen=True)
class RunConfig:
    params: Params
    initial: str = "constant"
    initial_options: dict = field(default_factory=dict)
    seed: int = 0
    cadence: int = 1
    directory: str = "out"
    snapshot_every: int = 0
    sweep: tuple[tuple[str, tuple], ...] = ()
    label: str = ""
    n_modes_explicit: bool = False


def _coerce(key, value, kind, line):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}", line)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not (isinstance(value, int) or (isinstance(value, float) and value.is_integer())):
            raise ConfigError(f"{key} expects an integer, got {value!r}", line)
        return int(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} expects a string, got {value!r}", line)
        return value
    if kind is tuple:
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{key} expects a list of numbers, got {value!r}", line)
        return tuple(float(v) for v in value)
    return value


def _literal(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


_SECTION = re.compile(r"^\[\s*([A-Za-z_]\w*)\s*\]$")
_ITEM = re.compile(r"^([A-Za-z_]\w*)\s*[=:]\s*(.*)$")


def _strip_comment(raw):
    # '#' inside a quoted string is kept
    quote = None
    for i, ch in enumerate(raw):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "#":
            return raw[:i]
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; raises :class:`ConfigError`."""
    section = None
    values: dict[str, tuple[object, int]] = {}
    sweep: dict[str, tuple[tuple, int]] = {}
    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        stripped = _strip_comment(raw).strip()
        if not stripped:
            continue
        m = _SECTION.match(stripped)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        m = _ITEM.match(stripped)
        if not m:
            raise ConfigError(f"cannot parse {stripped!r}; expected 'key = value'", lineno)
        key, value = _ALIASES.get(m.group(1), m.group(1)), _literal(m.group(2).strip())
        if section == "sweep":
            if key not in _SWEEPABLE:
                raise ConfigError(f"sweep axis {key!r} is not a parameter name", lineno)
            if not isinstance(value, (list, tuple)) or len(value) == 0:
                raise ConfigError(f"sweep axis {key!r} needs a nonempty list of values", lineno)
            sweep[key] = (tuple(_coerce(key, v, _PARAM_TYPES[key], lineno) for v in value), lineno)
            continue
        allowed = SECTIONS[section] if section else set().union(*SECTIONS.values())
        if key not in allowed:
            where = f"section [{section}]" if section else "configuration"
            raise ConfigError(f"unknown key {key!r} in {where}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {values[key][1]})", lineno)
        kind = _PARAM_TYPES.get(key) or _OTHER_TYPES.get(key)
        values[key] = (_coerce(key, value, kind, lineno), lineno)

    end = len(lines) + 1
    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}", end)

    name = values.get("name", ("constant", end))
    if name[0] not in GENERATORS:
        raise ConfigError(f"unknown initial condition {name[0]!r}; choose from {sorted(GENERATORS)}", name[1])
    options = {}
    for key in set().union(*GENERATORS.values()):
        if key in values:
            if key not in GENERATORS[name[0]]:
                raise ConfigError(f"initial condition {name[0]!r} does not take {key!r}", values[key][1])
            options[key] = values[key][0]

    param_values = {k: v for k, (v, _) in values.items() if k in _PARAM_TYPES}
    params = _make_params(param_values, {k: ln for k, (_, ln) in values.items()}, end)
    for key, (vals, lineno) in sweep.items():
        for v in vals:
            _make_params({**param_values, key: v}, {k: lineno for k in _PARAM_TYPES}, lineno)

    other = {k: v for k, (v, _) in values.items() if k in ("seed", "cadence", "directory", "snapshot_every")}
    if other.get("cadence", 1) < 1:
        raise ConfigError("cadence must be >= 1", values["cadence"][1])
    return RunConfig(
        params=params,
        initial=name[0],
        initial_options=options,
        sweep=tuple((k, v) for k, (v, _) in sweep.items()),
        n_modes_explicit="n_modes" in values,
        **other,
    )


def _make_params(kw, lines, default_line):
    try:
        return Params(**kw)
    except ValueError as exc:
        message = str(exc)
        key = message.split(" ", 1)[0]
        line = lines.get(key, default_line)
        if key == "grid_points" and "n_modes" in lines:
            line = lines.get("n_modes", line)
        raise ConfigError(message, line) from None


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def expand_sweep(config: RunConfig) -> list[RunConfig]:
    """Cross product of all sweep axes; a config without axes expands to itself."""
    if not config.sweep:
        return [config]
    names = [k for k, _ in config.sweep]
    out = []
    for combo in itertools.product(*(vals for _, vals in config.sweep)):
        changes = dict(zip(names, combo))
        if "grid_points" in changes and "n_modes" not in changes and not config.n_modes_explicit:
            changes["n_modes"] = None
        params = dataclasses.replace(config.params, **changes)
        label = "_".join(f"{k}={v:g}" for k, v in zip(names, combo))
        out.append(dataclasses.replace(config, params=params, sweep=(), label=label))
    return out
