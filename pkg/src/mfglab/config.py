"""
Run configuration: flat ``key = value`` text with dotted namespaces.

Example::

    mode = solve
    mfg.dim = 1
    mfg.gamma = 2.0
    mfg.alpha = 0.5
    mfg.mass = 1.0
    mfg.potential.cv = 1.0
    mfg.potential.b = 2.0
    grid.half_width = 8
    grid.nodes = 257
    solver.schedule = 4, 8, 16, 32
    sweep.mfg.mass = 0.1, 0.2, 0.4      # sweep mode only
    output.dir = runs/example

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

from .grid import Grid
from .mfg import MFGParams

MODES = ("solve", "sweep", "verify", "oracle", "nonexist-probe")


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(","))


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


# key -> (MFGParams field or grid field, parser)
PARAM_KEYS = {
    "mfg.dim": ("dim", int),
    "mfg.gamma": ("gamma", float),
    "mfg.alpha": ("alpha", float),
    "mfg.mass": ("mass", float),
    "mfg.potential.cv": ("cv", float),
    "mfg.potential.b": ("b", float),
    "mfg.coupling": ("coupling", _bool),
    "mfg.override": ("override", _bool),
    "grid.half_width": ("half_width", float),
    "grid.nodes": ("nodes", int),
    "solver.damping": ("damping", float),
    "solver.schedule": ("schedule", _ints),
    "solver.tol": ("tol", float),
    "solver.intermediate_tol": ("intermediate_tol", float),
    "solver.max_iter": ("max_iter", int),
    "solver.p_bar": ("p_bar", _opt_float),
    "solver.hjb_tol": ("hjb_tol", float),
    "solver.sup_ceiling": ("sup_ceiling", _opt_float),
    "admissible.C1": ("C1", _opt_float),
    "admissible.C2": ("C2", _opt_float),
    "admissible.xi": ("xi", _opt_float),
    "admissible.C": ("C", _opt_float),
}

DEFAULTS = {
    "dim": 1,
    "gamma": 2.0,
    "alpha": 0.5,
    "mass": 1.0,
    "half_width": 8.0,
    "nodes": 129,
}

GRID_FIELDS = ("half_width", "nodes")


@dataclass
class RunConfig:
    mode: str
    values: dict = field(default_factory=dict)
    sweep: dict[str, list] = field(default_factory=dict)
    output_dir: Path = Path("mfglab-out")
    bundles: list[Path] = field(default_factory=list)

    def params(self, overrides: dict | None = None) -> MFGParams:
        vals = dict(DEFAULTS)
        vals.update(self.values)
        if overrides:
            vals.update(overrides)
        grid_kw = {k: vals.pop(k) for k in GRID_FIELDS}
        try:
            grid = Grid(vals["dim"], grid_kw["half_width"], grid_kw["nodes"])
            return MFGParams(grid=grid, **vals)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sweep_points(self) -> list[dict]:
        names = list(self.sweep)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.sweep[n] for n in names))]


def parse_config(text: str) -> RunConfig:
    mode = None
    values: dict = {}
    sweep: dict[str, list] = {}
    out = None
    bundles: list[Path] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            if key == "mode":
                if val not in MODES:
                    raise ConfigError(f"line {lineno}: mode must be one of {', '.join(MODES)}")
                mode = val
            elif key == "output.dir":
                out = Path(val)
            elif key == "verify.bundles":
                bundles = [Path(p.strip()) for p in val.split(",") if p.strip()]
            elif key.startswith("sweep."):
                target = key[len("sweep."):]
                if target not in PARAM_KEYS or target == "solver.schedule":
                    raise ConfigError(f"line {lineno}: cannot sweep over {target!r}")
                name, parse = PARAM_KEYS[target]
                sweep[name] = [parse(v) for v in val.split(",") if v.strip()]
            elif key in PARAM_KEYS:
                name, parse = PARAM_KEYS[key]
                values[name] = parse(val)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    if mode is None:
        raise ConfigError("missing required key 'mode'")
    if mode == "sweep" and (not sweep or any(not v for v in sweep.values())):
        raise ConfigError("sweep mode needs at least one non-empty sweep.<key> axis")
    if mode == "verify" and not bundles:
        raise ConfigError("verify mode needs verify.bundles = dir1, dir2, ...")
    cfg = RunConfig(mode, values, sweep, out or Path("mfglab-out"), bundles)
    if mode in ("solve", "sweep", "nonexist-probe"):
        # validate every point up front so that config errors never surface mid-run
        for point in cfg.sweep_points() if mode == "sweep" else [{}]:
            cfg.params(point)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)

