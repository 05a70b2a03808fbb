"""Experiment configuration: a line-oriented ``key = value`` format with dotted keys.

Grammar
-------
* One assignment per line: ``key = value``.  Blank lines and lines whose
  first non-blank character is ``#`` are ignored.
* Keys are dotted paths (``grid.n``, ``experiment.lemma23.j_list``).  Each key
  may appear once; unknown keys are errors.
* Values are parsed as JSON (numbers, ``true``/``false``, strings in double
  quotes, lists, objects).  A value that is not valid JSON is taken as a bare
  string, so ``kernel.family = harmonic`` works.  ``experiments`` also accepts a
  comma-separated list of bare names.

Recognized keys
---------------
``grid.n``, ``grid.half_width``, ``grid.pad_factor``
    Override every checker's default lattice.  Per-experiment overrides use
    ``experiment.<name>.grid.n`` and so on.
``kernel.family`` (``constant``, ``harmonic``, ``power_log``, ``file``), ``kernel.params`` (object), ``kernel.moment_order``
    The angular kernel; moments of order ``moment_order`` are projected out.
``beta``
    Log-integrability exponent, ``> 1``.
``symbol.family`` (``linear``, ``bump``, ``tent``, ``file``), ``symbol.params`` (object)
``experiments`` (list of checker names), ``experiment.<name>.<param>``
``seed`` (integer in ``[0, 2^64)``), ``output.dir``, ``output.format`` (``csv``, ``json``, ``both``)
"""
from __future__ import annotations

import hashlib
import inspect
import json
from dataclasses import dataclass, field
from pathlib import Path

from .grid import BoxGrid
from .harness import CHECKERS, SymbolSpec
from .kernels import (
    AngularKernel,
    constant_kernel,
    harmonic_kernel,
    load_kernel_file,
    power_log_kernel,
    project_vanishing_moments,
)
from .operators import bump_symbol, constant_symbol, linear_symbol, tent_symbol

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "parse_config_text", "checker_params"]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending dotted path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


KERNEL_FAMILIES = {"constant": constant_kernel, "harmonic": harmonic_kernel, "power_log": power_log_kernel, "file": None}
SYMBOL_FAMILIES = {"linear": linear_symbol, "bump": bump_symbol, "tent": tent_symbol, "constant": constant_symbol, "file": None}
OUTPUT_FORMATS = ("csv", "json", "both")
GRID_KEYS = ("n", "half_width", "pad_factor")

# checker arguments supplied by the runner rather than by experiment.<name>.*
_RUNNER_ARGS = {"omega", "a", "beta", "w", "f_family", "grid", "seed"}

_TOP_KEYS = {
    "grid.n",
    "grid.half_width",
    "grid.pad_factor",
    "kernel.family",
    "kernel.params",
    "kernel.moment_order",
    "beta",
    "symbol.family",
    "symbol.params",
    "experiments",
    "seed",
    "output.dir",
    "output.format",
}


def checker_params(name: str) -> dict:
    """Tunable parameters of a checker with their defaults."""
    sig = inspect.signature(CHECKERS[name])
    return {p.name: p.default for p in sig.parameters.values() if p.name not in _RUNNER_ARGS and p.default is not inspect.Parameter.empty}


def checker_inputs(name: str) -> list[str]:
    """Runner-supplied inputs (``omega``, ``a``, ``beta``, ``seed``) a checker consumes."""
    sig = inspect.signature(CHECKERS[name])
    return [p for p in ("omega", "a", "beta", "seed") if p in sig.parameters]


@dataclass
class ExperimentConfig:
    grid: dict = field(default_factory=dict)
    kernel_family: str = "harmonic"
    kernel_params: dict = field(default_factory=lambda: {"m": 2})
    moment_order: int = 1
    beta: float = 2.0
    symbol_family: str = "bump"
    symbol_params: dict = field(default_factory=dict)
    experiments: list = field(default_factory=list)
    experiment_params: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "results"
    output_format: str = "csv"
    base_dir: Path = field(default_factory=Path.cwd)

    def to_dict(self) -> dict:
        return {
            "grid": dict(self.grid),
            "kernel": {"family": self.kernel_family, "params": self.kernel_params, "moment_order": self.moment_order},
            "beta": self.beta,
            "symbol": {"family": self.symbol_family, "params": self.symbol_params},
            "experiments": list(self.experiments),
            "experiment": {k: dict(v) for k, v in self.experiment_params.items()},
            "seed": self.seed,
            "output": {"dir": self.output_dir, "format": self.output_format},
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, plus the bytes of any referenced data files."""
        h = hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode())
        for params in (self.kernel_params, self.symbol_params):
            if "path" in params:
                h.update(self.resolve(params["path"]).read_bytes())
        return h.hexdigest()

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def build_kernel(self) -> AngularKernel:
        if self.kernel_family == "file":
            return load_kernel_file(self.resolve(self.kernel_params["path"]), self.moment_order)
        raw = KERNEL_FAMILIES[self.kernel_family](**self.kernel_params, k=self.moment_order)
        return project_vanishing_moments(raw, self.moment_order)

    def symbol_spec(self) -> SymbolSpec:
        params = dict(self.symbol_params)
        if "path" in params:
            params["path"] = str(self.resolve(params["path"]))
        return SymbolSpec(self.symbol_family, tuple(sorted((k, _freeze(v)) for k, v in params.items())))

    def grid_for(self, name: str) -> BoxGrid | None:
        """Lattice for experiment ``name``, or ``None`` for the checker's default."""
        spec = dict(self.grid)
        spec.update(self.experiment_params.get(name, {}).get("grid", {}))
        if not spec:
            return None
        default = inspect.signature(CHECKERS[name]).parameters["grid"].default
        base = {"n": default.n, "half_width": default.half_width, "pad_factor": default.pad_factor}
        base.update(spec)
        return BoxGrid(**base)

    def checker_kwargs(self, name: str) -> dict:
        """Keyword arguments for ``CHECKERS[name]``."""
        kw = {}
        inputs = checker_inputs(name)
        if "omega" in inputs:
            kw["omega"] = self.build_kernel()
        if "a" in inputs:
            kw["a"] = self.symbol_spec()
        if "beta" in inputs:
            kw["beta"] = self.beta
        if "seed" in inputs:
            kw["seed"] = self.seed
        if "k" in checker_params(name):
            kw["k"] = self.moment_order
        g = self.grid_for(name)
        if g is not None:
            kw["grid"] = g
        for key, v in self.experiment_params.get(name, {}).items():
            if key != "grid":
                kw[key] = tuple(v) if isinstance(v, list) else v
        return kw


def _freeze(v):
    return tuple(_freeze(x) for x in v) if isinstance(v, list) else v


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _read_pairs(text: str) -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {s!r}")
        key, _, value = s.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        if key in pairs:
            raise ConfigError(key, f"duplicate key (line {lineno})")
        pairs[key] = _parse_value(value)
    return pairs


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_params(key: str, params, func, skip=()):
    if not isinstance(params, dict):
        raise ConfigError(key, f"expected an object, got {params!r}")
    allowed = [p for p in inspect.signature(func).parameters if p not in skip]
    for name in params:
        if name not in allowed:
            raise ConfigError(f"{key}.{name}", f"unknown parameter (allowed: {', '.join(allowed)})")


def _grid_value(key: str, name: str, v):
    if name == "half_width":
        if not _is_real(v) or not v > 0:
            raise ConfigError(key, f"expected a positive number, got {v!r}")
        return float(v)
    if not _is_int(v):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if name == "n" and (v < 4 or v & (v - 1)):
        raise ConfigError(key, f"n must be a power of two >= 4, got {v}")
    if name == "pad_factor" and v < 2:
        raise ConfigError(key, f"pad_factor must be >= 2, got {v}")
    return v


def parse_config_text(text: str, base_dir=None) -> ExperimentConfig:
    """Parse and validate configuration text; relative paths resolve against ``base_dir``."""
    pairs = _read_pairs(text)
    cfg = ExperimentConfig(base_dir=Path(base_dir) if base_dir is not None else Path.cwd())
    exp_keys = {}
    for key, v in pairs.items():
        if key.startswith("experiment."):
            exp_keys[key] = v
        elif key not in _TOP_KEYS:
            raise ConfigError(key, "unknown key")

    for name in GRID_KEYS:
        key = f"grid.{name}"
        if key in pairs:
            cfg.grid[name] = _grid_value(key, name, pairs[key])

    if "kernel.moment_order" in pairs:
        k = pairs["kernel.moment_order"]
        if not _is_int(k) or k < 1:
            raise ConfigError("kernel.moment_order", f"k must be an integer >= 1, got {k!r}")
        cfg.moment_order = k
    if "kernel.family" in pairs:
        fam = pairs["kernel.family"]
        if fam not in KERNEL_FAMILIES:
            raise ConfigError("kernel.family", f"expected one of {sorted(KERNEL_FAMILIES)}, got {fam!r}")
        cfg.kernel_family = fam
        cfg.kernel_params = {}
    if "kernel.params" in pairs:
        cfg.kernel_params = pairs["kernel.params"]
    if cfg.kernel_family == "file":
        _check_path("kernel.params", cfg.kernel_params, cfg)
    else:
        _check_params("kernel.params", cfg.kernel_params, KERNEL_FAMILIES[cfg.kernel_family], skip=("k",))
    try:
        cfg.build_kernel()
    except (TypeError, ValueError) as exc:
        raise ConfigError("kernel.params", str(exc)) from None

    if "beta" in pairs:
        b = pairs["beta"]
        if not _is_real(b):
            raise ConfigError("beta", f"expected a number, got {b!r}")
        if not b > 1:
            raise ConfigError("beta", f"beta must satisfy beta > 1 (boundedness hypothesis), got {b!r}")
        cfg.beta = float(b)

    if "symbol.family" in pairs:
        fam = pairs["symbol.family"]
        if fam not in SYMBOL_FAMILIES:
            raise ConfigError("symbol.family", f"expected one of {sorted(SYMBOL_FAMILIES)}, got {fam!r}")
        cfg.symbol_family = fam
    if "symbol.params" in pairs:
        cfg.symbol_params = pairs["symbol.params"]
    if cfg.symbol_family == "file":
        _check_path("symbol.params", cfg.symbol_params, cfg)
    else:
        _check_params("symbol.params", cfg.symbol_params, SYMBOL_FAMILIES[cfg.symbol_family], skip=("grid",))

    if "experiments" in pairs:
        exps = pairs["experiments"]
        if isinstance(exps, str):
            exps = [e.strip() for e in exps.split(",") if e.strip()]
        if not isinstance(exps, list) or not all(isinstance(e, str) for e in exps):
            raise ConfigError("experiments", f"expected a list of checker names, got {exps!r}")
        for e in exps:
            if e not in CHECKERS:
                raise ConfigError("experiments", f"unknown checker {e!r} (known: {', '.join(CHECKERS)})")
        if len(set(exps)) != len(exps):
            raise ConfigError("experiments", "a checker is listed twice")
        cfg.experiments = exps

    for key, v in exp_keys.items():
        parts = key.split(".")
        if len(parts) < 3 or parts[1] not in CHECKERS:
            raise ConfigError(key, "unknown key")
        name, rest = parts[1], parts[2:]
        if name not in cfg.experiments:
            raise ConfigError(key, f"parameters given for {name!r}, which is not in 'experiments'")
        slot = cfg.experiment_params.setdefault(name, {})
        if rest[0] == "grid" and len(rest) == 2 and rest[1] in GRID_KEYS:
            slot.setdefault("grid", {})[rest[1]] = _grid_value(key, rest[1], v)
        elif len(rest) == 1 and rest[0] in checker_params(name):
            slot[rest[0]] = v
        else:
            raise ConfigError(key, f"unknown key (parameters of {name}: {', '.join(checker_params(name))})")

    if "seed" in pairs:
        s = pairs["seed"]
        if not _is_int(s) or not 0 <= s < 2**64:
            raise ConfigError("seed", f"expected an integer in [0, 2^64), got {s!r}")
        cfg.seed = s
    if "output.dir" in pairs:
        d = pairs["output.dir"]
        if not isinstance(d, str) or not d:
            raise ConfigError("output.dir", f"expected a path, got {d!r}")
        cfg.output_dir = d
    if "output.format" in pairs:
        f = pairs["output.format"]
        if f not in OUTPUT_FORMATS:
            raise ConfigError("output.format", f"expected one of {OUTPUT_FORMATS}, got {f!r}")
        cfg.output_format = f

    return cfg


def _check_path(key: str, params, cfg: ExperimentConfig):
    if not isinstance(params, dict) or set(params) != {"path"}:
        raise ConfigError(key, f"the file family takes exactly one parameter 'path', got {params!r}")
    if not cfg.resolve(params["path"]).is_file():
        raise ConfigError(f"{key}.path", f"file not found: {params['path']}")


def parse_config(path) -> ExperimentConfig:
    """Read and validate a configuration file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text, base_dir=path.parent)
