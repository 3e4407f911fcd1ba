"""Run configuration files.

A run is described by one YAML mapping, for example::

    name: chain-ising
    model: {preset: ising}
    lattice: {geometry: chain, extent: 11, coupling_rule: nearest_neighbor}
    theta: pi/2
    methods: [exact_closed_form, dtwa_sampled]
    pairs: [[0, 1]]
    times: {start: 0, stop: 2*pi, num: 50}
    n_samples: 100000
    seed: 7

Angles and times accept arithmetic on numbers and ``pi``.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .correlations import AXES, NORM_METRICS
from .exact import MAX_SITES
from .model import COUPLING_RULES, GEOMETRIES, PRESETS, LatticeSpec, ModelError, model_preset
from .sampling import sign_problem_factor

METHODS = (
    "exact_closed_form",
    "exact_statevector",
    "dtwa_closed_form",
    "dtwa_sampled",
    "twa_closed_form",
    "twa_sampled",
)
CLOSED_FORM = {"exact_closed_form": "exact", "dtwa_closed_form": "dtwa", "twa_closed_form": "twa"}
SAMPLED = {"dtwa_sampled": "dtwa", "twa_sampled": "twa"}
SWEEP_KEYS = ("extent",)


class ConfigError(ValueError):
    """Configuration could not be parsed or describes an impossible run."""

    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


_OPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos,
}


def parse_number(value) -> float:
    """Float from a number or an arithmetic string such as ``"pi/4"`` or ``"2*pi"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a number, got {value!r}")
    text = value.strip().replace("π", "pi")
    # allow "2pi" as shorthand for "2*pi"
    if text.endswith("pi") and text[:-2].rstrip().replace(".", "", 1).isdigit():
        text = text[:-2] + "*pi"

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError

    try:
        return float(ev(ast.parse(text, mode="eval")))
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse {value!r} as a number") from None


@dataclass
class CMVOptions:
    enabled: bool = False
    kappa: float = 0.5
    level: Optional[float] = None
    subdivisions: int = 4
    ratio_low: float = 0.2
    ratio_high: float = 0.5
    stride: int = 1


@dataclass
class HalfMaxOptions:
    component: str = "yz"
    method: str = "exact_closed_form"


@dataclass
class RunConfig:
    name: str = "run"
    preset: str = "ising"
    h: Optional[float] = None
    lattice: LatticeSpec = field(default_factory=LatticeSpec)
    theta: float = math.pi / 2
    methods: list = field(default_factory=lambda: ["exact_closed_form"])
    pairs: list = field(default_factory=lambda: [(0, 1)])
    times: np.ndarray = field(default_factory=lambda: np.linspace(0, 2 * math.pi, 50))
    n_samples: int = 0
    seed: int = 0
    dt: float = 1e-3
    threads: int = 1
    delta_metric: str = "frobenius"
    dimensionality_threshold: float = 0.05
    cmv: CMVOptions = field(default_factory=CMVOptions)
    sweep: dict = field(default_factory=dict)
    half_max: Optional[HalfMaxOptions] = None
    output: Optional[str] = None

    def lattices(self) -> list[LatticeSpec]:
        """One lattice per sweep point (just the base lattice without a sweep)."""
        if not self.sweep:
            return [self.lattice]
        return [replace(self.lattice, extent=int(e)) for e in self.sweep["extent"]]

    def to_dict(self) -> dict:
        """Plain, fully resolved representation (YAML-safe)."""
        d = {
            "name": self.name,
            "model": {"preset": self.preset, "h": self.h},
            "lattice": {k: v for k, v in asdict(self.lattice).items()},
            "theta": float(self.theta),
            "methods": list(self.methods),
            "pairs": [list(map(int, p)) for p in self.pairs],
            "times": [float(t) for t in self.times],
            "n_samples": int(self.n_samples),
            "seed": int(self.seed),
            "dt": float(self.dt),
            "threads": int(self.threads),
            "delta_metric": self.delta_metric,
            "dimensionality_threshold": float(self.dimensionality_threshold),
            "cmv": asdict(self.cmv),
            "sweep": {k: list(v) for k, v in self.sweep.items()},
            "half_max": asdict(self.half_max) if self.half_max else None,
            "output": self.output,
        }
        return d


_TOP_KEYS = {
    "name", "model", "lattice", "theta", "methods", "pairs", "times", "n_samples", "seed", "dt",
    "threads", "delta_metric", "dimensionality_threshold", "cmv", "sweep", "half_max", "output",
}


def _parse_times(spec, problems) -> np.ndarray:
    if isinstance(spec, dict):
        unknown = set(spec) - {"start", "stop", "num"}
        if unknown:
            problems.append(f"times: unknown keys {sorted(unknown)}")
        try:
            start = parse_number(spec.get("start", 0.0))
            stop = parse_number(spec["stop"])
            num = int(spec.get("num", 50))
        except KeyError:
            problems.append("times: a range needs 'stop'")
            return np.zeros(1)
        except (ConfigError, TypeError, ValueError) as exc:
            problems.append(f"times: {exc}")
            return np.zeros(1)
        return np.linspace(start, stop, num)
    if isinstance(spec, (list, tuple)):
        try:
            return np.array([parse_number(v) for v in spec], dtype=float)
        except ConfigError as exc:
            problems.append(f"times: {exc}")
            return np.zeros(1)
    problems.append("times: expected a list or a {start, stop, num} mapping")
    return np.zeros(1)


def config_from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Build a :class:`RunConfig`, collecting every structural problem before raising."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    problems: list[str] = []
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        problems.append(f"unknown keys {sorted(unknown)}; allowed: {sorted(_TOP_KEYS)}")
    cfg = RunConfig()
    cfg.name = str(raw.get("name", cfg.name))

    model = raw.get("model", {}) or {}
    cfg.preset = str(model.get("preset", cfg.preset))
    if model.get("h") is not None:
        try:
            cfg.h = parse_number(model["h"])
        except ConfigError as exc:
            problems.append(f"model.h: {exc}")

    lat = dict(raw.get("lattice", {}) or {})
    try:
        for key in ("exponent", "J"):
            if key in lat:
                lat[key] = parse_number(lat[key])
        cfg.lattice = LatticeSpec(**lat)
    except (TypeError, ModelError, ConfigError) as exc:
        problems.append(f"lattice: {exc}")

    for key, conv in (("theta", parse_number), ("dt", parse_number), ("dimensionality_threshold", parse_number)):
        if key in raw:
            try:
                setattr(cfg, key, conv(raw[key]))
            except ConfigError as exc:
                problems.append(f"{key}: {exc}")
    for key in ("n_samples", "seed", "threads"):
        if key in raw:
            try:
                setattr(cfg, key, int(raw[key]))
            except (TypeError, ValueError):
                problems.append(f"{key}: expected an integer, got {raw[key]!r}")

    if "methods" in raw:
        cfg.methods = list(raw["methods"] or [])
    if "pairs" in raw:
        try:
            cfg.pairs = [(int(a), int(b)) for a, b in raw["pairs"]]
        except (TypeError, ValueError):
            problems.append("pairs: expected a list of [i, j] site pairs")
    if "times" in raw:
        cfg.times = _parse_times(raw["times"], problems)
    cfg.delta_metric = str(raw.get("delta_metric", cfg.delta_metric))

    cmv = raw.get("cmv", {}) or {}
    try:
        opts = CMVOptions(**cmv)
        opts.kappa = parse_number(opts.kappa)
        opts.level = None if opts.level is None else parse_number(opts.level)
        cfg.cmv = opts
    except (TypeError, ConfigError) as exc:
        problems.append(f"cmv: {exc}")

    sweep = raw.get("sweep", {}) or {}
    if set(sweep) - set(SWEEP_KEYS):
        problems.append(f"sweep: only {SWEEP_KEYS} can be swept")
    cfg.sweep = {k: [int(v) for v in vals] for k, vals in sweep.items() if k in SWEEP_KEYS}

    if raw.get("half_max") is not None:
        try:
            cfg.half_max = HalfMaxOptions(**raw["half_max"])
        except TypeError as exc:
            problems.append(f"half_max: {exc}")

    if raw.get("output") is not None:
        out = Path(raw["output"])
        if base_dir is not None and not out.is_absolute():
            out = base_dir / out
        cfg.output = str(out)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> RunConfig:
    """Read a YAML run configuration. Relative ``output`` paths are taken from the working directory."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    return config_from_dict(raw)


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def sign_problem_error(theta: float, n_sites: int, n_samples: int) -> float:
    """Rough sampling error ``sqrt(alpha^N / n)`` of a signed DTWA ensemble."""
    return math.sqrt(sign_problem_factor(theta) ** n_sites / max(n_samples, 1))


def validate(cfg: RunConfig) -> ValidationReport:
    """Enumerate every invalid combination, each with a hint on how to fix it."""
    rep = ValidationReport()
    err = rep.errors.append
    if cfg.preset not in PRESETS:
        err(f"model.preset {cfg.preset!r} is unknown; use one of {list(PRESETS)}")
    bad = [m for m in cfg.methods if m not in METHODS]
    if bad:
        err(f"methods {bad} are unknown; use a subset of {list(METHODS)}")
    if not cfg.methods:
        err("methods is empty; list at least one method")
    if not -1e-12 <= cfg.theta <= math.pi / 2 + 1e-12:
        err(f"theta={cfg.theta} lies outside [0, pi/2]; other tilts follow by symmetry")
    t = np.asarray(cfg.times)
    if t.size == 0 or t[0] < 0 or np.any(np.diff(t) < 0):
        err("times must be non-negative and non-decreasing; sort the grid")
    if not cfg.dt > 0:
        err(f"dt={cfg.dt} must be positive")
    if cfg.threads < 1:
        err("threads must be >= 1")
    if cfg.delta_metric not in NORM_METRICS:
        err(f"delta_metric {cfg.delta_metric!r} is unknown; use one of {list(NORM_METRICS)}")
    if not 0 <= cfg.dimensionality_threshold <= 1:
        err("dimensionality_threshold must lie in [0, 1]")
    sampled = [m for m in cfg.methods if m in SAMPLED]
    if sampled and cfg.n_samples <= 0:
        err(f"{sampled} need n_samples > 0; set n_samples or drop the sampled methods")
    if cfg.n_samples < 0:
        err("n_samples must be >= 0")
    if cfg.cmv.enabled:
        if not cfg.cmv.kappa > 0:
            err("cmv.kappa must be positive")
        if cfg.cmv.level is not None and not cfg.cmv.level > 0:
            err("cmv.level must be positive")
        if cfg.cmv.subdivisions < 0 or cfg.cmv.stride < 1:
            err("cmv.subdivisions must be >= 0 and cmv.stride >= 1")
        if not 0 < cfg.cmv.ratio_low <= cfg.cmv.ratio_high:
            err("cmv thresholds need 0 < ratio_low <= ratio_high")
    if cfg.half_max is not None:
        if cfg.half_max.method not in cfg.methods:
            err(f"half_max.method {cfg.half_max.method!r} is not among the run's methods")
        comp = cfg.half_max.component
        if len(comp) != 2 or any(ch not in AXES for ch in comp):
            err(f"half_max.component {comp!r} must be two axis letters such as 'yz'")
    for i, j in cfg.pairs:
        if i == j:
            err(f"pair ({i}, {j}) repeats a site; correlations need two distinct sites")

    if cfg.preset not in PRESETS:
        return rep
    for lattice in cfg.lattices():
        n = lattice.n_sites
        tag = f"[N={n}] " if cfg.sweep else ""
        spec = model_preset(cfg.preset, lattice, cfg.h)
        for i, j in cfg.pairs:
            if not (0 <= i < n and 0 <= j < n):
                err(f"{tag}pair ({i}, {j}) is outside the lattice of {n} sites")
        closed = [m for m in cfg.methods if m in CLOSED_FORM]
        if closed and not spec.is_field_free_ising():
            err(f"{tag}{closed} need a field-free Ising model; use exact_statevector or sampled methods for {cfg.preset!r}")
        if "exact_statevector" in cfg.methods and n > MAX_SITES:
            err(f"{tag}exact_statevector is capped at {MAX_SITES} sites (lattice has {n}); use exact_closed_form")
        if "dtwa_sampled" in cfg.methods and cfg.n_samples > 0 and sign_problem_factor(
            min(max(cfg.theta, 0.0), math.pi / 2)
        ) > 1 + 1e-12:
            est = sign_problem_error(cfg.theta, n, cfg.n_samples)
            rep.warnings.append(
                f"{tag}sign problem: theta={cfg.theta:.4g} gives signed DTWA weights; "
                f"expected sampling error ~ sqrt(alpha^N / n_samples) = {est:.3g}"
            )
    return rep
