"""Experiment configuration: YAML files validated into typed sections.

Unknown keys are rejected at every level.  Each experiment has its own
optional section holding parameters that only it uses.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .observables import ObservableSpec
from .param_curve import PiecewiseHolderCurve, curve_from_dict
from .transfer_op import Grid

EXPERIMENTS = ("decay", "perturb", "adiabatic", "correlation", "ergodic", "cone-check", "srb")

DEFAULT_LEVELS = {
    "decay": [16, 32, 64, 128, 256, 512, 1024],
    "adiabatic": [100, 1000, 10000],
    "ergodic": [100, 1000, 10000],
    "correlation": [],
    "perturb": [],
    "cone-check": [],
    "srb": [],
}

# graded grids where orbits must be followed near the neutral point for long times
DEFAULT_GRID_KIND = {"decay": "graded", "correlation": "graded"}
DEFAULT_N = {"decay": 4096, "correlation": 4096}


def _take(data, cls, where):
    """Instantiate dataclass ``cls`` from ``data``, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class GridSection:
    N: int | None = None
    kind: str | None = None
    x_min: float = 1e-14
    graded_fraction: float = 0.25
    x_join: float = 1.0 / 64

    def build(self, experiment):
        n = self.N if self.N is not None else DEFAULT_N.get(experiment, 2048)
        kind = self.kind or DEFAULT_GRID_KIND.get(experiment, "uniform")
        if kind == "uniform":
            return Grid.uniform(int(n))
        if kind == "graded":
            return Grid.graded(int(n), float(self.x_min), float(self.graded_fraction),
                               float(self.x_join))
        raise ValueError(f"unknown grid kind {kind!r}")


@dataclass
class Tolerances:
    srb_tol: float = 1e-12
    srb_max_iter: int = 200_000
    eps_cone: float | None = None
    eps_grid: float = 0.05
    slope_min: float = -4.0
    slope_max: float = -1.5
    domination_slack: float = 1e-12
    agreement_se: float = 3.0


@dataclass
class DecaySection:
    f: str = "uniform"
    g: str = "power"
    profile_beta: float | None = None


@dataclass
class PerturbSection:
    alpha: float = 0.2
    gaps: list = field(default_factory=lambda: [2.0**-i for i in range(3, 11)])


@dataclass
class AdiabaticSection:
    t_values: list = field(default_factory=lambda: [0.25, 0.5, 0.75])


@dataclass
class CorrelationSection:
    m: int = 1
    k: int = 2
    base_times: list = field(default_factory=lambda: [16])
    gaps: list = field(default_factory=lambda: [8, 32, 128])
    tail_offsets: list = field(default_factory=list)
    observables: list | None = None
    f0: dict | None = None
    level: int | None = None


@dataclass
class ErgodicSection:
    eps: list = field(default_factory=lambda: [0.05])
    t_points: int | None = None
    n_quad: int = 64


@dataclass
class ConeCheckSection:
    trials: int = 20
    terms: int = 3


@dataclass
class SrbSection:
    alpha: float = 0.5


_SECTIONS = {
    "decay": DecaySection,
    "perturb": PerturbSection,
    "adiabatic": AdiabaticSection,
    "correlation": CorrelationSection,
    "ergodic": ErgodicSection,
    "cone_check": ConeCheckSection,
    "srb": SrbSection,
}


@dataclass
class ExperimentConfig:
    experiment: str
    beta_star: float
    curve: PiecewiseHolderCurve
    observable: ObservableSpec
    grid: Grid
    levels: list
    samples: int
    seed: int
    output: str
    tolerances: Tolerances
    section: Any
    threads: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    def with_overrides(self, seed=None, output=None, threads=None):
        cfg = copy.copy(self)
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            cfg.seed = int(seed)
            raw["seed"] = int(seed)
        if output is not None:
            cfg.output = str(output)
            raw["output"] = str(output)
        if threads is not None:
            if threads < 1:
                raise ConfigError("threads must be >= 1")
            cfg.threads = int(threads)
        cfg.raw = raw
        return cfg


_TOP_KEYS = {"experiment", "beta_star", "curve", "observable", "grid", "levels", "samples",
             "seed", "output", "tolerances"} | set(_SECTIONS)


def config_from_dict(data: Mapping) -> ExperimentConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    try:
        beta_star = float(data.get("beta_star", 0.25))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"beta_star: {exc}") from exc
    if not (0.0 < beta_star < 1.0):
        raise ConfigError("beta_star must lie in (0, 1)")
    try:
        if "curve" in data:
            curve = curve_from_dict(data["curve"], beta_star)
        else:
            curve = PiecewiseHolderCurve.constant(beta_star, beta_star)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"curve: {exc}") from exc
    if curve.max_value() > beta_star:
        raise ConfigError(f"curve reaches {curve.max_value()} above beta_star {beta_star}")
    try:
        obs = data.get("observable", {"kind": "affine", "coefficients": [-0.5, 1.0]})
        observable = ObservableSpec.from_dict(obs)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"observable: {exc}") from exc
    grid_sec = _take(data.get("grid"), GridSection, "grid")
    try:
        grid = grid_sec.build(exp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc
    levels = data.get("levels", DEFAULT_LEVELS[exp])
    if not isinstance(levels, list) or any(not isinstance(n, int) or n < 1 for n in levels):
        raise ConfigError("levels must be a list of positive integers")
    samples = data.get("samples", 200)
    seed = data.get("seed", 0)
    if not isinstance(samples, int) or samples < 1:
        raise ConfigError("samples must be a positive integer")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    tol = _take(data.get("tolerances"), Tolerances, "tolerances")
    key = exp.replace("-", "_")
    for other in _SECTIONS:
        if other != key and other in data:
            raise ConfigError(f"section {other!r} does not apply to experiment {exp!r}")
    section = _take(data.get(key), _SECTIONS[key], key)
    cfg = ExperimentConfig(
        experiment=exp, beta_star=beta_star, curve=curve, observable=observable, grid=grid,
        levels=sorted(levels), samples=samples, seed=seed,
        output=str(data.get("output", f"{key}.csv")), tolerances=tol, section=section,
        raw=copy.deepcopy(dict(data)))
    _check_section(cfg)
    return cfg


def _check_section(cfg):
    s = cfg.section
    b = cfg.beta_star
    if cfg.experiment == "perturb":
        if not s.gaps or any(g <= 0 for g in s.gaps):
            raise ConfigError("perturb.gaps must be positive")
        if s.alpha < 0 or s.alpha + max(s.gaps) > b:
            raise ConfigError("perturb needs 0 <= alpha < alpha + gap <= beta_star")
    elif cfg.experiment == "adiabatic":
        if any(not (0.0 < t <= 1.0) for t in s.t_values):
            raise ConfigError("adiabatic.t_values must lie in (0, 1]")
    elif cfg.experiment == "correlation":
        if not (0 <= s.m < s.k <= 3):
            raise ConfigError("correlation needs 0 <= m < k <= 3 (at most 4 observables)")
        if len(s.base_times) != s.m or len(s.tail_offsets) != s.k - s.m - 1:
            raise ConfigError("correlation needs m base_times and k - m - 1 tail_offsets")
        if s.observables is not None and len(s.observables) != s.k:
            raise ConfigError("correlation.observables lists f_1..f_k")
        if not s.gaps or any(int(g) < 0 for g in s.gaps):
            raise ConfigError("correlation.gaps must be nonnegative integers")
    elif cfg.experiment == "ergodic":
        if not s.eps or any(e <= 0 for e in s.eps):
            raise ConfigError("ergodic.eps must be positive")
        if s.n_quad < 16:
            raise ConfigError("ergodic.n_quad must be >= 16")
    elif cfg.experiment == "srb":
        if not (0.0 <= s.alpha <= b):
            raise ConfigError("srb.alpha must lie in [0, beta_star]")
    elif cfg.experiment == "decay":
        for name in (s.f, s.g):
            if name not in ("uniform", "power"):
                raise ConfigError("decay.f and decay.g are 'uniform' or 'power'")
    if cfg.experiment in ("decay", "adiabatic", "ergodic") and not cfg.levels:
        raise ConfigError("levels must be nonempty")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return config_from_dict(data or {})
