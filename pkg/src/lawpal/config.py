"""Run configuration (JSON) and incidence-series (CSV) ingestion.

The config is a single JSON document with four blocks: ``model`` (kernel and
population), ``observation`` (fixed or truncated-normal reporting),
``estimation`` (free parameters with bounds/inits plus priors, only needed by
the fitting commands), and ``execution`` (seed, replicate counts, iteration
budgets). Unknown keys anywhere are rejected so typos fail loudly.

Free parameters bind by name: kernel parameters directly, ``q`` /
``mu_q`` / ``sigma2_q`` to the observation model, and ``i0`` / ``e0`` to the
seeded infected/exposed counts of a 4-compartment initial distribution
[n - i0 - e0, e0, i0, 0] / n.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .estimators import (
    BetaPrior,
    ExponentialPrior,
    Parameter,
    ParamSpace,
    Prior,
    TruncNormalPrior,
)
from .model import KERNEL_BUILDERS, CompartmentalSpec, build_kernel
from .observation import FixedReporting, ObservationModel, TruncNormalReporting

__all__ = [
    "ConfigError",
    "ModelConfig",
    "EstimationConfig",
    "ExecutionConfig",
    "RunConfig",
    "load_config",
    "load_series",
    "bind_parameters",
]

OBS_PARAM_NAMES = ("q", "mu_q", "sigma2_q")
INIT_PARAM_NAMES = ("i0", "e0")


class ConfigError(ValueError):
    """Malformed configuration or data file."""


def _require_keys(block: dict, required: set[str], optional: set[str], where: str) -> None:
    unknown = set(block) - required - optional
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(block)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


@dataclass(frozen=True)
class ModelConfig:
    kernel_name: str
    kernel_params: dict
    h: float
    n: int
    pi0: tuple[float, ...]
    obs_edge: tuple[int, int]

    def build_spec(self) -> CompartmentalSpec:
        kernel = build_kernel(self.kernel_name, dict(self.kernel_params), h=self.h)
        return CompartmentalSpec(
            n=self.n, pi0=np.array(self.pi0), kernel=kernel, obs_edge=self.obs_edge
        )


@dataclass(frozen=True)
class EstimationConfig:
    space: ParamSpace
    priors: dict[str, Prior] = field(default_factory=dict)


@dataclass(frozen=True)
class ExecutionConfig:
    seed: int = 0
    replicates: int = 1
    threads: int = 1
    particles: int = 1000
    iters: int = 10_000
    burnin: int = 2000
    burn_step_var: float = 0.01
    thin: int = 1
    T: int | None = None

    def __post_init__(self) -> None:
        for name in ("replicates", "threads", "particles", "iters", "burnin", "thin"):
            if getattr(self, name) < 1 and not (name == "burnin" and self.burnin == 0):
                raise ConfigError(f"execution.{name} must be positive")
        if self.burn_step_var <= 0:
            raise ConfigError("execution.burn_step_var must be positive")
        if self.T is not None and self.T < 1:
            raise ConfigError("execution.T must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    observation: ObservationModel
    estimation: EstimationConfig | None
    execution: ExecutionConfig


def _parse_model(block: dict) -> ModelConfig:
    _require_keys(
        block,
        {"kernel", "params", "n", "pi0", "obs_edge"},
        {"h"},
        "model",
    )
    name = block["kernel"]
    if name not in KERNEL_BUILDERS:
        raise ConfigError(f"unknown kernel {name!r}; known: {sorted(KERNEL_BUILDERS)}")
    n = block["n"]
    if not isinstance(n, int) or n <= 0:
        raise ConfigError(f"model.n must be a positive integer, got {n!r}")
    pi0 = block["pi0"]
    if not isinstance(pi0, list) or not pi0:
        raise ConfigError("model.pi0 must be a non-empty list")
    edge = block["obs_edge"]
    if (
        not isinstance(edge, list)
        or len(edge) != 2
        or not all(isinstance(v, int) for v in edge)
    ):
        raise ConfigError("model.obs_edge must be a pair of 1-based integers")
    cfg = ModelConfig(
        kernel_name=name,
        kernel_params=dict(block["params"]),
        h=float(block.get("h", 1.0)),
        n=n,
        pi0=tuple(float(v) for v in pi0),
        obs_edge=(edge[0], edge[1]),
    )
    cfg.build_spec()  # surface invariant violations at load time
    return cfg


def _parse_observation(block: dict) -> ObservationModel:
    if "type" not in block:
        raise ConfigError("observation block needs a 'type'")
    if block["type"] == "fixed":
        _require_keys(block, {"type", "q"}, set(), "observation")
        return FixedReporting(q=float(block["q"]))
    if block["type"] == "trunc_normal":
        _require_keys(block, {"type", "mu_q", "sigma2_q"}, set(), "observation")
        return TruncNormalReporting(
            mu_q=float(block["mu_q"]), sigma2_q=float(block["sigma2_q"])
        )
    raise ConfigError(f"unknown observation type {block['type']!r}")


def _parse_prior(name: str, block: dict) -> Prior:
    if "type" not in block:
        raise ConfigError(f"prior for {name!r} needs a 'type'")
    kind = block["type"]
    if kind == "trunc_normal":
        _require_keys(block, {"type", "mu", "sigma2"}, {"lo", "hi"}, f"priors.{name}")
        return TruncNormalPrior(
            mu=float(block["mu"]),
            sigma2=float(block["sigma2"]),
            lo=float(block.get("lo", 0.0)),
            hi=float(block.get("hi", math.inf)),
        )
    if kind == "beta":
        _require_keys(block, {"type", "a", "b"}, set(), f"priors.{name}")
        return BetaPrior(a=float(block["a"]), b=float(block["b"]))
    if kind == "exponential":
        _require_keys(block, {"type", "rate"}, set(), f"priors.{name}")
        return ExponentialPrior(rate=float(block["rate"]))
    raise ConfigError(f"unknown prior type {kind!r} for {name!r}")


def _parse_estimation(block: dict, model: ModelConfig) -> EstimationConfig:
    _require_keys(block, {"free"}, {"priors"}, "estimation")
    params = []
    for entry in block["free"]:
        _require_keys(
            entry, {"name", "lo", "hi", "init"}, {"log_scale"}, "estimation.free[]"
        )
        params.append(
            Parameter(
                name=entry["name"],
                lo=float(entry["lo"]),
                hi=float(entry["hi"]),
                init=float(entry["init"]),
                log_scale=bool(entry.get("log_scale", False)),
            )
        )
    space = ParamSpace(params)
    valid = set(model.kernel_params) | set(OBS_PARAM_NAMES) | set(INIT_PARAM_NAMES)
    for p in space.params:
        if p.name not in valid:
            raise ConfigError(
                f"free parameter {p.name!r} matches nothing bindable; "
                f"valid names: {sorted(valid)}"
            )
    priors = {}
    for name, sub in block.get("priors", {}).items():
        if name not in valid:
            raise ConfigError(f"prior given for unknown parameter {name!r}")
        priors[name] = _parse_prior(name, sub)
    return EstimationConfig(space=space, priors=priors)


def _parse_execution(block: dict) -> ExecutionConfig:
    _require_keys(
        block,
        set(),
        {
            "seed",
            "replicates",
            "threads",
            "particles",
            "iters",
            "burnin",
            "burn_step_var",
            "thin",
            "T",
        },
        "execution",
    )
    return ExecutionConfig(**block)


def load_config(path: str | Path) -> RunConfig:
    """Load and fully validate a JSON run configuration."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _require_keys(raw, {"model", "observation"}, {"estimation", "execution"}, "config")
    model = _parse_model(raw["model"])
    obs = _parse_observation(raw["observation"])
    execution = _parse_execution(raw.get("execution", {}))
    estimation = None
    if "estimation" in raw:
        estimation = _parse_estimation(raw["estimation"], model)
    return RunConfig(model=model, observation=obs, estimation=estimation, execution=execution)


@dataclass(frozen=True)
class IncidenceSeries:
    t: np.ndarray
    y: np.ndarray

    @property
    def T(self) -> int:
        return len(self.y)


def load_series(path: str | Path) -> IncidenceSeries:
    """Read an incidence CSV with header ``t,y``.

    Time indices must run 1, 2, ..., T without gaps; counts must be
    non-negative integers. Comment lines starting with '#' are skipped.
    """
    ts: list[int] = []
    ys: list[int] = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows or [c.strip() for c in rows[0]] != ["t", "y"]:
        raise ConfigError(f"{path}: expected CSV header 't,y'")
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ConfigError(f"{path}:{lineno}: expected two columns")
        try:
            t, y = int(row[0]), int(row[1])
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: non-integer value") from e
        if y < 0:
            raise ConfigError(f"{path}:{lineno}: negative count {y}")
        ts.append(t)
        ys.append(y)
    if not ts:
        raise ConfigError(f"{path}: empty series")
    expected = list(range(1, len(ts) + 1))
    if ts != expected:
        raise ConfigError(f"{path}: time index must be contiguous from 1, got {ts[:5]}...")
    return IncidenceSeries(t=np.array(ts), y=np.array(ys))


def bind_parameters(
    model: ModelConfig, obs: ObservationModel, values: dict[str, float]
) -> tuple[CompartmentalSpec, ObservationModel]:
    """Apply named parameter values to a model/observation pair.

    Names resolve in this order: kernel parameters, observation parameters
    (q, mu_q, sigma2_q), then seeded initial counts (i0, e0) of a
    4-compartment model.
    """
    kernel_params = dict(model.kernel_params)
    pi0 = model.pi0
    obs_updates: dict[str, float] = {}
    init_updates: dict[str, float] = {}
    for name, value in values.items():
        if name in kernel_params:
            kernel_params[name] = value
        elif name in OBS_PARAM_NAMES:
            obs_updates[name] = value
        elif name in INIT_PARAM_NAMES:
            init_updates[name] = value
        else:
            raise ConfigError(f"cannot bind parameter {name!r}")

    if obs_updates:
        if isinstance(obs, FixedReporting):
            if set(obs_updates) - {"q"}:
                raise ConfigError("fixed observation model only binds 'q'")
            obs = FixedReporting(q=obs_updates["q"])
        else:
            obs = TruncNormalReporting(
                mu_q=obs_updates.get("mu_q", obs.mu_q),
                sigma2_q=obs_updates.get("sigma2_q", obs.sigma2_q),
            )

    if init_updates:
        if len(pi0) != 4:
            raise ConfigError("i0/e0 binding requires a 4-compartment model")
        i0 = init_updates.get("i0", pi0[2] * model.n)
        e0 = init_updates.get("e0", pi0[1] * model.n)
        if i0 < 0 or e0 < 0 or i0 + e0 >= model.n:
            raise ConfigError(f"invalid seeded counts i0={i0}, e0={e0}")
        pi0 = (
            (model.n - i0 - e0) / model.n,
            e0 / model.n,
            i0 / model.n,
            0.0,
        )

    bound = replace(model, kernel_params=kernel_params, pi0=pi0)
    return bound.build_spec(), obs
