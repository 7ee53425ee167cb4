"""Hyperparameter grid sweeps over sampling strategies."""

from __future__ import annotations

import itertools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .guidance import SUPERCLASS, Strategy, make_strategy
from .metrics import MetricRecord, proxy_scores
from .sampler import RunConfig, ScheduleParams, run_sampling
from .scenario import MixtureKey, mixture_id, parse_mixture_id, resolve_scenario

GRID_VERSION = 1
THREADS_ENV = "TRAJLAB_THREADS"


@dataclass(frozen=True)
class DerivedParam:
    """``name = total - minus`` where ``minus`` names an axis or fixed value."""

    total: float
    minus: str


@dataclass(frozen=True)
class SweepGrid:
    strategy: str
    axes: dict[str, list]
    fixed: dict[str, Any] = field(default_factory=dict)
    derived: dict[str, DerivedParam] = field(default_factory=dict)
    scenario: str = "canonical-2d"
    steps: int = 50
    n_samples: int = 512
    seed: int = 0
    superclass_source: MixtureKey = SUPERCLASS
    schedule: ScheduleParams | None = None
    name: str = ""

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("at least one axis is required", "axes")
        for axis, values in self.axes.items():
            if not isinstance(values, (list, tuple)) or len(values) == 0:
                raise ConfigError("axis value lists must be non-empty", f"axes.{axis}")
        names = set(self.axes) | set(self.fixed)
        for target, rule in self.derived.items():
            if rule.minus not in names:
                raise ConfigError(f"references undeclared parameter {rule.minus!r}", f"derived.{target}")
            if target in names:
                raise ConfigError("is already an axis or fixed parameter", f"derived.{target}")

    def schedule_params(self) -> ScheduleParams:
        base = self.schedule or ScheduleParams()
        return ScheduleParams(base.base_len, base.beta_start, base.beta_end, self.steps)

    def points(self) -> list[dict[str, Any]]:
        """Grid points in enumeration order (last axis varies fastest)."""
        out = []
        for combo in itertools.product(*self.axes.values()):
            params = dict(self.fixed)
            params.update(zip(self.axes, combo))
            for target, rule in self.derived.items():
                params[target] = rule.total - params[rule.minus]
            out.append(params)
        return out

    def __len__(self) -> int:
        return int(np.prod([len(v) for v in self.axes.values()]))


@dataclass(frozen=True)
class SweepRecord:
    index: int
    strategy: Strategy
    metrics: MetricRecord
    n_samples: int
    steps: int
    seed: int
    calls_per_sample: float
    wall_ms: float

    @property
    def params(self) -> dict[str, Any]:
        return self.strategy.params()


def point_seed(master: int, k: int) -> int:
    """Seed of grid point ``k``: a substream of the master seed."""
    return int(np.random.SeedSequence([int(master), int(k)]).generate_state(1)[0])


def _thread_count(requested: int | None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"must be an integer, got {cap!r}", THREADS_ENV) from None
    return n


def build_strategies(grid: SweepGrid) -> list[Strategy]:
    """Instantiate and validate every point up front."""
    scenario = resolve_scenario(grid.scenario)
    strategies = []
    for k, params in enumerate(grid.points()):
        try:
            s = make_strategy(grid.strategy, params, grid.superclass_source)
            s.validate(grid.steps)
            s.check_scenario(scenario)
        except ConfigError as exc:
            raise ConfigError(f"grid point {k} {params}: {exc}") from None
        strategies.append(s)
    return strategies


def run_sweep(grid: SweepGrid, threads: int | None = None) -> list[SweepRecord]:
    """Run every grid point; records come back in enumeration order."""
    scenario = resolve_scenario(grid.scenario)
    strategies = build_strategies(grid)
    sched = grid.schedule_params()
    sched.build()

    def run_point(k: int) -> SweepRecord:
        seed = point_seed(grid.seed, k)
        start = time.perf_counter()
        cfg = RunConfig(scenario, strategies[k], sched, grid.n_samples, seed)
        result = run_sampling(cfg)
        metrics = proxy_scores(result.finals, scenario)
        return SweepRecord(
            index=k,
            strategy=strategies[k],
            metrics=metrics,
            n_samples=grid.n_samples,
            steps=grid.steps,
            seed=seed,
            calls_per_sample=result.calls_per_sample,
            wall_ms=(time.perf_counter() - start) * 1e3,
        )

    workers = min(_thread_count(threads), len(strategies))
    if workers <= 1:
        return [run_point(k) for k in range(len(strategies))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_point, range(len(strategies))))


# --- grid documents --------------------------------------------------------

_GRID_KEYS = {
    "version", "name", "strategy", "axes", "fixed", "derived", "scenario",
    "steps", "n_samples", "seed", "superclass_source", "schedule",
}
_GRID_REQUIRED = {"version", "strategy", "axes"}
_SCHEDULE_KEYS = {"base_len", "beta_start", "beta_end"}


def grid_from_dict(doc: dict) -> SweepGrid:
    if not isinstance(doc, dict):
        raise ConfigError("grid document must be an object")
    unknown = set(doc) - _GRID_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    missing = _GRID_REQUIRED - set(doc)
    if missing:
        raise ConfigError(f"missing keys {sorted(missing)}")
    if doc["version"] != GRID_VERSION:
        raise ConfigError(f"unsupported version {doc['version']!r}", "version")
    if not isinstance(doc["axes"], dict):
        raise ConfigError("must be an object of name -> list", "axes")

    derived = {}
    for target, rule in doc.get("derived", {}).items():
        if not isinstance(rule, dict) or set(rule) != {"total", "minus"}:
            raise ConfigError('needs exactly {"total", "minus"}', f"derived.{target}")
        derived[target] = DerivedParam(float(rule["total"]), rule["minus"])

    schedule = None
    if "schedule" in doc:
        sched = doc["schedule"]
        if not isinstance(sched, dict) or not set(sched) <= _SCHEDULE_KEYS:
            raise ConfigError(f"allowed keys are {sorted(_SCHEDULE_KEYS)}", "schedule")
        schedule = ScheduleParams(**sched)

    kwargs = {k: doc[k] for k in ("name", "scenario", "steps", "n_samples", "seed") if k in doc}
    if "superclass_source" in doc:
        kwargs["superclass_source"] = parse_mixture_id(doc["superclass_source"])
    return SweepGrid(
        strategy=doc["strategy"],
        axes={k: list(v) if isinstance(v, list) else v for k, v in doc["axes"].items()},
        fixed=dict(doc.get("fixed", {})),
        derived=derived,
        schedule=schedule,
        **kwargs,
    )


def grid_to_dict(grid: SweepGrid) -> dict:
    doc = {
        "version": GRID_VERSION,
        "name": grid.name,
        "strategy": grid.strategy,
        "axes": grid.axes,
        "fixed": grid.fixed,
        "derived": {k: {"total": r.total, "minus": r.minus} for k, r in grid.derived.items()},
        "scenario": grid.scenario,
        "steps": grid.steps,
        "n_samples": grid.n_samples,
        "seed": grid.seed,
        "superclass_source": mixture_id(*grid.superclass_source),
    }
    if grid.schedule is not None:
        s = grid.schedule
        doc["schedule"] = {"base_len": s.base_len, "beta_start": s.beta_start, "beta_end": s.beta_end}
    return doc


def load_grid(path) -> SweepGrid:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return grid_from_dict(doc)


# --- presets ---------------------------------------------------------------

GUIDANCE_TOTAL = 7.0
MIXED_OMEGA_S = [k * 0.875 for k in range(9)]
SWITCHING_T_SW = [1, 3, 5, 7, 10, 20, 30, 40]
MULTISTAGE_T_SW = [3, 10, 20]
MULTISTAGE_OMEGA_S = [1.0, 3.0, 5.0]
MASKED_Q = [0.3, 0.5, 0.7, 0.9]
PROFUSION_R = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.7, 1.0]


def preset_grids() -> dict[str, SweepGrid]:
    """Named sweeps mirroring the published evaluation grids."""
    minus_s = {"omega_c": DerivedParam(GUIDANCE_TOTAL, "omega_s")}
    return {
        "mixed-7": SweepGrid("mixed", {"omega_s": MIXED_OMEGA_S}, derived=minus_s, name="mixed-7"),
        "switching-8": SweepGrid(
            "switching", {"t_sw": SWITCHING_T_SW}, fixed={"omega_c": GUIDANCE_TOTAL}, name="switching-8"
        ),
        "multistage-3x3": SweepGrid(
            "multistage",
            {"t_sw": MULTISTAGE_T_SW, "omega_s": MULTISTAGE_OMEGA_S},
            derived=minus_s,
            name="multistage-3x3",
        ),
        "masked-4": SweepGrid(
            "masked",
            {"q": MASKED_Q},
            fixed={"omega_c": 3.5, "omega_s": 3.5, "t_sw": 3},
            name="masked-4",
        ),
        "profusion-9": SweepGrid(
            "profusion", {"r": PROFUSION_R}, fixed={"omega_c": 3.5, "omega_s": 3.5}, name="profusion-9"
        ),
    }


def preset_grid(name: str) -> SweepGrid:
    presets = preset_grids()
    try:
        return presets[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(presets)}", "preset") from None
