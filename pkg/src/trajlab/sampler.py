"""Full denoising loop from ``z_T ~ N(0, I)`` down to ``z_0``."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .denoiser import AnalyticDenoiser, CallCounter, Denoiser
from .errors import ConfigError, NumericError
from .guidance import ProFusion, StepContext, Strategy, guided_eps, profusion_step
from .scenario import Scenario, resolve_scenario
from .schedule import (
    DEFAULT_BASE_LEN,
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    DEFAULT_STEPS,
    NoiseSchedule,
    build_schedule,
    ddim_step,
)


@dataclass(frozen=True)
class ScheduleParams:
    base_len: int = DEFAULT_BASE_LEN
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    steps: int = DEFAULT_STEPS

    def build(self) -> NoiseSchedule:
        return build_schedule(self.base_len, self.beta_start, self.beta_end, self.steps)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario | str
    strategy: Strategy
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    n_samples: int = 1
    seed: int = 0
    record_trajectory: bool = False


@dataclass
class RunResult:
    finals: np.ndarray
    calls: CallCounter
    seed: int
    wall_time: float
    trajectories: np.ndarray | None = None

    @property
    def calls_per_sample(self) -> float:
        return self.calls.total / len(self.finals)


def sample_rng(seed: int, j: int) -> np.random.Generator:
    """Independent stream for sample ``j``; unaffected by the batch size."""
    return np.random.default_rng([int(seed), int(j)])


def initial_noise(shape: tuple[int, ...], n: int, seed: int, extra_draws: int = 0):
    """Per-sample ``z_T`` plus optionally ``extra_draws`` further noise tensors each.

    Returns ``(z_T, extra)`` with shapes (n, *shape) and (extra_draws, n, *shape).
    """
    z = np.empty((n,) + shape)
    extra = np.empty((extra_draws, n) + shape)
    for j in range(n):
        rng = sample_rng(seed, j)
        z[j] = rng.standard_normal(shape)
        if extra_draws:
            extra[:, j] = rng.standard_normal((extra_draws,) + shape)
    return z, extra


def run_sampling(cfg: RunConfig, denoiser: Denoiser | None = None) -> RunResult:
    """Run every sample of ``cfg`` through the strategy's per-step rule.

    Configuration problems raise :class:`ConfigError` before any sampling.
    """
    if not isinstance(cfg.n_samples, (int, np.integer)) or cfg.n_samples < 1:
        raise ConfigError(f"must be >= 1, got {cfg.n_samples!r}", "n_samples")
    scenario = resolve_scenario(cfg.scenario)
    schedule = cfg.schedule.build()
    strategy = cfg.strategy
    strategy.validate(schedule.steps)
    strategy.check_scenario(scenario)
    if denoiser is None:
        denoiser = AnalyticDenoiser(scenario, schedule)

    start = time.perf_counter()
    counter = CallCounter()
    ctx = StepContext(schedule, denoiser, scenario, counter)
    steps = schedule.steps
    fusion = isinstance(strategy, ProFusion)
    z, fusion_noise = initial_noise(scenario.latent_shape, cfg.n_samples, cfg.seed, steps if fusion else 0)

    traj = [z] if cfg.record_trajectory else None
    for i in range(steps, 0, -1):
        if fusion:
            z = profusion_step(strategy, i, z, ctx, fusion_noise[steps - i])
        else:
            z = ddim_step(schedule, i, z, guided_eps(strategy, i, z, ctx))
        if not np.all(np.isfinite(z)):
            raise NumericError("non-finite latent", step=i)
        if traj is not None:
            traj.append(z)

    return RunResult(
        finals=z,
        calls=counter,
        seed=cfg.seed,
        wall_time=time.perf_counter() - start,
        trajectories=np.stack(traj) if traj is not None else None,
    )
