"""Sampling strategies that mix concept and superclass diffusion trajectories."""

from .denoiser import AnalyticDenoiser, CallCounter, analytic_eps, fd_score_oracle, responsibility_map
from .errors import ConfigError, ContractError, NumericError, TrajlabError
from .guidance import (
    Base,
    Masked,
    Mixed,
    MultiStage,
    ProFusion,
    Superclass,
    Switching,
    make_strategy,
)
from .metrics import MetricRecord, ParetoPoint, pareto_front, proxy_scores
from .sampler import RunConfig, RunResult, ScheduleParams, run_sampling
from .scenario import Condition, GaussianMixture, ModelVariant, Scenario, builtin_scenario, load_scenario
from .schedule import NoiseSchedule, build_schedule, ddim_step, forward_noise
from .sweep import SweepGrid, preset_grid, preset_grids, run_sweep

__all__ = [
    "AnalyticDenoiser", "CallCounter", "analytic_eps", "fd_score_oracle", "responsibility_map",
    "ConfigError", "ContractError", "NumericError", "TrajlabError",
    "Base", "Masked", "Mixed", "MultiStage", "ProFusion", "Superclass", "Switching", "make_strategy",
    "MetricRecord", "ParetoPoint", "pareto_front", "proxy_scores",
    "RunConfig", "RunResult", "ScheduleParams", "run_sampling",
    "Condition", "GaussianMixture", "ModelVariant", "Scenario", "builtin_scenario", "load_scenario",
    "NoiseSchedule", "build_schedule", "ddim_step", "forward_noise",
    "SweepGrid", "preset_grid", "preset_grids", "run_sweep",
]
