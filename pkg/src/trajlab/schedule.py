"""Variance-preserving noise schedule and the two primitive latent moves.

Time indexing: inference index ``i`` runs ``S, S-1, ..., 1`` and maps to the
base timestep ``infer_steps[i - 1]``.  Index ``i = 0`` is the clean endpoint
with ``alpha = 1`` and ``sigma = 0``, so ``ddim_step(i=1)`` lands on ``z_0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

DEFAULT_BASE_LEN = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_STEPS = 50


@dataclass(frozen=True)
class NoiseSchedule:
    base_len: int
    alpha_bar: np.ndarray
    infer_steps: np.ndarray

    def __post_init__(self):
        self.alpha_bar.setflags(write=False)
        self.infer_steps.setflags(write=False)

    @property
    def steps(self) -> int:
        return len(self.infer_steps)

    def alpha(self, t: int) -> float:
        """Signal coefficient at base timestep ``t``."""
        return float(np.sqrt(self.alpha_bar[t]))

    def sigma(self, t: int) -> float:
        """Noise coefficient at base timestep ``t``."""
        return float(np.sqrt(1.0 - self.alpha_bar[t]))

    def timestep(self, i: int) -> int:
        """Base timestep for inference index ``i`` (1-based)."""
        if not 1 <= i <= self.steps:
            raise ContractError(f"inference index {i} outside 1..{self.steps}")
        return int(self.infer_steps[i - 1])

    def alpha_at(self, i: int) -> float:
        return 1.0 if i == 0 else self.alpha(self.timestep(i))

    def sigma_at(self, i: int) -> float:
        return 0.0 if i == 0 else self.sigma(self.timestep(i))


def build_schedule(
    base_len: int = DEFAULT_BASE_LEN,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
    steps: int = DEFAULT_STEPS,
) -> NoiseSchedule:
    """Linear-beta schedule with ``steps`` evenly strided inference timesteps.

    The inference grid is ``floor(k * base_len / steps) - 1`` for
    ``k = 1..steps``; it always ends at ``base_len - 1``.
    """
    if not isinstance(base_len, (int, np.integer)) or base_len < 1:
        raise ConfigError(f"must be a positive integer, got {base_len!r}", "base_len")
    if not isinstance(steps, (int, np.integer)) or steps < 1:
        raise ConfigError(f"must be a positive integer, got {steps!r}", "steps")
    if steps > base_len:
        raise ConfigError(f"{steps} exceeds base_len={base_len}", "steps")
    if not 0.0 < beta_start < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {beta_start!r}", "beta_start")
    if not beta_start <= beta_end < 1.0:
        raise ConfigError(f"must lie in [beta_start, 1), got {beta_end!r}", "beta_end")

    if base_len == 1:
        betas = np.array([beta_start], dtype=np.float64)
    else:
        idx = np.arange(base_len, dtype=np.float64)
        betas = beta_start + (beta_end - beta_start) * idx / (base_len - 1)
    alpha_bar = np.cumprod(1.0 - betas)
    k = np.arange(1, steps + 1, dtype=np.int64)
    infer_steps = (k * base_len) // steps - 1
    return NoiseSchedule(int(base_len), alpha_bar, infer_steps)


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ContractError(f"{what} shape {b.shape} does not match latent shape {a.shape}")


def ddim_step(schedule: NoiseSchedule, i: int, z: np.ndarray, eps_hat: np.ndarray) -> np.ndarray:
    """Deterministic (eta = 0) DDIM move from ``tau_i`` to ``tau_{i-1}``."""
    if i < 1:
        raise ContractError(f"ddim_step needs i >= 1, got {i}")
    z = np.asarray(z, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    _check_shapes(z, eps_hat, "eps_hat")
    a_t, s_t = schedule.alpha_at(i), schedule.sigma_at(i)
    a_prev, s_prev = schedule.alpha_at(i - 1), schedule.sigma_at(i - 1)
    x0_hat = (z - s_t * eps_hat) / a_t
    return a_prev * x0_hat + s_prev * eps_hat


def forward_noise(schedule: NoiseSchedule, i: int, z_prev: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Re-noise a latent from ``tau_{i-1}`` back up to ``tau_i``."""
    if i < 1:
        raise ContractError(f"forward_noise needs i >= 1, got {i}")
    z_prev = np.asarray(z_prev, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_shapes(z_prev, eps, "eps")
    ratio = schedule.alpha_at(i) / schedule.alpha_at(i - 1)
    radicand = schedule.sigma_at(i) ** 2 - ratio**2 * schedule.sigma_at(i - 1) ** 2
    if radicand < -1e-12:
        raise AssertionError(f"negative forward-noise variance {radicand} at i={i}")
    return ratio * z_prev + np.sqrt(max(radicand, 0.0)) * eps
