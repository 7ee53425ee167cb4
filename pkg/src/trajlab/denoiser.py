"""Closed-form noise prediction for Gaussian-mixture scenarios.

For data ``p_0 = sum_k w_k N(mu_k, diag v_k)`` the forward marginal at base
timestep ``t`` is again a mixture, and the ideal noise predictor is
``eps(z) = -sigma_t * grad log p_t(z)``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.special import softmax

from .errors import ContractError
from .scenario import Condition, GaussianMixture, ModelVariant, Scenario, component_log_terms, log_density
from .schedule import NoiseSchedule


@dataclass
class CallCounter:
    """Denoiser evaluations per (variant, condition); one per latent evaluated."""

    counts: Counter = field(default_factory=Counter)

    def add(self, variant: ModelVariant, cond: Condition, k: int = 1) -> None:
        if k < 0:
            raise ContractError("counters never decrease")
        self.counts[(ModelVariant(variant), Condition(cond))] += k

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def merge(self, other: CallCounter) -> CallCounter:
        return CallCounter(self.counts + other.counts)

    def as_dict(self) -> dict[str, int]:
        return {f"{v.value}.{c.value}": n for (v, c), n in sorted(self.counts.items())}


class Denoiser(Protocol):
    def predict(
        self,
        z: np.ndarray,
        t: int,
        variant: ModelVariant,
        cond: Condition,
        counter: CallCounter | None = None,
    ) -> np.ndarray:
        """Noise prediction for a batch ``z`` of shape (n, *latent_shape)."""
        ...


def _marginal(scenario: Scenario, schedule: NoiseSchedule, t: int, variant, cond) -> GaussianMixture:
    return scenario.mixture(variant, cond).marginal(schedule.alpha(t), schedule.sigma(t))


def _responsibilities(m: GaussianMixture, pts: np.ndarray) -> np.ndarray:
    """Posterior component weights, shape (n, K, 1) or (n, K, D) if factorized."""
    terms = component_log_terms(m, pts)
    with np.errstate(divide="ignore"):
        log_w = np.log(m.weights)[None, :, None]
    if m.factorized:
        return softmax(terms + log_w, axis=1)
    return softmax(terms.sum(axis=2, keepdims=True) + log_w, axis=1)


def mixture_score(m: GaussianMixture, pts: np.ndarray) -> np.ndarray:
    """``grad log m`` at each row of ``pts`` (n, D)."""
    resp = _responsibilities(m, pts)
    return np.sum(resp * (m.means[None] - pts[:, None, :]) / m.variances[None], axis=1)


@dataclass(frozen=True)
class AnalyticDenoiser:
    scenario: Scenario
    schedule: NoiseSchedule

    def predict(self, z, t, variant, cond, counter=None):
        z = np.asarray(z, dtype=np.float64)
        if z.shape[1:] != self.scenario.latent_shape:
            raise ContractError(
                f"latent batch shape {z.shape[1:]} != scenario shape {self.scenario.latent_shape}"
            )
        m = _marginal(self.scenario, self.schedule, t, variant, cond)
        pts = z.reshape(len(z), -1)
        eps = -self.schedule.sigma(t) * mixture_score(m, pts)
        if counter is not None:
            counter.add(variant, cond, len(z))
        return eps.reshape(z.shape)


def analytic_eps(scenario, schedule, z, t, variant, cond, counter=None) -> np.ndarray:
    """Single-latent convenience wrapper around :class:`AnalyticDenoiser`."""
    z = np.asarray(z, dtype=np.float64)
    return AnalyticDenoiser(scenario, schedule).predict(z[None], t, variant, cond, counter)[0]


def fd_score_oracle(scenario, schedule, z, t, variant, cond, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of ``log p_t`` at ``z``; independent of the analytic path."""
    if not h > 0:
        raise ContractError(f"step size must be positive, got {h}")
    z = np.asarray(z, dtype=np.float64)
    m = _marginal(scenario, schedule, t, variant, cond)
    flat = z.reshape(-1)
    d = flat.size
    shifts = np.eye(d) * h
    plus = log_density(m, flat[None] + shifts)
    minus = log_density(m, flat[None] - shifts)
    return ((plus - minus) / (2.0 * h)).reshape(z.shape)


def responsibility_map(scenario, schedule, z, t, variant, cond) -> np.ndarray:
    """Posterior component probabilities of ``p_t`` at ``z``.

    Shape (K,) for joint mixtures, (K, *latent_shape) for factorized grids.
    """
    z = np.asarray(z, dtype=np.float64)
    m = _marginal(scenario, schedule, t, variant, cond)
    resp = _responsibilities(m, z.reshape(1, -1))[0]
    if m.factorized:
        return resp.reshape((m.n_components,) + z.shape)
    return resp[:, 0]
