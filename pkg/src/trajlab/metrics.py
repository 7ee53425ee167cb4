"""Likelihood proxies for concept fidelity and context alignment, plus Pareto fronts.

The proxies are mean per-sample log-likelihoods under the scenario's reference
mixtures.  They stand in for image/text similarity scores only in the sense
that larger is better on each axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ContractError
from .scenario import Scenario, log_density


@dataclass(frozen=True)
class MetricRecord:
    fidelity_mean: float
    fidelity_std: float
    context_mean: float
    context_std: float
    n: int


def _std(v: np.ndarray) -> float:
    # shifting by one sample keeps identical values at exactly zero spread
    return float((v - v[0]).std())


def proxy_scores(finals: np.ndarray, scenario: Scenario) -> MetricRecord:
    finals = np.asarray(finals, dtype=np.float64)
    if finals.ndim == 0 or len(finals) == 0:
        raise ContractError("need at least one sample")
    pts = finals.reshape(len(finals), -1)
    if pts.shape[1] != scenario.size:
        raise ContractError(f"sample dimension {pts.shape[1]} != latent size {scenario.size}")
    fid = log_density(scenario.mixture(*scenario.fidelity_ref), pts)
    ctx = log_density(scenario.mixture(*scenario.context_ref), pts)
    return MetricRecord(
        fidelity_mean=float(fid.mean()),
        fidelity_std=_std(fid),
        context_mean=float(ctx.mean()),
        context_std=_std(ctx),
        n=len(pts),
    )


@dataclass(frozen=True)
class ParetoPoint:
    x: float
    y: float
    tags: dict[str, Any] = field(default_factory=dict, compare=False)
    record: Any = field(default=None, compare=False)


def pareto_mask(x, y) -> np.ndarray:
    """Boolean mask of points not strictly dominated when maximizing both axes.

    Exact duplicates of a front point are all kept.  O(n log n).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = np.zeros(len(x), dtype=bool)
    order = np.lexsort((-y, -x))  # x descending, then y descending
    best_y = -np.inf  # best y among strictly larger x
    pos = 0
    while pos < len(order):
        end = pos
        while end < len(order) and x[order[end]] == x[order[pos]]:
            end += 1
        group = order[pos:end]
        top = y[group[0]]
        if top > best_y:
            keep[group[y[group] == top]] = True
        best_y = max(best_y, top)
        pos = end
    return keep


def pareto_front(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset sorted by x (then y) ascending."""
    if not points:
        raise ContractError("pareto_front needs at least one point")
    keep = pareto_mask([p.x for p in points], [p.y for p in points])
    front = [p for p, k in zip(points, keep) if k]
    return sorted(front, key=lambda p: (p.x, p.y))
