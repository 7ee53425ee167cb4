"""Toy generative worlds: Gaussian mixtures per (model variant, condition)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, ContractError

SCENARIO_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


class ModelVariant(str, Enum):
    TUNED = "tuned"
    ORIG = "orig"


class Condition(str, Enum):
    NULL = "null"
    CONCEPT = "concept"
    SUPERCLASS = "superclass"
    CONTEXT_ONLY = "context_only"


MixtureKey = tuple[ModelVariant, Condition]
REQUIRED_KEYS: tuple[MixtureKey, ...] = (
    (ModelVariant.TUNED, Condition.NULL),
    (ModelVariant.TUNED, Condition.CONCEPT),
    (ModelVariant.TUNED, Condition.SUPERCLASS),
)


def mixture_id(variant: ModelVariant, cond: Condition) -> str:
    return f"{variant.value}.{cond.value}"


def parse_mixture_id(text: str) -> MixtureKey:
    try:
        variant, cond = text.split(".", 1)
        return ModelVariant(variant), Condition(cond)
    except ValueError:
        raise ConfigError(f"not a mixture id: {text!r}") from None


@dataclass(frozen=True)
class GaussianMixture:
    """Diagonal-covariance mixture.

    With ``factorized=True`` each of the D coordinates is an independent 1-D
    mixture sharing ``weights``, i.e. ``prod_d sum_k w_k N(x_d; mu_kd, v_kd)``.
    Grid scenarios use this form.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    factorized: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if w.ndim != 1 or len(w) == 0:
            raise ConfigError("weights must be a non-empty vector")
        if mu.shape != (len(w), mu.shape[1]) or var.shape != mu.shape:
            raise ConfigError(
                f"means {mu.shape} and variances {var.shape} must both be K x D with K={len(w)}"
            )
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights must sum to 1 (got {w.sum()!r})")
        if not np.all(var > 0) or not np.all(np.isfinite(var)):
            raise ConfigError("variances must be positive")
        if not np.all(np.isfinite(mu)):
            raise ConfigError("means must be finite")
        for name, arr in (("weights", w), ("means", mu), ("variances", var)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def marginal(self, alpha: float, sigma: float) -> GaussianMixture:
        """Forward-process marginal ``sum_k w_k N(alpha mu_k, alpha^2 v_k + sigma^2)``."""
        return GaussianMixture(
            self.weights,
            alpha * self.means,
            alpha**2 * self.variances + sigma**2,
            self.factorized,
        )


def component_log_terms(m: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Per-coordinate ``log N(x_d; mu_kd, v_kd)`` with shape (n, K, D)."""
    diff = x[:, None, :] - m.means[None]
    return -0.5 * (diff**2 / m.variances + np.log(m.variances) + LOG_2PI)


def _as_points(m: GaussianMixture, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None] if single else x.reshape(x.shape[0], -1)
    if pts.shape[1] != m.dim:
        raise ContractError(f"point dimension {pts.shape[1]} != mixture dimension {m.dim}")
    return pts, single


def log_density(m: GaussianMixture, x):
    """Mixture log-density at one point (D,) or a batch (n, ...) of points."""
    pts, single = _as_points(m, x)
    terms = component_log_terms(m, pts)
    with np.errstate(divide="ignore"):
        log_w = np.log(m.weights)
        if m.factorized:
            out = logsumexp(terms + log_w[None, :, None], axis=1).sum(axis=1)
        else:
            out = logsumexp(terms.sum(axis=2) + log_w[None, :], axis=1)
    return float(out[0]) if single else out


def sample_mixture(m: GaussianMixture, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws, shape (n, D)."""
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if m.factorized:
        comp = rng.choice(m.n_components, size=(n, m.dim), p=m.weights)
        cols = np.arange(m.dim)[None, :]
        mu, var = m.means[comp, cols], m.variances[comp, cols]
    else:
        comp = rng.choice(m.n_components, size=n, p=m.weights)
        mu, var = m.means[comp], m.variances[comp]
    return mu + np.sqrt(var) * rng.standard_normal((n, m.dim))


@dataclass(frozen=True)
class Scenario:
    name: str
    version: int
    latent_shape: tuple[int, ...]
    mixtures: Mapping[MixtureKey, GaussianMixture]
    fidelity_ref: MixtureKey
    context_ref: MixtureKey
    concept_region: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "mixtures", MappingProxyType(dict(self.mixtures)))
        if self.concept_region is not None:
            self.concept_region.setflags(write=False)

    @property
    def is_grid(self) -> bool:
        return len(self.latent_shape) == 2

    @property
    def size(self) -> int:
        return math.prod(self.latent_shape)

    def mixture(self, variant: ModelVariant, cond: Condition) -> GaussianMixture:
        try:
            return self.mixtures[(ModelVariant(variant), Condition(cond))]
        except KeyError:
            raise ConfigError(
                f"scenario {self.name!r} defines no mixture {mixture_id(variant, cond)!r}"
            ) from None

    def has(self, variant: ModelVariant, cond: Condition) -> bool:
        return (variant, cond) in self.mixtures


_TOP_KEYS = {"name", "version", "latent_shape", "mixtures", "fidelity_ref", "context_ref", "concept_region"}
_REQUIRED_TOP = _TOP_KEYS - {"concept_region"}
_MIXTURE_KEYS = {"weights", "means", "variances"}


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate a parsed scenario document (strict keys)."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    missing = _REQUIRED_TOP - set(doc)
    if missing:
        raise ConfigError(f"missing keys {sorted(missing)}")
    if doc["version"] != SCENARIO_VERSION:
        raise ConfigError(f"unsupported version {doc['version']!r}", "version")

    shape = doc["latent_shape"]
    if isinstance(shape, int):
        shape = [shape]
    if (
        not isinstance(shape, list)
        or len(shape) not in (1, 2)
        or not all(isinstance(s, int) and s >= 1 for s in shape)
    ):
        raise ConfigError("must be a positive int D or [D] or [H, W]", "latent_shape")
    shape = tuple(shape)
    size = math.prod(shape)
    grid = len(shape) == 2

    if not isinstance(doc["mixtures"], dict):
        raise ConfigError("must be an object", "mixtures")
    mixtures: dict[MixtureKey, GaussianMixture] = {}
    for key, entry in doc["mixtures"].items():
        mkey = parse_mixture_id(key)
        if not isinstance(entry, dict) or set(entry) != _MIXTURE_KEYS:
            raise ConfigError(f"needs exactly the keys {sorted(_MIXTURE_KEYS)}", f"mixtures.{key}")
        try:
            m = GaussianMixture(entry["weights"], entry["means"], entry["variances"], factorized=grid)
        except (ConfigError, ValueError) as exc:
            raise ConfigError(str(exc), f"mixtures.{key}") from None
        if m.dim != size:
            raise ConfigError(f"dimension {m.dim} != latent size {size}", f"mixtures.{key}")
        mixtures[mkey] = m
    for req in REQUIRED_KEYS:
        if req not in mixtures:
            raise ConfigError(f"required mixture {mixture_id(*req)!r} is missing", "mixtures")

    refs = {}
    for ref in ("fidelity_ref", "context_ref"):
        key = parse_mixture_id(doc[ref])
        if key not in mixtures:
            raise ConfigError(f"names undefined mixture {doc[ref]!r}", ref)
        refs[ref] = key

    region = doc.get("concept_region")
    if region is not None:
        if not grid:
            raise ConfigError("only valid for grid scenarios", "concept_region")
        region = np.asarray(region, dtype=np.float64)
        if region.size != size or not np.all((region == 0) | (region == 1)):
            raise ConfigError(f"must be a 0/1 array with {size} entries", "concept_region")
        region = region.reshape(shape)

    return Scenario(
        name=str(doc["name"]),
        version=doc["version"],
        latent_shape=shape,
        mixtures=mixtures,
        fidelity_ref=refs["fidelity_ref"],
        context_ref=refs["context_ref"],
        concept_region=region,
    )


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; parse errors report the line."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def builtin_scenarios() -> list[str]:
    files = resources.files("trajlab") / "fixtures"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def builtin_scenario(name: str) -> Scenario:
    res = resources.files("trajlab") / "fixtures" / f"{name}.json"
    if not res.is_file():
        raise ConfigError(f"unknown builtin scenario {name!r} (have {builtin_scenarios()})")
    with resources.as_file(res) as p:
        return load_scenario(p)


def resolve_scenario(ref) -> Scenario:
    """Accept a Scenario, a builtin fixture name, or a file path."""
    if isinstance(ref, Scenario):
        return ref
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        return load_scenario(p)
    return builtin_scenario(str(ref))
