"""Per-step noise combination rules for concept/superclass trajectory mixing.

Every combinator works on whole batches; arrays are (n, *latent_shape) or
any matching shapes.  Guidance deltas are always formed as
``eps_cond - eps_uncond`` so reductions between strategies are bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar

import numpy as np

from .denoiser import CallCounter, Denoiser
from .errors import ConfigError, ContractError
from .scenario import Condition, ModelVariant, MixtureKey, Scenario
from .schedule import NoiseSchedule, ddim_step, forward_noise

UNCOND: MixtureKey = (ModelVariant.TUNED, Condition.NULL)
CONCEPT: MixtureKey = (ModelVariant.TUNED, Condition.CONCEPT)
SUPERCLASS: MixtureKey = (ModelVariant.TUNED, Condition.SUPERCLASS)

PROVIDERS = ("divergence", "region")


def _check_scale(value: float, name: str) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
        raise ConfigError(f"must be a finite scale >= 0, got {value!r}", name)


def _check_t_sw(t_sw: int, steps: int | None) -> None:
    if not isinstance(t_sw, (int, np.integer)) or t_sw < 0:
        raise ConfigError(f"must be a non-negative integer, got {t_sw!r}", "t_sw")
    if steps is not None and t_sw > steps:
        raise ConfigError(f"{t_sw} exceeds the number of steps {steps}", "t_sw")


def _check_unit(value: float, name: str) -> None:
    if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
        raise ConfigError(f"must lie in [0, 1], got {value!r}", name)


@dataclass(frozen=True)
class Strategy:
    """Common base; ``superclass_source`` picks the trajectory standing in for
    the superclass prompt (e.g. original weights or a category-free prompt)."""

    kind: ClassVar[str] = ""
    calls_per_step: ClassVar[int] = 0
    superclass_source: MixtureKey = field(default=SUPERCLASS, kw_only=True)

    def __post_init__(self):
        v, c = self.superclass_source
        object.__setattr__(self, "superclass_source", (ModelVariant(v), Condition(c)))
        self.validate()

    def validate(self, steps: int | None = None) -> None:
        pass

    def check_scenario(self, scenario: Scenario) -> None:
        for key in self.required_mixtures():
            scenario.mixture(*key)

    def required_mixtures(self) -> tuple[MixtureKey, ...]:
        return (UNCOND, CONCEPT, self.superclass_source)

    def params(self) -> dict[str, float | int | str]:
        """Hyperparameters in CSV column vocabulary."""
        return {}


@dataclass(frozen=True)
class Base(Strategy):
    omega: float
    kind: ClassVar[str] = "base"
    calls_per_step: ClassVar[int] = 2

    def validate(self, steps=None):
        _check_scale(self.omega, "omega")

    def required_mixtures(self):
        return (UNCOND, CONCEPT)

    def params(self):
        return {"omega_c": self.omega}


@dataclass(frozen=True)
class Superclass(Strategy):
    omega: float
    kind: ClassVar[str] = "superclass"
    calls_per_step: ClassVar[int] = 2

    def validate(self, steps=None):
        _check_scale(self.omega, "omega")

    def required_mixtures(self):
        return (UNCOND, self.superclass_source)

    def params(self):
        return {"omega_s": self.omega}


@dataclass(frozen=True)
class Mixed(Strategy):
    omega_c: float
    omega_s: float
    kind: ClassVar[str] = "mixed"
    calls_per_step: ClassVar[int] = 3

    def validate(self, steps=None):
        _check_scale(self.omega_c, "omega_c")
        _check_scale(self.omega_s, "omega_s")

    def params(self):
        return {"omega_c": self.omega_c, "omega_s": self.omega_s}


@dataclass(frozen=True)
class Switching(Strategy):
    omega: float
    t_sw: int
    kind: ClassVar[str] = "switching"
    calls_per_step: ClassVar[int] = 2

    def validate(self, steps=None):
        _check_scale(self.omega, "omega")
        _check_t_sw(self.t_sw, steps)

    def params(self):
        return {"omega_c": self.omega, "t_sw": self.t_sw}


@dataclass(frozen=True)
class MultiStage(Strategy):
    omega_c: float
    omega_s: float
    t_sw: int
    kind: ClassVar[str] = "multistage"
    calls_per_step: ClassVar[int] = 3

    def validate(self, steps=None):
        _check_scale(self.omega_c, "omega_c")
        _check_scale(self.omega_s, "omega_s")
        _check_t_sw(self.t_sw, steps)

    def params(self):
        return {"omega_c": self.omega_c, "omega_s": self.omega_s, "t_sw": self.t_sw}


@dataclass(frozen=True)
class Masked(Strategy):
    """Warm up with Mixed(omega_c0, omega_s0) for ``t_sw`` steps, then mask.

    Unset warm-up scales default to the main scales.
    """

    omega_c: float
    omega_s: float
    t_sw: int
    q: float
    omega_c0: float | None = None
    omega_s0: float | None = None
    provider: str = "divergence"
    basic: bool = False
    kind: ClassVar[str] = "masked"
    calls_per_step: ClassVar[int] = 3

    def __post_init__(self):
        if self.omega_c0 is None:
            object.__setattr__(self, "omega_c0", self.omega_c)
        if self.omega_s0 is None:
            object.__setattr__(self, "omega_s0", self.omega_s)
        super().__post_init__()

    def validate(self, steps=None):
        for name in ("omega_c", "omega_s", "omega_c0", "omega_s0"):
            _check_scale(getattr(self, name), name)
        _check_t_sw(self.t_sw, steps)
        _check_unit(self.q, "q")
        if self.provider not in PROVIDERS:
            raise ConfigError(f"unknown mask provider {self.provider!r}; choose from {PROVIDERS}", "provider")
        if self.basic and self.omega_c != self.omega_s:
            raise ConfigError("basic masked guidance needs omega_c == omega_s", "basic")

    def check_scenario(self, scenario):
        super().check_scenario(scenario)
        if self.provider == "region" and scenario.concept_region is None:
            raise ConfigError(f"scenario {scenario.name!r} has no concept_region", "provider")

    def params(self):
        return {"omega_c": self.omega_c, "omega_s": self.omega_s, "t_sw": self.t_sw, "q": self.q}


@dataclass(frozen=True)
class ProFusion(Strategy):
    omega_c: float
    omega_s: float
    r: float
    kind: ClassVar[str] = "profusion"
    calls_per_step: ClassVar[int] = 5

    def validate(self, steps=None):
        _check_scale(self.omega_c, "omega_c")
        _check_scale(self.omega_s, "omega_s")
        _check_unit(self.r, "r")

    def params(self):
        return {"omega_c": self.omega_c, "omega_s": self.omega_s, "r": self.r}


STRATEGIES: dict[str, type[Strategy]] = {
    cls.kind: cls for cls in (Base, Superclass, Mixed, Switching, MultiStage, Masked, ProFusion)
}


# --- combinators -----------------------------------------------------------


def _same_shape(*arrays: np.ndarray) -> None:
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ContractError(f"shape mismatch: {np.shape(a)} vs {shape}")


def guidance_delta(eps_u: np.ndarray, eps_p: np.ndarray) -> np.ndarray:
    _same_shape(eps_u, eps_p)
    return eps_p - eps_u


def cfg_combine(eps_u, eps_c, omega: float) -> np.ndarray:
    """Classifier-free guidance ``eps_u + omega * (eps_c - eps_u)``."""
    return eps_u + omega * guidance_delta(eps_u, eps_c)


def mixed_combine(eps_u, delta_c, delta_s, omega_c: float, omega_s: float) -> np.ndarray:
    _same_shape(eps_u, delta_c, delta_s)
    return eps_u + omega_s * delta_s + omega_c * delta_c


def in_first_stage(i: int, steps: int, t_sw: int) -> bool:
    """True for the first ``t_sw`` denoising steps (``i`` counts down from ``steps``)."""
    if not 1 <= i <= steps:
        raise ContractError(f"inference index {i} outside 1..{steps}")
    return i > steps - t_sw


def switching_combine(eps_u, delta_c, delta_s, omega, i, steps, t_sw) -> np.ndarray:
    _same_shape(eps_u, delta_c, delta_s)
    if in_first_stage(i, steps, t_sw):
        return eps_u + omega * delta_s
    return eps_u + omega * delta_c


def multistage_combine(eps_u, delta_c, delta_s, omega_c, omega_s, i, steps, t_sw) -> np.ndarray:
    _same_shape(eps_u, delta_c, delta_s)
    if in_first_stage(i, steps, t_sw):
        return eps_u + (omega_s + omega_c) * delta_s
    return mixed_combine(eps_u, delta_c, delta_s, omega_c, omega_s)


@dataclass(frozen=True)
class Mask:
    soft: np.ndarray
    binary: np.ndarray
    q: float

    @property
    def complement(self) -> np.ndarray:
        return 1.0 - self.binary


def soft_mask_divergence(delta_c, delta_s, batch: bool = False) -> np.ndarray:
    """``|delta_c - delta_s|`` scaled to [0, 1] by its maximum.

    With ``batch=True`` the leading axis indexes samples and each sample is
    normalized on its own.
    """
    _same_shape(delta_c, delta_s)
    diff = np.abs(np.asarray(delta_c) - np.asarray(delta_s))
    axes = tuple(range(1, diff.ndim)) if batch else None
    peak = np.max(diff, axis=axes, keepdims=True) if diff.size else np.zeros(())
    return np.divide(diff, peak, out=np.zeros_like(diff, dtype=np.float64), where=peak > 0)


def fixed_region_mask(scenario: Scenario) -> np.ndarray:
    if scenario.concept_region is None:
        raise ConfigError(f"scenario {scenario.name!r} has no concept_region", "concept_region")
    return np.array(scenario.concept_region, dtype=np.float64)


def binarize_mask(soft, q: float, batch: bool = False) -> Mask:
    """Keep elements at or above the ``floor(q * (n - 1))``-th smallest value.

    ``q = 0`` keeps everything; ``q = 1`` keeps only the maximum(s).
    """
    _check_unit(q, "q")
    soft = np.asarray(soft, dtype=np.float64)
    flat = soft.reshape(len(soft), -1) if batch else soft.reshape(1, -1)
    n = flat.shape[1]
    k = math.floor(q * (n - 1))
    threshold = np.sort(flat, axis=1)[:, k : k + 1]
    binary = (flat >= threshold).astype(np.float64).reshape(soft.shape)
    return Mask(soft, binary, q)


def masked_combine(eps_u, delta_c, delta_s, omega_c, omega_s, mask: Mask, basic: bool = False) -> np.ndarray:
    """Concept guidance inside the mask, superclass guidance outside.

    Each element takes exactly one branch; the inside branch of the full form
    is computed exactly as :func:`mixed_combine`.
    """
    _same_shape(eps_u, delta_c, delta_s, mask.binary)
    inside = mask.binary.astype(bool)
    if basic:
        if omega_c != omega_s:
            raise ConfigError("basic masked guidance needs omega_c == omega_s", "basic")
        return np.where(inside, eps_u + omega_c * delta_c, eps_u + omega_s * delta_s)
    return np.where(
        inside,
        mixed_combine(eps_u, delta_c, delta_s, omega_c, omega_s),
        eps_u + (omega_c + omega_s) * delta_s,
    )


# --- per-step orchestration ------------------------------------------------


@dataclass(frozen=True)
class StepContext:
    """Everything a per-step rule needs besides the latent."""

    schedule: NoiseSchedule
    denoiser: Denoiser
    scenario: Scenario
    counter: CallCounter | None = None

    def eps(self, z: np.ndarray, i: int, key: MixtureKey) -> np.ndarray:
        return self.denoiser.predict(z, self.schedule.timestep(i), key[0], key[1], self.counter)


def mask_soft_map(strategy: Masked, ctx: StepContext, delta_c, delta_s) -> np.ndarray:
    if strategy.provider == "region":
        region = fixed_region_mask(ctx.scenario)
        return np.broadcast_to(region, delta_c.shape)
    return soft_mask_divergence(delta_c, delta_s, batch=True)


def masked_full_step(strategy: Masked, i, steps, eps_u, delta_c, delta_s, ctx: StepContext) -> np.ndarray:
    """Mixed warm-up for the first ``t_sw`` steps, then quantile-masked guidance."""
    if in_first_stage(i, steps, strategy.t_sw):
        return mixed_combine(eps_u, delta_c, delta_s, strategy.omega_c0, strategy.omega_s0)
    soft = mask_soft_map(strategy, ctx, delta_c, delta_s)
    mask = binarize_mask(soft, strategy.q, batch=True)
    return masked_combine(eps_u, delta_c, delta_s, strategy.omega_c, strategy.omega_s, mask, strategy.basic)


def guided_eps(strategy: Strategy, i: int, z: np.ndarray, ctx: StepContext) -> np.ndarray:
    """Combined noise prediction for one non-ProFusion step."""
    steps = ctx.schedule.steps
    eps_u = ctx.eps(z, i, UNCOND)
    src = strategy.superclass_source

    if isinstance(strategy, Base):
        return cfg_combine(eps_u, ctx.eps(z, i, CONCEPT), strategy.omega)
    if isinstance(strategy, Superclass):
        return cfg_combine(eps_u, ctx.eps(z, i, src), strategy.omega)
    if isinstance(strategy, Switching):
        # only the active branch is evaluated, so cost matches Base
        if in_first_stage(i, steps, strategy.t_sw):
            return cfg_combine(eps_u, ctx.eps(z, i, src), strategy.omega)
        return cfg_combine(eps_u, ctx.eps(z, i, CONCEPT), strategy.omega)

    # remaining strategies batch all three predictions every step
    delta_c = guidance_delta(eps_u, ctx.eps(z, i, CONCEPT))
    delta_s = guidance_delta(eps_u, ctx.eps(z, i, src))
    if isinstance(strategy, Mixed):
        return mixed_combine(eps_u, delta_c, delta_s, strategy.omega_c, strategy.omega_s)
    if isinstance(strategy, MultiStage):
        return multistage_combine(
            eps_u, delta_c, delta_s, strategy.omega_c, strategy.omega_s, i, steps, strategy.t_sw
        )
    if isinstance(strategy, Masked):
        return masked_full_step(strategy, i, steps, eps_u, delta_c, delta_s, ctx)
    raise ContractError(f"no per-step rule for {type(strategy).__name__}")


def profusion_step(
    strategy: ProFusion,
    i: int,
    z: np.ndarray,
    ctx: StepContext,
    noise: np.ndarray | Callable[[], np.ndarray],
) -> np.ndarray:
    """Fusion step followed by a Mixed backward step.

    1. concept-guided DDIM step ``z -> z_prev`` at scale ``omega_c + omega_s``
    2. re-noise ``z_prev`` back to ``tau_i`` and blend: ``(1 - r) z + r z_renoised``
    3. Mixed-guided DDIM step from the blended latent

    ``noise`` is the fresh standard-normal draw for stage 2 (or a callable
    producing it).  At ``r = 0`` the blend is skipped so the result equals a
    plain Mixed step bit for bit.
    """
    schedule = ctx.schedule
    eps_u = ctx.eps(z, i, UNCOND)
    eps_c = ctx.eps(z, i, CONCEPT)
    z_prev = ddim_step(schedule, i, z, cfg_combine(eps_u, eps_c, strategy.omega_c + strategy.omega_s))
    fresh = noise() if callable(noise) else noise
    renoised = forward_noise(schedule, i, z_prev, fresh)
    z_fused = z if strategy.r == 0 else (1.0 - strategy.r) * z + strategy.r * renoised

    eps_u = ctx.eps(z_fused, i, UNCOND)
    delta_c = guidance_delta(eps_u, ctx.eps(z_fused, i, CONCEPT))
    delta_s = guidance_delta(eps_u, ctx.eps(z_fused, i, strategy.superclass_source))
    eps = mixed_combine(eps_u, delta_c, delta_s, strategy.omega_c, strategy.omega_s)
    return ddim_step(schedule, i, z_fused, eps)


# Column/flag names that map onto a strategy's single ``omega`` field.
OMEGA_ALIASES = {"base": "omega_c", "superclass": "omega_s", "switching": "omega_c"}


def strategy_fields(kind: str) -> tuple[str, ...]:
    """Accepted parameter names for ``kind`` in column/flag vocabulary."""
    cls = _strategy_class(kind)
    names = [f for f in cls.__dataclass_fields__ if f != "superclass_source"]
    alias = OMEGA_ALIASES.get(kind)
    return tuple(alias if n == "omega" else n for n in names)


def _strategy_class(kind: str) -> type[Strategy]:
    try:
        return STRATEGIES[kind]
    except KeyError:
        raise ConfigError(f"unknown strategy {kind!r}; choose from {sorted(STRATEGIES)}", "strategy") from None


def make_strategy(kind: str, params: dict, superclass_source: MixtureKey = SUPERCLASS) -> Strategy:
    """Build a strategy from column-vocabulary parameters (``omega_c``, ``t_sw``, ...)."""
    cls = _strategy_class(kind)
    allowed = strategy_fields(kind)
    kwargs = {}
    for name, value in params.items():
        if name not in allowed:
            raise ConfigError(f"{name.replace('_', '-')} not valid for {kind}", name)
        kwargs["omega" if name == OMEGA_ALIASES.get(kind) else name] = value
    try:
        return cls(**kwargs, superclass_source=superclass_source)
    except TypeError as exc:
        missing = [f for f in allowed if f not in params]
        raise ConfigError(f"{kind} needs {missing}: {exc}", "strategy") from None
