# rds.py
"""
Random switching between two Allee maps, with or without clamped noise.

    model (2):  X_{n+1} = f(X_n) w.p. p,  g(X_n) w.p. 1 - p
    model (3):  Y_{n+1} = clamp(h(Y_n) + eps_n, b),  h chosen the same way

Every trajectory is a deterministic function of (config, x0, seed). Each step
consumes one uniform for the coin (u < p selects f) and, in model (3), a
second uniform that is pushed through the noise law's inverse CDF.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any

import numpy as np

import maps
from config import EXTINCT_FRACTION, TOL_FP, WINDOW
from errors import ConfigurationError, InputError
from maps import MapFeatures, MapSpec

logger = logging.getLogger(__name__)


class NoiseLaw(str, Enum):
    UNIFORM = "uniform"
    TRUNCATED_TRIANGULAR = "truncated_triangular"


class Outcome(str, Enum):
    EXTINCT = "extinct"
    SURVIVED = "survived"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class PerturbationSpec:
    delta: float
    distribution: NoiseLaw = NoiseLaw.UNIFORM

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ConfigurationError(f"delta must be a finite positive number, got {self.delta}")

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms on [0, 1) to noise on (-delta, delta)."""
        if self.distribution is NoiseLaw.UNIFORM:
            return self.delta * (2.0 * u - 1.0)
        # symmetric triangular law with mode 0, inverse CDF
        lower = u < 0.5
        return np.where(lower,
                        self.delta * (np.sqrt(2.0 * u) - 1.0),
                        self.delta * (1.0 - np.sqrt(2.0 * (1.0 - u))))

    def to_dict(self) -> dict[str, Any]:
        return {"delta": self.delta, "distribution": self.distribution.value}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PerturbationSpec":
        unknown = set(data) - {"delta", "distribution"}
        if unknown:
            raise ConfigurationError(f"unknown perturbation keys: {sorted(unknown)}")
        if "delta" not in data:
            raise ConfigurationError("perturbation needs a 'delta'")
        try:
            law = NoiseLaw(data.get("distribution", NoiseLaw.UNIFORM.value))
            return cls(float(data["delta"]), law)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(f"bad perturbation: {e}") from None


@dataclass(frozen=True)
class RdsConfig:
    f: MapSpec
    g: MapSpec
    p: float
    perturbation: PerturbationSpec | None = None
    b: float | None = None

    def __post_init__(self):
        if not (isinstance(self.p, (int, float)) and 0.0 < self.p < 1.0):
            raise ConfigurationError(f"p must lie in (0, 1), got {self.p}")
        bf, bg = self.f.domain_bound, self.g.domain_bound
        b = bf if self.b is None else self.b
        if abs(bf - b) > TOL_FP or abs(bg - b) > TOL_FP:
            raise ConfigurationError(f"f and g must share the domain bound (b_f={bf}, b_g={bg}, b={self.b})")
        object.__setattr__(self, "b", float(b))

    @classmethod
    def build(cls, f: MapSpec, g: MapSpec, p: float,
              perturbation: PerturbationSpec | None = None, b: float | None = None) -> "RdsConfig":
        """Resolve the common domain bound (see maps.build_pair) and build the config."""
        f, g, common = maps.build_pair(f, g, b)
        return cls(f, g, p, perturbation, common)

    @property
    def perturbed(self) -> bool:
        return self.perturbation is not None

    def with_p(self, p: float) -> "RdsConfig":
        return RdsConfig(self.f, self.g, p, self.perturbation, self.b)

    def to_dict(self) -> dict[str, Any]:
        return {
            "f": self.f.to_dict(),
            "g": self.g.to_dict(),
            "p": self.p,
            "perturbation": self.perturbation.to_dict() if self.perturbation else None,
            "b": self.b,
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    x0: float
    seed: int
    states: np.ndarray
    choices: np.ndarray  # True where f was applied
    outcome: Outcome = Outcome.UNDECIDED
    outcome_step: int | None = None
    rng_state: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_steps(self) -> int:
        return len(self.choices)


@dataclass(frozen=True)
class Classifier:
    """
    Finite-window surrogate for the asymptotic outcomes.

    Extinct: the last ``window`` states are below ``extinct_below``.
    Survived: the last ``window`` states lie in the survival trap
    [trap_low, trap_high] ((trap_low, trap_high) when ``open_trap``).
    """

    extinct_below: float
    trap_low: float
    trap_high: float
    window: int = WINDOW
    open_trap: bool = False

    def in_extinct(self, x: np.ndarray) -> np.ndarray:
        return x < self.extinct_below

    def in_trap(self, x: np.ndarray) -> np.ndarray:
        if self.open_trap:
            return (x > self.trap_low) & (x < self.trap_high)
        return (x >= self.trap_low) & (x <= self.trap_high)

    @classmethod
    def for_features(cls, feats_f: MapFeatures, feats_g: MapFeatures, b: float,
                     eps_extinct: float | None = None, window: int = WINDOW,
                     trap: tuple[float, float] | None = None, open_trap: bool = False) -> "Classifier":
        """
        Default regions.

        Increasing maps whose thresholds both sit below both upper fixed
        points survive in [min K, max K]; otherwise survival means staying
        strictly above min(A_f, A_g), in (min A, b].
        """
        low_a = min(feats_f.A, feats_g.A)
        extinct = low_a * EXTINCT_FRACTION if eps_extinct is None else eps_extinct
        if trap is not None:
            return cls(extinct, trap[0], trap[1], window, open_trap)
        increasing = not feats_f.unimodal and not feats_g.unimodal
        if increasing and max(feats_f.A, feats_g.A) < min(feats_f.K, feats_g.K):
            lo, hi = sorted((feats_f.K, feats_g.K))
            return cls(extinct, lo - TOL_FP, hi + TOL_FP, window)
        # open at min A; b stays inside
        return cls(extinct, low_a, b + TOL_FP, window, open_trap=True)


@lru_cache(maxsize=256)
def features_of(spec: MapSpec) -> MapFeatures:
    return maps.analyze(spec)


def default_classifier(config: RdsConfig, **kwargs) -> Classifier:
    return Classifier.for_features(features_of(config.f), features_of(config.g), config.b, **kwargs)


# ---- randomness ----

def make_rng(seed: int) -> np.random.Generator:
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise InputError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def trial_seed(seed: int, i: int) -> int:
    """64-bit sub-seed of trial i in a batch seeded by ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(i),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def draw(config: RdsConfig, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Coins (True = f) and noise for n steps, coin then noise within each step."""
    if config.perturbed:
        u = rng.random((n, 2))
        return u[:, 0] < config.p, config.perturbation.from_uniform(u[:, 1])
    return rng.random(n) < config.p, None


# ---- dynamics ----

def clamp(x, b: float):
    """The saturation chi: 0 below 0, b above b, identity in between."""
    if b <= 0:
        raise InputError(f"clamp bound must be positive, got {b}")
    if np.ndim(x) == 0:
        return min(max(float(x), 0.0), b)
    return np.clip(x, 0.0, b)


def advance(config: RdsConfig, x: np.ndarray, coins: np.ndarray, eps: np.ndarray | None) -> np.ndarray:
    """One step for a vector of states. Unchecked; the Monte Carlo loop calls this."""
    y = np.where(coins, _map_f(config)(x), _map_g(config)(x))
    if eps is not None:
        y = y + eps
    # a no-op in exact arithmetic for model (2): both maps send [0, b] into itself
    return np.clip(y, 0.0, config.b)


def step(config: RdsConfig, x: float, coin: bool, eps: float = 0.0) -> float:
    """
    One step of model (2) (no perturbation) or model (3).

    Args:
        coin: True applies f, False applies g.
        eps: noise in (-delta, delta); must be 0 for model (2).
    """
    if not 0.0 <= x <= config.b:
        raise InputError(f"x must lie in [0, {config.b}], got {x}")
    if config.perturbed:
        if not abs(eps) < config.perturbation.delta:
            raise InputError(f"eps must lie in (-delta, delta), got {eps}")
        noise = np.array([eps])
    else:
        if eps != 0.0:
            raise InputError("model (2) takes no noise")
        noise = None
    return float(advance(config, np.array([x]), np.array([bool(coin)]), noise)[0])


@lru_cache(maxsize=256)
def _map_f(config: RdsConfig):
    return maps.vectorized(config.f)


@lru_cache(maxsize=256)
def _map_g(config: RdsConfig):
    return maps.vectorized(config.g)


def _run(config: RdsConfig, x0: float, rng: np.random.Generator, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    coins, eps = draw(config, rng, n_steps)
    states = np.empty(n_steps + 1)
    states[0] = x0
    x = np.array([x0])
    for k in range(n_steps):
        x = advance(config, x, coins[k:k + 1], None if eps is None else eps[k:k + 1])
        states[k + 1] = x[0]
    return states, coins


def simulate(config: RdsConfig, x0: float, seed: int, n_steps: int,
             classifier: Classifier | None = None) -> Trajectory:
    """
    Realize one trajectory of n_steps steps and classify its tail.

    Raises:
        InputError: x0 outside [0, b], n_steps < 1, or a negative seed.
    """
    if not 0.0 <= x0 <= config.b:
        raise InputError(f"x0 must lie in [0, {config.b}], got {x0}")
    if n_steps < 1:
        raise InputError(f"n_steps must be at least 1, got {n_steps}")

    rng = make_rng(seed)
    states, coins = _run(config, float(x0), rng, n_steps)
    traj = Trajectory(float(x0), int(seed), states, coins, rng_state=rng.bit_generator.state)
    return _with_outcome(traj, classifier or default_classifier(config))


def extend(config: RdsConfig, traj: Trajectory, n_more: int,
           classifier: Classifier | None = None) -> Trajectory:
    """Continue a trajectory from the generator state recorded at its end."""
    if n_more < 1:
        raise InputError(f"n_more must be at least 1, got {n_more}")
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = traj.rng_state
    tail, coins = _run(config, float(traj.states[-1]), rng, n_more)
    extended = Trajectory(traj.x0, traj.seed,
                          np.concatenate([traj.states, tail[1:]]),
                          np.concatenate([traj.choices, coins]),
                          rng_state=rng.bit_generator.state)
    return _with_outcome(extended, classifier or default_classifier(config))


def _with_outcome(traj: Trajectory, classifier: Classifier) -> Trajectory:
    outcome, at = classify_states(traj.states, classifier)
    return Trajectory(traj.x0, traj.seed, traj.states, traj.choices, outcome, at, traj.rng_state)


def classify_states(states: np.ndarray, classifier: Classifier) -> tuple[Outcome, int | None]:
    """Outcome of a state sequence and the step where its deciding tail begins."""
    w = classifier.window
    if len(states) < w:
        return Outcome.UNDECIDED, None
    for outcome, inside in ((Outcome.EXTINCT, classifier.in_extinct(states)),
                            (Outcome.SURVIVED, classifier.in_trap(states))):
        if inside[-w:].all():
            outside = np.flatnonzero(~inside)
            return outcome, int(outside[-1] + 1) if len(outside) else 0
    return Outcome.UNDECIDED, None


def classify_outcome(traj: Trajectory, feats_f: MapFeatures, feats_g: MapFeatures,
                     eps_extinct: float | None = None, window: int = WINDOW,
                     b: float | None = None, trap: tuple[float, float] | None = None,
                     open_trap: bool = False) -> tuple[Outcome, int | None]:
    """
    Extinct / Survived / Undecided from the last ``window`` states.

    eps_extinct defaults to min(A_f, A_g) / 100. The survival trap defaults
    to [min K, max K] for interleaved increasing maps and (min A, b] otherwise;
    pass ``trap`` (and ``open_trap``) for the noisy-model traps.
    """
    bound = float(np.max(traj.states)) if b is None else b
    classifier = Classifier.for_features(feats_f, feats_g, bound, eps_extinct, window, trap, open_trap)
    return classify_states(traj.states, classifier)
