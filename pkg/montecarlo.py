# montecarlo.py
"""
Monte Carlo estimates of extinction / survival probabilities and of the
expected time T(p) to drop below min(A_f, A_g).

Trials are independent: trial i of a batch seeded by ``seed`` runs on its own
generator seeded with rds.trial_seed(seed, i), so it replays exactly with
rds.simulate. Trials are advanced in vectorized blocks; blocks run in
parallel threads (ALLEE_RDS_THREADS) and are merged by trial index.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from joblib import Parallel, delayed
from scipy import stats
from statsmodels.stats.proportion import proportion_confint
from tqdm import tqdm

import maps
import rds
from certify import Theorem2Report, noise_classifier
from config import (
    CHUNK_STEPS, CONFIDENCE, HITTING_CAP, MAX_HORIZON, N_TRIALS_PROPORTION, N_TRIALS_SWEEP,
    START_HORIZON, TRIALS_PER_BLOCK, UNDECIDED_TOL, threads,
)
from errors import EstimateUnavailable, InputError, PreconditionError
from maps import MapSpec
from rds import Classifier, Outcome, RdsConfig

logger = logging.getLogger(__name__)

EXTINCT, SURVIVED, UNDECIDED = 0, 1, 2
_CODES = {EXTINCT: Outcome.EXTINCT, SURVIVED: Outcome.SURVIVED, UNDECIDED: Outcome.UNDECIDED}


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    ci_low: float
    ci_high: float
    n_trials: int
    n_undecided: int
    seed: int
    horizon: int
    degenerate: bool = False
    error: str | None = None

    @property
    def n_censored(self) -> int:
        return self.n_undecided

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_trials": self.n_trials,
            "n_undecided": self.n_undecided,
            "seed": self.seed,
            "horizon": self.horizon,
            "degenerate": self.degenerate,
            "error": self.error,
        }


@dataclass(frozen=True)
class AbsorptionResult:
    p0: EstimateResult
    p1: EstimateResult
    outcomes: np.ndarray = field(repr=False)
    horizon: int

    def __iter__(self):
        return iter((self.p0, self.p1))

    @property
    def n_extinct(self) -> int:
        return int(np.count_nonzero(self.outcomes == EXTINCT))

    @property
    def n_survived(self) -> int:
        return int(np.count_nonzero(self.outcomes == SURVIVED))

    @property
    def n_undecided(self) -> int:
        return int(np.count_nonzero(self.outcomes == UNDECIDED))

    @property
    def undecided_fraction(self) -> float:
        return self.n_undecided / len(self.outcomes)

    def outcome(self, i: int) -> Outcome:
        return _CODES[int(self.outcomes[i])]


@dataclass(frozen=True)
class SweepResult:
    p_grid: tuple[float, ...]
    values: tuple[EstimateResult, ...]

    def to_rows(self) -> list[dict[str, Any]]:
        return [
            {"p": p, "estimate": v.estimate, "ci_low": v.ci_low, "ci_high": v.ci_high,
             "n_trials": v.n_trials, "n_censored": v.n_censored, "seed": v.seed}
            for p, v in zip(self.p_grid, self.values)
        ]


@dataclass(frozen=True)
class ExtinctionRow:
    x0: float
    extinct: EstimateResult
    horizon: int

    @property
    def flagged(self) -> bool:
        """The extinct-fraction interval excludes 1."""
        return self.extinct.ci_high < 1.0


@dataclass(frozen=True)
class ExtinctionReport:
    rows: tuple[ExtinctionRow, ...]

    @property
    def all_extinct(self) -> bool:
        return all(r.extinct.estimate == 1.0 and r.extinct.n_undecided == 0 for r in self.rows)

    @property
    def flagged(self) -> list[float]:
        return [r.x0 for r in self.rows if r.flagged]


@dataclass(frozen=True)
class EscapeReport:
    n_trials: int
    n_steps: int
    entered_low: int
    escapes_low: int
    entered_high: int
    escapes_high: int


# ---- intervals ----

def wilson_interval(successes: int, n: int) -> tuple[float, float]:
    """95% Wilson score interval, pinned to [0, 1] at the boundaries."""
    if n <= 0:
        raise InputError("a proportion needs at least one trial")
    lo, hi = proportion_confint(successes, n, alpha=1.0 - CONFIDENCE, method="wilson")
    lo = 0.0 if successes == 0 else float(lo)
    hi = 1.0 if successes == n else float(hi)
    return min(lo, successes / n), max(hi, successes / n)


def proportion_estimate(successes: int, n: int, n_undecided: int, seed: int, horizon: int) -> EstimateResult:
    lo, hi = wilson_interval(successes, n)
    return EstimateResult(successes / n, lo, hi, n, n_undecided, seed, horizon, degenerate=n == 1)


def mean_estimate(samples: np.ndarray, n_trials: int, seed: int, horizon: int) -> EstimateResult:
    """Sample mean with a Student-t interval."""
    n = len(samples)
    mean = float(np.mean(samples))
    censored = n_trials - n
    if n == 1:
        return EstimateResult(mean, mean, mean, n_trials, censored, seed, horizon, degenerate=True)
    sem = float(stats.sem(samples))
    if sem == 0.0:
        return EstimateResult(mean, mean, mean, n_trials, censored, seed, horizon)
    lo, hi = stats.t.interval(CONFIDENCE, n - 1, loc=mean, scale=sem)
    return EstimateResult(mean, float(lo), float(hi), n_trials, censored, seed, horizon)


# ---- vectorized trial blocks ----

class _Block:
    """Trials [start, stop) advanced together; each keeps its own generator."""

    def __init__(self, config: RdsConfig, x0: float, seed: int, start: int, stop: int):
        self.config = config
        self.index = np.arange(start, stop)
        self.rngs = [rds.make_rng(rds.trial_seed(seed, i)) for i in range(start, stop)]
        self.x = np.full(stop - start, float(x0))

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray | None]:
        pairs = [rds.draw(self.config, rng, n) for rng in self.rngs]
        coins = np.stack([c for c, _ in pairs])
        eps = None if pairs[0][1] is None else np.stack([e for _, e in pairs])
        return coins, eps

    def walk(self, n_steps: int, visit: Callable[[int], None]) -> None:
        """Advance n_steps, calling visit(k) after the k-th step (1-based within this walk)."""
        done = 0
        while done < n_steps and len(self.x):
            n = min(CHUNK_STEPS, n_steps - done)
            coins, eps = self.draw(n)
            for k in range(n):
                self.x = rds.advance(self.config, self.x, coins[:, k], None if eps is None else eps[:, k])
                visit(done + k + 1)
            done += n

    def keep(self, mask: np.ndarray) -> None:
        self.index = self.index[mask]
        self.x = self.x[mask]
        self.rngs = [rng for rng, m in zip(self.rngs, mask) if m]


def _bounds(n_trials: int) -> list[tuple[int, int]]:
    return [(start, min(start + TRIALS_PER_BLOCK, n_trials)) for start in range(0, n_trials, TRIALS_PER_BLOCK)]


def _parallel(fn, items) -> list:
    return Parallel(n_jobs=threads(), prefer="threads")(delayed(fn)(item) for item in items)


def _check_run(config: RdsConfig, x0: float, n_trials: int, seed: int):
    if n_trials < 1:
        raise InputError(f"n_trials must be at least 1, got {n_trials}")
    if not 0.0 <= x0 <= config.b:
        raise InputError(f"x0 must lie in [0, {config.b}], got {x0}")
    rds.make_rng(seed)


# ---- absorption ----

def default_classifier(config: RdsConfig) -> Classifier:
    """
    Feature-based regions for model (2); the noise traps at the config's delta for model (3).

    Raises:
        InputError: a noisy config whose pair has no usable trap.
    """
    if not config.perturbed:
        return rds.default_classifier(config)
    try:
        return noise_classifier(config.f, config.g, config.perturbation.delta)
    except PreconditionError as e:
        raise InputError(f"{e}; pass an explicit classifier (--trap) for this noisy config") from None


class _AbsorptionBlock(_Block):
    def __init__(self, config, x0, seed, start, stop, classifier: Classifier):
        super().__init__(config, x0, seed, start, stop)
        self.classifier = classifier
        self.extinct_run = classifier.in_extinct(self.x).astype(np.int64)
        self.trap_run = classifier.in_trap(self.x).astype(np.int64)

    def _visit(self, _k: int) -> None:
        c = self.classifier
        self.extinct_run = np.where(c.in_extinct(self.x), self.extinct_run + 1, 0)
        self.trap_run = np.where(c.in_trap(self.x), self.trap_run + 1, 0)

    def advance(self, n_steps: int) -> None:
        self.walk(n_steps, self._visit)

    def outcomes(self) -> np.ndarray:
        w = self.classifier.window
        return np.where(self.extinct_run >= w, EXTINCT, np.where(self.trap_run >= w, SURVIVED, UNDECIDED))


def run_absorption(config: RdsConfig, x0: float, seed: int, start: int, stop: int,
                   horizon: int, classifier: Classifier | None = None) -> np.ndarray:
    """Outcome codes of trials [start, stop) at a fixed horizon."""
    block = _AbsorptionBlock(config, x0, seed, start, stop, classifier or default_classifier(config))
    block.advance(horizon)
    return block.outcomes()


def estimate_absorption(config: RdsConfig, x0: float, n_trials: int = N_TRIALS_PROPORTION,
                        horizon: int = START_HORIZON, seed: int = 0, *,
                        classifier: Classifier | None = None, grow: bool = True,
                        max_horizon: int = MAX_HORIZON, undecided_tol: float = UNDECIDED_TOL,
                        progress: bool = False) -> AbsorptionResult:
    """
    Extinction (p0) and survival (p1) proportions with Wilson intervals.

    Every trial runs to the same horizon and is classified from its last
    ``window`` states. With ``grow`` the horizon doubles until the undecided
    fraction drops below ``undecided_tol`` (or to zero) or ``max_horizon`` is
    reached. Undecided trials stay in the denominator and in neither estimate,
    so p0 + p1 + undecided fraction = 1.
    """
    _check_run(config, x0, n_trials, seed)
    if horizon < 1:
        raise InputError(f"horizon must be at least 1, got {horizon}")
    classifier = classifier or default_classifier(config)
    blocks = [_AbsorptionBlock(config, x0, seed, start, stop, classifier) for start, stop in _bounds(n_trials)]

    steps, target = 0, horizon
    with tqdm(total=n_trials, desc="absorption", disable=not progress, leave=False) as bar:
        while True:
            n = target - steps
            _parallel(lambda blk: blk.advance(n), blocks)
            steps = target
            outcomes = np.concatenate([blk.outcomes() for blk in blocks])
            undecided = int(np.count_nonzero(outcomes == UNDECIDED))
            bar.n = n_trials - undecided
            bar.refresh()
            if not grow or undecided == 0 or undecided / n_trials < undecided_tol or steps >= max_horizon:
                break
            target = min(2 * steps, max_horizon)
            logger.info("horizon %d left %d undecided; doubling to %d", steps, undecided, target)

    if undecided:
        logger.warning("%d of %d trials undecided at horizon %d", undecided, n_trials, steps)
    n_extinct = int(np.count_nonzero(outcomes == EXTINCT))
    n_survived = int(np.count_nonzero(outcomes == SURVIVED))
    return AbsorptionResult(
        p0=proportion_estimate(n_extinct, n_trials, undecided, seed, steps),
        p1=proportion_estimate(n_survived, n_trials, undecided, seed, steps),
        outcomes=outcomes,
        horizon=steps,
    )


# ---- hitting times ----

def _hitting_block(config: RdsConfig, x0: float, seed: int, start: int, stop: int,
                   threshold: float, cap: int) -> np.ndarray:
    """First n with X_n < threshold for trials [start, stop); -1 where the cap was reached."""
    block = _Block(config, x0, seed, start, stop)
    hits = np.full(stop - start, -1, dtype=np.int64)
    steps = 0
    while steps < cap and len(block.x):
        n = min(CHUNK_STEPS, cap - steps)
        offset = steps

        def visit(k: int) -> None:
            below = block.x < threshold
            slots = block.index[below] - start
            fresh = hits[slots] < 0
            hits[slots[fresh]] = offset + k

        block.walk(n, visit)
        steps += n
        block.keep(hits[block.index - start] < 0)
    return hits


def hitting_times(config: RdsConfig, x0: float, threshold: float, n_trials: int,
                  cap: int, seed: int) -> np.ndarray:
    """Per-trial first passage times below ``threshold`` (-1 when censored at ``cap``)."""
    parts = _parallel(lambda se: _hitting_block(config, x0, seed, se[0], se[1], threshold, cap), _bounds(n_trials))
    return np.concatenate(parts)


def estimate_hitting_time(config: RdsConfig, x0: float, threshold: float | None = None,
                          n_trials: int = N_TRIALS_SWEEP, cap: int = HITTING_CAP, seed: int = 0) -> EstimateResult:
    """
    Mean first n with X_n < threshold, with a Student-t interval.

    Censored trials (still above the threshold at ``cap``) are left out of the
    mean and counted in ``n_undecided``.

    Raises:
        EstimateUnavailable: every trial was censored.
    """
    _check_run(config, x0, n_trials, seed)
    if threshold is None:
        threshold = min(rds.features_of(config.f).A, rds.features_of(config.g).A)
    if not 0.0 < threshold < config.b:
        raise InputError(f"threshold must lie in (0, {config.b}), got {threshold}")
    if not x0 > threshold:
        raise InputError(f"x0 must exceed the threshold {threshold}, got {x0}")
    if cap < 1:
        raise InputError(f"cap must be at least 1, got {cap}")

    hits = hitting_times(config, x0, threshold, n_trials, cap, seed)
    observed = hits[hits >= 0]
    censored = n_trials - len(observed)
    if len(observed) == 0:
        raise EstimateUnavailable(f"all {n_trials} trials censored at cap {cap}", n_censored=censored)
    if censored:
        logger.warning("%d of %d trials censored at cap %d; excluded from the mean", censored, n_trials, cap)
    return mean_estimate(observed.astype(float), n_trials, seed, cap)


def sweep_T_of_p(f: MapSpec, g: MapSpec, p_grid, x0: float, n_trials: int = N_TRIALS_SWEEP,
                 cap: int = HITTING_CAP, seed: int = 0, perturbation: rds.PerturbationSpec | None = None,
                 b: float | None = None, progress: bool = False) -> SweepResult:
    """
    T(p) over a grid of switching probabilities, threshold min(A_f, A_g).

    Grid point j runs with seed rds.trial_seed(seed, j), recorded in its
    result. A point where every trial is censored carries NaN and the error
    message instead of aborting the sweep.
    """
    p_grid = tuple(float(p) for p in p_grid)
    if not p_grid or any(not 0.0 < p < 1.0 for p in p_grid):
        raise InputError("p_grid must be a nonempty list of values in (0, 1)")
    if list(p_grid) != sorted(p_grid):
        raise InputError("p_grid must be sorted")

    base = RdsConfig.build(f, g, p_grid[0], perturbation, b)
    threshold = min(rds.features_of(base.f).A, rds.features_of(base.g).A)
    values: list[EstimateResult] = []
    for j, p in enumerate(tqdm(p_grid, desc="sweep", disable=not progress, leave=False)):
        point_seed = rds.trial_seed(seed, j)
        try:
            values.append(estimate_hitting_time(base.with_p(p), x0, threshold, n_trials, cap, point_seed))
        except EstimateUnavailable as e:
            logger.warning("p=%s: %s", p, e)
            values.append(EstimateResult(math.nan, math.nan, math.nan, n_trials, e.n_censored,
                                         point_seed, cap, error=str(e)))
    return SweepResult(p_grid, tuple(values))


# ---- theorem-level checks ----

def verify_extinction_theorem(config: RdsConfig, x0_grid, n_trials: int = 1000,
                              horizon: int = START_HORIZON, seed: int = 0,
                              max_horizon: int = MAX_HORIZON, progress: bool = False) -> ExtinctionReport:
    """
    Extinct fraction per starting point, growing the horizon until nothing is undecided.

    Only extinction counts as decided here; the survival region is empty.
    Starting point k runs with seed rds.trial_seed(seed, k).
    """
    base = rds.default_classifier(config)
    classifier = Classifier(base.extinct_below, math.inf, -math.inf, base.window)
    rows = []
    for k, x0 in enumerate(tqdm(list(x0_grid), desc="x0", disable=not progress, leave=False)):
        result = estimate_absorption(config, float(x0), n_trials, horizon, rds.trial_seed(seed, k),
                                     classifier=classifier, grow=True, max_horizon=max_horizon,
                                     undecided_tol=0.0)
        if result.p0.ci_high < 1.0:
            logger.warning("x0=%s: extinct fraction %.4f after horizon %d", x0, result.p0.estimate, result.horizon)
        rows.append(ExtinctionRow(float(x0), result.p0, result.horizon))
    return ExtinctionReport(tuple(rows))


def estimate_trap_escapes(config: RdsConfig, report: Theorem2Report, x0: float, n_trials: int,
                          n_steps: int, seed: int = 0) -> EscapeReport:
    """
    Count exits from [0, w1) and (z2, w3) after first entry, for model (3).

    With a delta that satisfies the gap conditions both counts should be zero.
    """
    _check_run(config, x0, n_trials, seed)
    if not report.all_nonempty:
        raise InputError("escape counting needs all three gap sets nonempty")
    w1, z2, w3 = report.w1, report.z2, report.w3

    def one_block(bounds: tuple[int, int]) -> tuple[int, int, int, int]:
        block = _Block(config, x0, seed, *bounds)
        was_low, was_high = block.x < w1, (block.x > z2) & (block.x < w3)
        seen_low, seen_high = was_low.copy(), was_high.copy()
        escapes = np.zeros(2, dtype=np.int64)

        def visit(_k: int) -> None:
            nonlocal was_low, was_high, seen_low, seen_high
            low = block.x < w1
            high = (block.x > z2) & (block.x < w3)
            escapes[0] += np.count_nonzero(was_low & ~low)
            escapes[1] += np.count_nonzero(was_high & ~high)
            seen_low |= low
            seen_high |= high
            was_low, was_high = low, high

        block.walk(n_steps, visit)
        return int(seen_low.sum()), int(escapes[0]), int(seen_high.sum()), int(escapes[1])

    parts = np.array(_parallel(one_block, _bounds(n_trials))).sum(axis=0)
    return EscapeReport(n_trials, n_steps, int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]))


def extinction_x0_grid(config: RdsConfig, n: int = 20) -> np.ndarray:
    """n starting points spread over (0, M] for unimodal pairs, (0, b] otherwise."""
    top = config.b
    feats = [rds.features_of(config.f), rds.features_of(config.g)]
    if all(ft.unimodal for ft in feats):
        top = max(ft.M for ft in feats)
    return np.linspace(top / n, top, n)
