# maps.py
"""
Allee map families, their derivatives, and the landmarks the theorems talk about.

Two closed-form families are built in:

    sigmoid             f(x) = rho x^2 / (a + x^2)
    rational_unimodal   f(x) = G bp x / ((x - T)^2 + bp)

plus a custom map, either tabulated (linear interpolation between points) or a
vectorizable callable supplied by the host program.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, NamedTuple

import numpy as np
from scipy import optimize

from config import BISECT_TOL, ROOT_GRID_N, TOL_FP, VALIDATE_GRID_N
from errors import ConfigurationError, InputError, NotAnAlleeMap, NotUnimodal

logger = logging.getLogger(__name__)


class Family(str, Enum):
    SIGMOID = "sigmoid"
    RATIONAL_UNIMODAL = "rational_unimodal"
    CUSTOM = "custom"


class Monotonicity(str, Enum):
    STRICTLY_INCREASING = "strictly_increasing"
    UNIMODAL = "unimodal"


_KEYS = {
    Family.SIGMOID: {"rho", "a"},
    Family.RATIONAL_UNIMODAL: {"G", "bp", "T"},
    Family.CUSTOM: {"xs", "ys"},
}


@dataclass(frozen=True)
class MapSpec:
    """
    A parametric Allee map on [0, b].

    ``b`` may be left as None for the built-in families; ``domain_bound`` then
    falls back to the natural bound (rho for sigmoid maps, M = f(B) for
    rational maps), which the map sends into itself.
    """

    family: Family
    b: float | None = None
    rho: float | None = None
    a: float | None = None
    G: float | None = None
    bp: float | None = None
    T: float | None = None
    xs: tuple[float, ...] = ()
    ys: tuple[float, ...] = ()
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        if self.b is not None and not (math.isfinite(self.b) and self.b > 0):
            raise ConfigurationError(f"domain bound b must be a finite positive number, got {self.b}")

        if self.family is Family.SIGMOID:
            _require_positive(rho=self.rho, a=self.a)
        elif self.family is Family.RATIONAL_UNIMODAL:
            # G <= 1 is a valid rational map, just not an Allee map; validate_allee reports it
            _require_positive(G=self.G, bp=self.bp, T=self.T)
        elif self.family is Family.CUSTOM:
            if self.func is None:
                if len(self.xs) < 2 or len(self.xs) != len(self.ys):
                    raise ConfigurationError("tabulated custom map needs matching xs/ys with at least 2 points")
                if any(x1 <= x0 for x0, x1 in zip(self.xs, self.xs[1:])):
                    raise ConfigurationError("tabulated custom map needs strictly increasing xs")
            if self.b is None:
                raise ConfigurationError("custom maps need an explicit domain bound b")
        else:
            raise ConfigurationError(f"unknown family: {self.family}")

    # ---- constructors ----
    @classmethod
    def sigmoid(cls, rho: float, a: float, b: float | None = None, name: str = "") -> "MapSpec":
        return cls(Family.SIGMOID, b=b, rho=float(rho), a=float(a), name=name)

    @classmethod
    def rational(cls, G: float, bp: float, T: float, b: float | None = None, name: str = "") -> "MapSpec":
        return cls(Family.RATIONAL_UNIMODAL, b=b, G=float(G), bp=float(bp), T=float(T), name=name)

    @classmethod
    def tabulated(cls, xs, ys, b: float, name: str = "") -> "MapSpec":
        return cls(Family.CUSTOM, b=float(b), xs=tuple(map(float, xs)), ys=tuple(map(float, ys)), name=name)

    @classmethod
    def custom(cls, func: Callable[[np.ndarray], np.ndarray], b: float, name: str = "") -> "MapSpec":
        return cls(Family.CUSTOM, b=float(b), func=func, name=name)

    # ---- derived ----
    @property
    def domain_bound(self) -> float:
        if self.b is not None:
            return self.b
        if self.family is Family.SIGMOID:
            return self.rho
        # b = M, the maximum of the rational map
        B = math.sqrt(self.T**2 + self.bp)
        return float(_rational(self, B))

    def with_bound(self, b: float) -> "MapSpec":
        return replace(self, b=float(b))

    def to_dict(self) -> dict[str, Any]:
        if self.func is not None:
            raise ConfigurationError("callable custom maps cannot be serialized")
        out: dict[str, Any] = {"family": self.family.value}
        for key in sorted(_KEYS[self.family]):
            value = getattr(self, key)
            out[key] = list(value) if isinstance(value, tuple) else value
        out["b"] = self.b
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MapSpec":
        if not isinstance(data, dict) or "family" not in data:
            raise ConfigurationError("map spec must be an object with a 'family' key")
        try:
            family = Family(data["family"])
        except ValueError:
            raise ConfigurationError(f"unknown family: {data['family']!r}") from None

        allowed = _KEYS[family] | {"family", "b", "name"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigurationError(f"unknown keys for {family.value} map: {sorted(unknown)}")
        missing = _KEYS[family] - set(data)
        if missing:
            raise ConfigurationError(f"missing keys for {family.value} map: {sorted(missing)}")

        b = data.get("b")
        name = data.get("name", "")
        try:
            if family is Family.SIGMOID:
                return cls.sigmoid(data["rho"], data["a"], b=b, name=name)
            if family is Family.RATIONAL_UNIMODAL:
                return cls.rational(data["G"], data["bp"], data["T"], b=b, name=name)
            if b is None:
                raise ConfigurationError("custom maps need an explicit domain bound b")
            return cls.tabulated(data["xs"], data["ys"], b=b, name=name)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(f"bad parameter value in {family.value} map: {e}") from None


class FixedPoints(NamedTuple):
    A: float
    K: float


class CriticalPoint(NamedTuple):
    B: float | None
    M: float | None
    monotonicity: Monotonicity


@dataclass(frozen=True)
class MapFeatures:
    A: float
    K: float
    B: float | None
    M: float | None
    monotonicity: Monotonicity

    @property
    def unimodal(self) -> bool:
        return self.monotonicity is Monotonicity.UNIMODAL

    def to_dict(self) -> dict[str, Any]:
        return {"A": self.A, "K": self.K, "B": self.B, "M": self.M, "monotonicity": self.monotonicity.value}


@dataclass(frozen=True)
class AxiomCheck:
    name: str
    holds: bool
    worst_x: float | None = None
    worst_gap: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[AxiomCheck, ...]
    features: MapFeatures | None

    @property
    def passed(self) -> bool:
        return all(c.holds for c in self.checks)

    def failures(self) -> list[AxiomCheck]:
        return [c for c in self.checks if not c.holds]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [c.__dict__ for c in self.checks],
            "features": self.features.to_dict() if self.features else None,
        }


def _require_positive(**params):
    for key, value in params.items():
        if value is None or not math.isfinite(value) or value <= 0:
            raise ConfigurationError(f"parameter {key} must be a finite positive number, got {value}")


# ---- evaluation ----

def _sigmoid(spec: MapSpec, x):
    return spec.rho * x * x / (spec.a + x * x)


def _rational(spec: MapSpec, x):
    return spec.G * spec.bp * x / ((x - spec.T) ** 2 + spec.bp)


def vectorized(spec: MapSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Unchecked evaluator for arrays; rds uses this in its inner loop."""
    if spec.family is Family.SIGMOID:
        return lambda x: _sigmoid(spec, x)
    if spec.family is Family.RATIONAL_UNIMODAL:
        return lambda x: _rational(spec, x)
    if spec.func is not None:
        return lambda x: np.asarray(spec.func(x), dtype=float)
    xs = np.asarray(spec.xs)
    ys = np.asarray(spec.ys)
    return lambda x: np.interp(x, xs, ys)


def _check_domain(spec: MapSpec, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    b = spec.domain_bound
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > b):
        raise InputError(f"x must lie in [0, {b}], got {x}")
    return arr


def eval_map(spec: MapSpec, x):
    """
    Evaluate f at x (scalar or array) with a domain check.

    Raises:
        InputError: x outside [0, b].
    """
    arr = _check_domain(spec, x)
    out = vectorized(spec)(arr)
    return float(out) if np.ndim(out) == 0 else out


def derivative(spec: MapSpec, x):
    """f'(x): closed form for the built-in families, central difference otherwise."""
    arr = _check_domain(spec, x)
    if spec.family is Family.SIGMOID:
        out = 2.0 * spec.rho * spec.a * arr / (spec.a + arr * arr) ** 2
    elif spec.family is Family.RATIONAL_UNIMODAL:
        out = spec.G * spec.bp * (spec.T**2 + spec.bp - arr * arr) / ((arr - spec.T) ** 2 + spec.bp) ** 2
    else:
        out = central_difference(vectorized(spec), arr)
    return float(out) if np.ndim(out) == 0 else out


def central_difference(fn: Callable[[np.ndarray], np.ndarray], x):
    h = 1e-6 * np.maximum(1.0, np.abs(x))
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


def iterate(spec: MapSpec, x0: float, n: int) -> np.ndarray:
    """Orbit x_0..x_n of the deterministic model x_{k+1} = f(x_k)."""
    _check_domain(spec, x0)
    fn = vectorized(spec)
    orbit = np.empty(n + 1)
    orbit[0] = x0
    for k in range(n):
        orbit[k + 1] = fn(orbit[k])
    return orbit


# ---- landmarks ----

def closed_form_fixed_points(spec: MapSpec) -> FixedPoints | None:
    """Closed-form A, K for the built-in families; None for custom maps."""
    if spec.family is Family.SIGMOID:
        disc = spec.rho**2 - 4.0 * spec.a
        if disc <= 0:
            raise NotAnAlleeMap(f"sigmoid map needs rho > 2*sqrt(a) (rho={spec.rho}, a={spec.a})")
        root = math.sqrt(disc)
        return FixedPoints((spec.rho - root) / 2.0, (spec.rho + root) / 2.0)
    if spec.family is Family.RATIONAL_UNIMODAL:
        disc = spec.bp * (spec.G - 1.0)
        if disc <= 0:
            raise NotAnAlleeMap(f"rational map needs G > 1 for positive fixed points (G={spec.G})")
        root = math.sqrt(disc)
        if spec.T - root <= 0:
            raise NotAnAlleeMap("rational map threshold T - sqrt(bp(G-1)) is not positive")
        return FixedPoints(spec.T - root, spec.T + root)
    return None


def _positive_roots(fn: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, n: int) -> list[float]:
    grid = np.linspace(lo, hi, n)
    h = fn(grid) - grid
    roots: list[float] = []
    for i in range(n - 1):
        if h[i] == 0.0:
            roots.append(float(grid[i]))
        elif h[i] * h[i + 1] < 0:
            root = optimize.bisect(lambda x: float(fn(x) - x), grid[i], grid[i + 1], xtol=BISECT_TOL)
            roots.append(float(root))
    if h[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots


def find_fixed_points(spec: MapSpec) -> FixedPoints:
    """
    Locate the threshold A and the upper fixed point K.

    Sign changes of f(x) - x are bracketed on a uniform grid over (TOL_FP, b]
    and refined by bisection. Built-in families are cross-checked against
    their closed forms.

    Raises:
        NotAnAlleeMap: fewer or more than two positive fixed points, or a tangency.
    """
    closed = closed_form_fixed_points(spec)
    b = spec.domain_bound
    roots = _positive_roots(vectorized(spec), TOL_FP, b, ROOT_GRID_N)

    if closed is not None:
        if closed.K > b + TOL_FP:
            raise NotAnAlleeMap(f"upper fixed point K={closed.K} lies outside [0, {b}]")
        if len(roots) != 2 or abs(roots[0] - closed.A) > 1e-9 or abs(roots[1] - closed.K) > 1e-9:
            logger.warning("grid roots %s disagree with closed form %s; using closed form", roots, closed)
            return closed
        return FixedPoints(roots[0], roots[1])

    if len(roots) != 2:
        raise NotAnAlleeMap(f"expected two positive fixed points, found {len(roots)}")
    A, K = roots
    if K - A <= TOL_FP:
        raise NotAnAlleeMap("fixed points A and K coincide (tangency)")
    return FixedPoints(A, K)


def find_critical_point(spec: MapSpec) -> CriticalPoint:
    """
    The maximiser B and maximum M of a unimodal map (both None if increasing).

    Raises:
        NotUnimodal: a custom map whose grid profile has several local maxima.
    """
    if spec.family is Family.SIGMOID:
        return CriticalPoint(None, None, Monotonicity.STRICTLY_INCREASING)
    if spec.family is Family.RATIONAL_UNIMODAL:
        B = math.sqrt(spec.T**2 + spec.bp)
        return CriticalPoint(B, float(_rational(spec, B)), Monotonicity.UNIMODAL)

    fn = vectorized(spec)
    grid = np.linspace(0.0, spec.domain_bound, VALIDATE_GRID_N)
    slope = np.sign(np.diff(fn(grid)))
    slope = slope[slope != 0]
    turns = np.flatnonzero((slope[:-1] > 0) & (slope[1:] < 0))
    if np.any(slope[:-1] < slope[1:]) or len(turns) > 1:
        raise NotUnimodal(f"custom map has {max(len(turns), 2)} local maxima on the grid")
    if len(turns) == 0:
        if np.all(slope > 0):
            return CriticalPoint(None, None, Monotonicity.STRICTLY_INCREASING)
        raise NotUnimodal("custom map is not increasing near 0")

    values = fn(grid)
    i = int(np.argmax(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda x: -float(fn(x)), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    B = float(res.x) if -res.fun >= values[i] else float(grid[i])
    return CriticalPoint(B, float(fn(B)), Monotonicity.UNIMODAL)


def analyze(spec: MapSpec) -> MapFeatures:
    A, K = find_fixed_points(spec)
    B, M, monotonicity = find_critical_point(spec)
    return MapFeatures(A=A, K=K, B=B, M=M, monotonicity=monotonicity)


def persists_alone(spec: MapSpec, features: MapFeatures | None = None) -> bool:
    """
    Deterministic survival above A for x0 in (A, M].

    Increasing maps always persist; a unimodal map persists when f(M) > A.
    """
    feats = features or analyze(spec)
    if not feats.unimodal:
        return True
    return float(vectorized(spec)(feats.M)) > feats.A


def validate_allee(spec: MapSpec, grid_n: int = VALIDATE_GRID_N) -> ValidationReport:
    """
    Grid check of the Allee axioms.

    f(x) < x on (0, A) and (K, b], f(x) > x on (A, K), and f maps [0, b] into
    itself. Grid points within TOL_FP of the diagonal are skipped in the
    strict checks.
    """
    if grid_n < 1000:
        raise InputError(f"grid_n must be at least 1000, got {grid_n}")

    b = spec.domain_bound
    fn = vectorized(spec)
    grid = np.linspace(0.0, b, grid_n)
    values = fn(grid)
    gap = values - grid
    checks: list[AxiomCheck] = []

    outside = np.maximum(-values, values - b)
    worst = int(np.argmax(outside))
    checks.append(AxiomCheck("maps_into_domain", bool(outside[worst] <= TOL_FP), float(grid[worst]), float(outside[worst])))

    try:
        features = analyze(spec)
    except (NotAnAlleeMap, NotUnimodal) as e:
        checks.append(AxiomCheck("fixed_points_exist", False, detail=str(e)))
        return ValidationReport(tuple(checks), None)
    checks.append(AxiomCheck("fixed_points_exist", True))

    A, K = features.A, features.K
    strict = np.abs(gap) > TOL_FP
    below = strict & (((grid > 0) & (grid < A)) | (grid > K))
    above = strict & (grid > A) & (grid < K)
    checks.append(_strict_check("below_identity_outside", grid, gap, below, sign=-1))
    checks.append(_strict_check("above_identity_inside", grid, gap, above, sign=+1))

    if features.unimodal:
        inside = A < features.B < K
        checks.append(AxiomCheck("critical_point_inside", inside, features.B,
                                 detail="" if inside else f"B={features.B} not in ({A}, {K})"))

    return ValidationReport(tuple(checks), features)


def _strict_check(name: str, grid: np.ndarray, gap: np.ndarray, mask: np.ndarray, sign: int) -> AxiomCheck:
    if not np.any(mask):
        return AxiomCheck(name, True)
    # violation > 0 means the wrong side of the diagonal
    violation = np.where(mask, -sign * gap, -np.inf)
    worst = int(np.argmax(violation))
    if violation[worst] < 0:
        return AxiomCheck(name, True)
    return AxiomCheck(name, False, float(grid[worst]), float(gap[worst]))


def build_pair(f: MapSpec, g: MapSpec, b: float | None = None) -> tuple[MapSpec, MapSpec, float]:
    """
    Give f and g one common domain bound.

    Unimodal pairs use b = max(M_f, M_g) whatever was supplied; other pairs
    keep a supplied b, else the larger natural bound of the two maps.
    """
    crit_f, crit_g = find_critical_point(f), find_critical_point(g)
    if crit_f.monotonicity is Monotonicity.UNIMODAL and crit_g.monotonicity is Monotonicity.UNIMODAL:
        common = max(crit_f.M, crit_g.M)
        if b is not None and abs(b - common) > TOL_FP:
            logger.info("unimodal pair: replacing b=%s with max(M_f, M_g)=%s", b, common)
    elif b is not None:
        common = float(b)
    else:
        common = max(f.domain_bound, g.domain_bound)
    return f.with_bound(common), g.with_bound(common), common
