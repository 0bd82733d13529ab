# certify.py
"""
Numeric checks of the hypotheses behind the extinction / survival theorems.

Everything here is floating-point grid evidence, not a proof: sets are found
by scanning a uniform grid and refining boundaries by bisection, suprema by
grid search plus bounded golden-section refinement.

    T1  increasing maps, A_f < A_g < K_f < K_g
    T2  T1 plus nonempty delta-gap sets U1, U2, U3 and the tail condition
    T3  unimodal maps, A_f < A_g, |f'| < 1 on (B_f, M_f), a composition witness
    T4  as T3 with A_g < A_f and f(g(A_f)) != A_f
    T5  contraction band, a composition witness, nonempty U
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np
from scipy import optimize

import maps
from config import BAND_GRID_N, BOUNDARY_TOL, M_MAX, SET_GRID_N, TOL_DERIV, TOL_FP, WINDOW
from errors import ConfigurationError, InputError, PreconditionError
from maps import MapFeatures, MapSpec
from rds import Classifier

logger = logging.getLogger(__name__)

Interval = tuple[float, float]


class Theorem(str, Enum):
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"
    T5 = "T5"


class Ordering(str, Enum):
    AF_AG_KF_KG = "AfAgKfKg"
    AG_AF_KG_KF = "AgAfKgKf"
    AF_KF_AG_KG = "AfKfAgKg"
    AG_KG_AF_KF = "AgKgAfKf"
    TIED = "Tied"
    OTHER = "Other"


class Verdict(str, Enum):
    ALL_HOLD = "AllHold"
    SOME_FAIL = "SomeFail"


@dataclass(frozen=True)
class OrderingClass:
    ordering: Ordering
    permutation: str
    values: tuple[tuple[str, float], ...]
    ties: tuple[tuple[str, str], ...] = ()

    @property
    def separated(self) -> bool:
        """One map's threshold sits above the other's upper fixed point."""
        return self.ordering in (Ordering.AF_KF_AG_KG, Ordering.AG_KG_AF_KF)

    @property
    def interleaved(self) -> bool:
        """Both thresholds below both upper fixed points."""
        return not self.ties and self.permutation[:4] in ("AfAg", "AgAf")

    def to_dict(self) -> dict[str, Any]:
        return {
            "ordering": self.ordering.value,
            "permutation": self.permutation,
            "values": [{"label": k, "value": v} for k, v in self.values],
            "ties": [list(t) for t in self.ties],
            "separated": self.separated,
        }


@dataclass(frozen=True)
class Theorem2Report:
    delta: float
    U1: tuple[Interval, ...]
    U2: tuple[Interval, ...]
    U3: tuple[Interval, ...]
    w1: float | None
    w2: float | None
    w3: float | None
    z1: float | None
    z2: float | None
    tail_ok: bool
    b: float

    @property
    def all_nonempty(self) -> bool:
        return bool(self.U1 and self.U2 and self.U3)

    @property
    def trap_low(self) -> Interval | None:
        return (0.0, self.w1) if self.U1 else None

    @property
    def trap_high(self) -> Interval | None:
        return (self.z2, self.w3) if self.U2 and self.U3 else None

    def classifier(self, window: int = WINDOW) -> Classifier:
        """Extinct in [0, w1), survived in (z2, w3)."""
        if not self.all_nonempty:
            raise PreconditionError("theorem 2 traps need all three sets nonempty")
        return Classifier(self.w1, self.z2, self.w3, window, open_trap=True)

    def to_dict(self) -> dict[str, Any]:
        return {
            "delta": self.delta,
            "U1": [list(i) for i in self.U1],
            "U2": [list(i) for i in self.U2],
            "U3": [list(i) for i in self.U3],
            "w1": self.w1, "w2": self.w2, "w3": self.w3,
            "z1": self.z1, "z2": self.z2,
            "tail_ok": self.tail_ok,
            "all_nonempty": self.all_nonempty,
        }


@dataclass(frozen=True)
class CompositionWitness:
    sequence: tuple[str, ...]  # (h1, ..., hm); hm is applied to K_f first
    value: float
    m: int

    @property
    def label(self) -> str:
        return ",".join(self.sequence)


@dataclass(frozen=True)
class BandCheck:
    holds: bool
    sup_abs_derivative: float
    argmax: float | None
    derivative_at_M: float | None
    vacuous: bool = False


@dataclass(frozen=True)
class T4Extra:
    holds: bool
    value: float
    branch: str  # "<", ">" or "="


@dataclass(frozen=True)
class SetScan:
    intervals: tuple[Interval, ...]
    inf: float | None

    def classifier(self, window: int = WINDOW) -> Classifier:
        """Extinct in [0, inf U); no survival region."""
        if self.inf is None:
            raise PreconditionError("the set U is empty")
        return Classifier(self.inf, math.inf, -math.inf, window)


@dataclass(frozen=True)
class Hypothesis:
    name: str
    holds: bool
    witness: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "holds": self.holds, **self.witness}


@dataclass(frozen=True)
class CertificateReport:
    theorem: Theorem
    hypotheses: tuple[Hypothesis, ...]

    @property
    def verdict(self) -> Verdict:
        return Verdict.ALL_HOLD if all(h.holds for h in self.hypotheses) else Verdict.SOME_FAIL

    def hypothesis(self, name: str) -> Hypothesis:
        for h in self.hypotheses:
            if h.name == name:
                return h
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "theorem": self.theorem.value,
            "hypotheses": [h.to_dict() for h in self.hypotheses],
            "verdict": self.verdict.value,
            "evidence": "numeric (floating-point grid checks, non-rigorous)",
        }


# ---- ordering ----

def classify_ordering(feats_f: MapFeatures, feats_g: MapFeatures, tol: float = TOL_FP) -> OrderingClass:
    labelled = sorted([("Af", feats_f.A), ("Ag", feats_g.A), ("Kf", feats_f.K), ("Kg", feats_g.K)],
                      key=lambda kv: kv[1])
    ties = tuple((a[0], b[0]) for a, b in zip(labelled, labelled[1:]) if abs(b[1] - a[1]) <= tol)
    permutation = "".join(label for label, _ in labelled)
    if ties:
        ordering = Ordering.TIED
    else:
        try:
            ordering = Ordering(permutation)
        except ValueError:
            ordering = Ordering.OTHER
    return OrderingClass(ordering, permutation, tuple(labelled), ties)


# ---- delta-gap sets ----

def _below_gap(fn: Callable, gn: Callable) -> Callable:
    """x -> min(x - f(x), x - g(x))."""
    return lambda x: np.minimum(x - fn(x), x - gn(x))


def _above_gap(fn: Callable, gn: Callable) -> Callable:
    """x -> min(f(x) - x, g(x) - x)."""
    return lambda x: np.minimum(fn(x) - x, gn(x) - x)


def _refine(gap: Callable, delta: float, outside: float, inside: float) -> float:
    """Boundary of {gap >= delta} between a failing and a passing point, on the passing side."""
    h = lambda x: float(gap(x)) - delta
    if h(inside) == 0.0:
        return inside
    root = optimize.bisect(h, outside, inside, xtol=BOUNDARY_TOL)
    nudge = math.copysign(BOUNDARY_TOL, inside - outside)
    while h(root) < 0 and (inside - root) * nudge > 0:
        root += nudge
    return root


def _scan(gap: Callable, delta: float, grid: np.ndarray, region: np.ndarray) -> tuple[Interval, ...]:
    values = gap(grid)
    member = region & (values >= delta)
    intervals: list[Interval] = []
    n = len(grid)
    i = 0
    while i < n:
        if not member[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and member[j + 1]:
            j += 1
        lo, hi = float(grid[i]), float(grid[j])
        if i > 0 and region[i - 1]:
            lo = _refine(gap, delta, grid[i - 1], grid[i])
        if j < n - 1 and region[j + 1]:
            hi = _refine(gap, delta, grid[j + 1], grid[j])
        intervals.append((lo, hi))
        i = j + 1
    return tuple(intervals)


def _shared_bound(f: MapSpec, g: MapSpec) -> float:
    bf, bg = f.domain_bound, g.domain_bound
    if abs(bf - bg) > TOL_FP:
        raise ConfigurationError(f"f and g must share a domain bound (got {bf} and {bg}); see maps.build_pair")
    return bf


def theorem2_sets(f: MapSpec, g: MapSpec, delta: float, grid_n: int = SET_GRID_N) -> Theorem2Report:
    """
    Grid approximations of U1 in (0, A_f), U2 in (A_g, K_f), U3 in (K_g, b).

    Raises:
        PreconditionError: either map is not strictly increasing.
    """
    if delta <= 0:
        raise InputError(f"delta must be positive, got {delta}")
    ff, fg = maps.analyze(f), maps.analyze(g)
    if ff.unimodal or fg.unimodal:
        raise PreconditionError("theorem 2 sets are defined for strictly increasing maps")

    b = _shared_bound(f, g)
    fn, gn = maps.vectorized(f), maps.vectorized(g)
    below, above = _below_gap(fn, gn), _above_gap(fn, gn)
    grid = np.linspace(0.0, b, grid_n)

    U1 = _scan(below, delta, grid, (grid > 0) & (grid < ff.A))
    U2 = _scan(above, delta, grid, (grid > fg.A) & (grid < ff.K))
    U3 = _scan(below, delta, grid, (grid > fg.K) & (grid < b))

    # for every x some x* >= x has the below-gap: a suffix maximum
    suffix = np.maximum.accumulate(below(grid)[::-1])[::-1]
    tail_ok = bool(np.all(suffix >= delta))

    return Theorem2Report(
        delta=delta, U1=U1, U2=U2, U3=U3,
        w1=U1[0][0] if U1 else None,
        w2=U2[0][0] if U2 else None,
        w3=U3[0][0] if U3 else None,
        z1=U1[-1][1] if U1 else None,
        z2=U2[-1][1] if U2 else None,
        tail_ok=tail_ok, b=b,
    )


def theorem5_U(f: MapSpec, g: MapSpec, delta: float, grid_n: int = SET_GRID_N) -> SetScan:
    """U = {x in [0, min(A_f, A_g)] : min(x - f(x), x - g(x)) >= delta} and its infimum."""
    if delta <= 0:
        raise InputError(f"delta must be positive, got {delta}")
    ff, fg = maps.analyze(f), maps.analyze(g)
    top = min(ff.A, fg.A)
    grid = np.linspace(0.0, top, grid_n)
    gap = _below_gap(maps.vectorized(f), maps.vectorized(g))
    intervals = _scan(gap, delta, grid, np.ones_like(grid, dtype=bool))
    return SetScan(intervals, intervals[0][0] if intervals else None)


def noise_classifier(f: MapSpec, g: MapSpec, delta: float, window: int = WINDOW) -> Classifier:
    """
    Trap-based classifier for model (3) at noise size delta.

    Increasing pairs use the theorem 2 traps, unimodal pairs the set U.

    Raises:
        PreconditionError: a mixed pair, or the needed sets are empty.
    """
    ff, fg = maps.analyze(f), maps.analyze(g)
    if not ff.unimodal and not fg.unimodal:
        return theorem2_sets(f, g, delta).classifier(window)
    if ff.unimodal and fg.unimodal:
        return theorem5_U(f, g, delta).classifier(window)
    raise PreconditionError("no noise trap for a pair mixing increasing and unimodal maps")


# ---- unimodal hypotheses ----

def check_contraction_band(f: MapSpec, margin_grid: int = BAND_GRID_N) -> BandCheck:
    """
    sup |f'| over (B_f, M_f); holds iff the sup is below 1 - TOL_DERIV.

    The band mixes a domain point and a range value; when M_f <= B_f it is
    empty and the check holds vacuously (with a warning).
    """
    feats = maps.analyze(f)
    if not feats.unimodal:
        raise PreconditionError("the contraction band needs a unimodal map")
    B, M = feats.B, feats.M
    if M <= B:
        warnings.warn(f"contraction band ({B}, {M}) is empty; holds vacuously", RuntimeWarning, stacklevel=2)
        logger.warning("contraction band (%s, %s) is empty", B, M)
        return BandCheck(True, 0.0, None, None, vacuous=True)

    grid = np.linspace(B, M, margin_grid)
    slopes = np.abs(maps.derivative(f, grid))
    i = int(np.argmax(slopes))
    sup, argmax = float(slopes[i]), float(grid[i])

    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: -abs(maps.derivative(f, x)), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-12})
        if -res.fun > sup:
            sup, argmax = float(-res.fun), float(res.x)

    return BandCheck(sup < 1.0 - TOL_DERIV, sup, argmax, float(maps.derivative(f, M)))


def replay_composition(f: MapSpec, g: MapSpec, sequence, x: float) -> float:
    """h1(h2(...hm(x))) for a sequence of 'f'/'g' labels."""
    fns = {"f": maps.vectorized(f), "g": maps.vectorized(g)}
    value = float(x)
    for label in reversed(tuple(sequence)):
        if label not in fns:
            raise InputError(f"composition labels must be 'f' or 'g', got {label!r}")
        value = float(fns[label](value))
    return value


def search_composition(f: MapSpec, g: MapSpec, m_max: int = M_MAX) -> CompositionWitness | None:
    """
    Shortest h1..hm in {f, g} with h1(...hm(K_f)) < A_f.

    Breadth-first by length; among sequences of one length the
    lexicographically smallest (f before g) wins.
    """
    if m_max < 1:
        raise InputError(f"m_max must be at least 1, got {m_max}")
    feats = maps.analyze(f)
    start = np.array([feats.K])
    fns = (maps.vectorized(f), maps.vectorized(g))

    for m in range(1, m_max + 1):
        # bits[:, k] == 1 means h_{k+1} = g; rows are in lexicographic order
        codes = np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int8)
        values = np.repeat(start, len(codes))
        for k in reversed(range(m)):
            values = np.where(codes[:, k] == 0, fns[0](values), fns[1](values))
        hits = np.flatnonzero(values < feats.A)
        if len(hits):
            row = hits[0]
            sequence = tuple("g" if c else "f" for c in codes[row])
            return CompositionWitness(sequence, float(values[row]), m)
    return None


def check_t4_extra(f: MapSpec, g: MapSpec) -> T4Extra:
    """f(g(A_f)) compared with A_f."""
    A = maps.analyze(f).A
    value = replay_composition(f, g, ("f", "g"), A)
    if abs(value - A) <= TOL_FP:
        return T4Extra(False, value, "=")
    return T4Extra(True, value, "<" if value < A else ">")


# ---- aggregation ----

def _band_hypothesis(f: MapSpec) -> Hypothesis:
    band = check_contraction_band(f)
    return Hypothesis("contraction_band", band.holds, {
        "sup": band.sup_abs_derivative,
        "argmax": band.argmax,
        "f_prime_at_M": band.derivative_at_M,
        "vacuous": band.vacuous,
    })


def _witness_hypothesis(f: MapSpec, g: MapSpec, m_max: int, witness=None) -> Hypothesis:
    if witness is not None:
        sequence = tuple(witness)
        value = replay_composition(f, g, sequence, maps.analyze(f).K)
        return Hypothesis("composition_witness", value < maps.analyze(f).A,
                          {"sequence": ",".join(sequence), "value": value, "m": len(sequence), "searched": False})
    found = search_composition(f, g, m_max)
    if found is None:
        return Hypothesis("composition_witness", False, {"m_max": m_max, "searched": True})
    return Hypothesis("composition_witness", True,
                      {"sequence": found.label, "value": found.value, "m": found.m, "searched": True})


def certify(theorem: Theorem | str, f: MapSpec, g: MapSpec, delta: float | None = None,
            m_max: int = M_MAX, grid_n: int = SET_GRID_N, witness=None) -> CertificateReport:
    """
    Run the checks behind one theorem and bundle them.

    ``witness`` replays a given composition (labels 'f'/'g', outermost
    first) instead of searching for the shortest one.

    Raises:
        PreconditionError: the maps are of the wrong monotonicity class.
        InputError: T2 / T5 without a delta.
    """
    theorem = Theorem(theorem)
    f, g, _ = maps.build_pair(f, g)
    ff, fg = maps.analyze(f), maps.analyze(g)
    hypotheses: list[Hypothesis] = []

    if theorem in (Theorem.T1, Theorem.T2):
        if ff.unimodal or fg.unimodal:
            raise PreconditionError(f"{theorem.value} needs strictly increasing maps")
        order = classify_ordering(ff, fg)
        hypotheses.append(Hypothesis("both_increasing", True))
        hypotheses.append(Hypothesis("ordering_AfAgKfKg", order.ordering is Ordering.AF_AG_KF_KG,
                                     {"ordering": order.permutation}))
        if theorem is Theorem.T2:
            if delta is None:
                raise InputError("T2 needs a delta")
            sets = theorem2_sets(f, g, delta, grid_n)
            for name, found in (("U1_nonempty", sets.U1), ("U2_nonempty", sets.U2), ("U3_nonempty", sets.U3)):
                hypotheses.append(Hypothesis(name, bool(found), {"intervals": [list(i) for i in found]}))
            hypotheses.append(Hypothesis("tail_condition", sets.tail_ok, {"delta": delta}))
        return CertificateReport(theorem, tuple(hypotheses))

    if not (ff.unimodal and fg.unimodal):
        raise PreconditionError(f"{theorem.value} needs unimodal maps")

    if theorem is Theorem.T3:
        hypotheses.append(Hypothesis("A_f<A_g", ff.A < fg.A, {"A_f": ff.A, "A_g": fg.A}))
    elif theorem is Theorem.T4:
        hypotheses.append(Hypothesis("A_g<A_f", fg.A < ff.A, {"A_f": ff.A, "A_g": fg.A}))

    hypotheses.append(_band_hypothesis(f))
    hypotheses.append(_witness_hypothesis(f, g, m_max, witness))

    if theorem is Theorem.T4:
        extra = check_t4_extra(f, g)
        hypotheses.append(Hypothesis("f(g(A_f))!=A_f", extra.holds, {"value": extra.value, "branch": extra.branch}))
    elif theorem is Theorem.T5:
        if delta is None:
            raise InputError("T5 needs a delta")
        U = theorem5_U(f, g, delta, grid_n)
        hypotheses.append(Hypothesis("U_nonempty", bool(U.intervals),
                                     {"inf_U": U.inf, "intervals": [list(i) for i in U.intervals]}))

    return CertificateReport(theorem, tuple(hypotheses))
