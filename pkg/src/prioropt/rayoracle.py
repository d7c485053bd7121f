"""Ray objective g(theta) against a hard-label oracle.

``g(theta)`` is the distance from ``x`` along the unit ray ``theta`` to the first
adversarial point. Every function here that touches the oracle returns the
number of queries it spent alongside its result, so callers can keep an
independent account of the ledger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidBracket, NoCrossing

LAMBDA_MIN = 1e-3
LAMBDA_MAX = 200.0
DEFAULT_TOL = 1e-4
DEFAULT_SIGMA = 1e-3


@dataclass(frozen=True, eq=False)
class AttackGoal:
    """Benign point ``x`` with true label ``y``; ``target`` set for targeted attacks."""

    x: np.ndarray
    y: int
    target: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        if self.target is not None and self.target == self.y:
            raise ValueError("target class must differ from the true label")

    @property
    def targeted(self) -> bool:
        return self.target is not None

    def is_success(self, label: int) -> bool:
        if self.target is not None:
            return label == self.target
        return label != self.y

    def retarget(self, target: int) -> "AttackGoal":
        return AttackGoal(self.x, self.y, target)


@dataclass(frozen=True, eq=False)
class RayState:
    theta: np.ndarray
    radius: float

    def point(self, x) -> np.ndarray:
        return x + self.radius * self.theta


class Bracket(NamedTuple):
    lo: float  # last tested radius with phi == 0
    hi: float  # first tested radius with phi == 1
    queries: int


def phi(oracle, point, goal: AttackGoal) -> int:
    return int(goal.is_success(oracle.predict(point)))


def _bisect(test: Callable[[float], bool], lo: float, hi: float, tol: float) -> tuple[float, int]:
    """Shrink ``[lo, hi]`` (``test(hi)`` true) to width <= tol; returns (hi, evaluations)."""
    width = hi - lo
    n = max(0, math.ceil(math.log2(width / tol))) if width > tol else 0
    for _ in range(n):
        mid = 0.5 * (lo + hi)
        if test(mid):
            hi = mid
        else:
            lo = mid
    return hi, n


def find_upper_radius(oracle, x, theta, goal: AttackGoal, lambda_hint: float | None = None,
                      lambda_min: float = LAMBDA_MIN, lambda_max: float = LAMBDA_MAX) -> Bracket:
    """First radius with phi == 1 on the doubling ladder from the hint (or ``lambda_min``).

    The last probe is clamped to ``lambda_max``; raises ``NoCrossing`` (with the
    spent count in ``.queries``) if nothing on the ladder is adversarial.
    """
    lam = max(lambda_hint or 0.0, lambda_min)
    lo, n = 0.0, 0
    while True:
        lam = min(lam, lambda_max)
        n += 1
        if phi(oracle, x + lam * theta, goal):
            return Bracket(lo, lam, n)
        if lam >= lambda_max:
            err = NoCrossing(f"no adversarial point up to lambda={lambda_max}")
            err.queries = n
            raise err
        lo, lam = lam, 2.0 * lam


def binary_search_radius(oracle, x, theta, goal: AttackGoal, lambda_hi: float, tol: float = DEFAULT_TOL,
                         lambda_lo: float = 0.0, verify: bool = False) -> tuple[float, int]:
    """Bisect ``[lambda_lo, lambda_hi]`` down to width ``tol``; returns (radius, queries).

    Spends exactly ``ceil(log2((hi - lo) / tol))`` queries, plus one up-front
    check of the upper end when ``verify`` is set.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    spent = 0
    if verify:
        spent += 1
        if not phi(oracle, x + lambda_hi * theta, goal):
            raise InvalidBracket(f"phi(x + {lambda_hi:g} theta) is 0")
    r, n = _bisect(lambda lam: bool(phi(oracle, x + lam * theta, goal)), lambda_lo, lambda_hi, tol)
    return r, spent + n


def ray_radius(oracle, x, theta, goal: AttackGoal, tol: float = DEFAULT_TOL,
               lambda_hint: float | None = None, lambda_max: float = LAMBDA_MAX) -> tuple[float, int]:
    """``g(theta)`` via doubling then bisection; ``inf`` when the ray never crosses."""
    try:
        br = find_upper_radius(oracle, x, theta, goal, lambda_hint, lambda_max=lambda_max)
    except NoCrossing as err:
        return math.inf, err.queries
    r, n = binary_search_radius(oracle, x, theta, goal, br.hi, tol, lambda_lo=br.lo)
    return r, br.queries + n


def radius_below(oracle, x, theta, goal: AttackGoal, bound: float, tol: float = DEFAULT_TOL,
                 shrink: float = 0.9) -> tuple[float, int]:
    """``g(theta)`` if it does not exceed ``bound``, else ``inf``.

    One probe at ``bound`` settles the comparison; when it succeeds the lower
    end is walked down geometrically by ``shrink`` before bisecting.
    """
    n = 1
    if not phi(oracle, x + bound * theta, goal):
        return math.inf, n
    hi, lo = bound, bound * shrink
    while lo > tol:
        n += 1
        if not phi(oracle, x + lo * theta, goal):
            break
        hi, lo = lo, lo * shrink
    else:
        lo = 0.0
    r, m = _bisect(lambda lam: bool(phi(oracle, x + lam * theta, goal)), lo, hi, tol)
    return r, n + m


def sign_query(oracle, x, theta, g_theta: float, u, sigma: float, goal: AttackGoal) -> int:
    """Sign of ``g(theta + sigma u) - g(theta)`` from a single query.

    Probes the tilted ray at the current radius: if it is still not adversarial
    there, the tilted radius is larger (+1), otherwise -1.
    """
    tilted = theta + sigma * u
    tilted = tilted / np.linalg.norm(tilted)
    return 1 if phi(oracle, x + g_theta * tilted, goal) == 0 else -1


def distortion(x, theta, radius: float, p: float = 2) -> float:
    """``|radius * theta|_p`` for unit ``theta``."""
    if p == 2:
        return float(radius)
    if p in (math.inf, "inf"):
        return float(radius * np.max(np.abs(theta)))
    raise ValueError(f"unsupported norm p={p}")


def resolve_tol(tol: float, radius: float, mode: str = "absolute") -> float:
    """Bisection tolerance; ``relative`` mode scales ``tol`` by the current radius."""
    if mode == "absolute":
        return tol
    if mode == "relative":
        return tol * radius if math.isfinite(radius) and radius > 0 else tol
    raise ValueError(f"unknown tolerance mode {mode!r}")
