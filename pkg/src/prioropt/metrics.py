"""Budget-sliced summaries of distortion-versus-queries traces."""

from __future__ import annotations

import math

import numpy as np

from .errors import EmptySuite, EmptyTrace

EPSILON_PRESETS = {"cifar": 1.0}


def default_epsilon(d: int) -> float:
    return math.sqrt(0.001 * d)


def _points(trace):
    return getattr(trace, "points", trace)


def best_at(trace, budget: float) -> float:
    """Best distortion recorded with at most ``budget`` queries; ``inf`` if none yet."""
    best = math.inf
    for q, dist in _points(trace):
        if q > budget:
            break
        best = dist
    return best


def mean_distortion_at(traces, budget: float) -> float:
    """Mean best distortion at ``budget`` over traces that have a finite value there."""
    if not traces:
        raise EmptySuite("no traces")
    vals = [best_at(t, budget) for t in traces]
    finite = [v for v in vals if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.inf


def excluded_at(traces, budget: float) -> int:
    """Number of traces left out of :func:`mean_distortion_at` (no finite distortion yet)."""
    return sum(1 for t in traces if not math.isfinite(best_at(t, budget)))


def asr(traces, budget: float, epsilon: float) -> float:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not traces:
        raise EmptySuite("no traces")
    return sum(1 for t in traces if best_at(t, budget) < epsilon) / len(traces)


def auc(trace, budget_max: float) -> float:
    """Area under the left-constant best-so-far curve over ``[0, budget_max]``.

    The first recorded distortion is extended back to query 0.
    """
    pts = _points(trace)
    if not pts:
        raise EmptyTrace("trace has no points")
    area, prev_q, prev_d = 0.0, 0.0, pts[0][1]
    for q, dist in pts:
        if q >= budget_max:
            break
        area += prev_d * (q - prev_q)
        prev_q, prev_d = q, dist
    return area + prev_d * (budget_max - prev_q)
