"""Transfer-based priors from white-box surrogate models.

None of these functions touch the target oracle; surrogate predictions are free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateBoundary, NoCrossing, TargetedPriorFail
from .modelzoo import HardLabelOracle, cw_loss_and_grad
from .rayoracle import LAMBDA_MAX, AttackGoal, _bisect, ray_radius
from .vecmath import normalize

SURROGATE_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class SurrogatePrior:
    k: np.ndarray
    lambda0: float
    source: int
    new_target: int | None = None
    dh_dlambda: float = math.nan


class TargetedSetup(NamedTuple):
    new_target: int
    lambda0: float
    fallback: bool


def _loss_label(goal: AttackGoal) -> int:
    return goal.target if goal.targeted else goal.y


def surrogate_radius(surrogate, x, theta, goal: AttackGoal, tol: float = SURROGATE_TOL,
                     lambda_max: float = LAMBDA_MAX) -> float:
    """The surrogate's own ``g(theta)``; raises ``NoCrossing`` if the ray misses."""
    free = HardLabelOracle(surrogate)
    r, _ = ray_radius(free, x, normalize(theta), goal, tol=tol, lambda_max=lambda_max)
    if not math.isfinite(r):
        raise NoCrossing("ray misses the surrogate's adversarial region")
    return r


def surrogate_ray_gradient(surrogate, x, theta, lambda0: float, goal: AttackGoal):
    """Gradient in ``theta`` of ``h(theta, lam) = margin(x + lam theta/|theta|)`` at fixed ``lam``.

    Returns ``(k, dh_dlambda)``; at a boundary point the ray-radius gradient is
    ``-k / dh_dlambda`` (see :func:`implicit_ray_gradient`).
    """
    theta = np.asarray(theta, dtype=float)
    n = np.linalg.norm(theta)
    t = theta / n
    _, G = cw_loss_and_grad(surrogate, x + lambda0 * t, _loss_label(goal), goal.targeted)
    dh = float(G @ t)
    # d(theta/|theta|)/d theta = (I - t t^T) / |theta|
    k = (lambda0 / n) * (G - dh * t)
    return k, dh


def implicit_ray_gradient(k, dh_dlambda: float) -> np.ndarray:
    if abs(dh_dlambda) < 1e-12:
        raise DegenerateBoundary("margin is flat along the ray at the boundary")
    return -np.asarray(k) / dh_dlambda


def _first_hit(surrogate, x, t, lams, hit) -> int | None:
    labels = surrogate.predict_batch(x[None, :] + lams[:, None] * t[None, :])
    idx = np.nonzero(hit(labels))[0]
    return int(idx[0]) if idx.size else None


def targeted_prior_setup(surrogate, x, theta, lambda_f: float, goal: AttackGoal,
                         grid: int = 400, lambda_max: float = LAMBDA_MAX,
                         tol: float = 1e-4) -> TargetedSetup:
    """Pick the surrogate-side target class and entry radius for a targeted prior.

    First the surrogate label at ``lambda_f + 1`` along ``theta`` is tried; if it
    is the true label, the first non-``y`` region within ``lambda_max`` is used.
    Scans use spacing ``lambda_max / grid`` and are refined by bisection.
    """
    t = normalize(theta)
    step = lambda_max / grid
    y = goal.y

    def refine(lams, i, label):
        lo = 0.0 if i == 0 else float(lams[i - 1])
        r, _ = _bisect(lambda lam: surrogate.predict(x + lam * t) == label, lo, float(lams[i]), tol)
        return r

    reach = lambda_f + 1.0
    cand = surrogate.predict(x + reach * t)
    if cand != y:
        lams = np.append(np.arange(1, int(reach / step) + 1) * step, reach)
        lams = lams[lams <= reach]
        i = _first_hit(surrogate, x, t, lams, lambda lab: lab == cand)
        return TargetedSetup(int(cand), refine(lams, i, cand), False)

    lams = np.arange(1, grid + 1) * step
    i = _first_hit(surrogate, x, t, lams, lambda lab: lab != y)
    if i is None:
        raise TargetedPriorFail(f"surrogate predicts y={y} along the whole ray up to {lambda_max}")
    label = int(surrogate.predict(x + lams[i] * t))
    return TargetedSetup(label, refine(lams, i, label), True)


def acquire_prior(surrogate, x, theta, goal: AttackGoal, source: int = 0,
                  lambda_f: float | None = None, tol: float = SURROGATE_TOL) -> SurrogatePrior:
    """One prior ``k`` from ``surrogate`` at the current direction.

    Raises ``NoCrossing`` / ``TargetedPriorFail`` when the surrogate offers none.
    """
    if goal.targeted:
        setup = targeted_prior_setup(surrogate, x, theta, lambda_f, goal)
        sgoal = goal.retarget(setup.new_target) if setup.new_target != goal.y else goal
        lam0, new_target = setup.lambda0, setup.new_target
    else:
        sgoal, new_target = goal, None
        lam0 = surrogate_radius(surrogate, x, theta, goal, tol=tol)
    k, dh = surrogate_ray_gradient(surrogate, x, theta, lam0, sgoal)
    return SurrogatePrior(k, lam0, source, new_target, dh)


def pgd_init(surrogate, x, goal: AttackGoal, step_size: float = 0.01, steps: int = 40,
             norm: float = 2, box: bool = False) -> np.ndarray:
    """Direction of a PGD perturbation that lowers the surrogate's true-class margin.

    ``norm=2`` takes normalized-gradient steps of length ``step_size*sqrt(d)``;
    ``norm=inf`` takes sign steps of ``step_size`` per coordinate. Raises
    ``ZeroVector`` if the perturbation vanishes (e.g. ``steps=0``).
    """
    if goal.targeted:
        raise ValueError("PGD initialization supports untargeted goals only")
    x = np.asarray(x, dtype=float)
    xa = x.copy()
    scale = step_size * math.sqrt(x.size)
    for _ in range(steps):
        _, G = cw_loss_and_grad(surrogate, xa, goal.y)
        if norm == 2:
            gn = np.linalg.norm(G)
            if gn == 0:
                break
            xa = xa - scale * G / gn
        else:
            xa = xa - step_size * np.sign(G)
        if box:
            xa = np.clip(xa, 0.0, 1.0)
    return normalize(xa - x)
