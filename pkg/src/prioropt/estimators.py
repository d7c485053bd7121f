"""Gradient estimators for the ray objective over a shared orthonormal frame.

All estimators read ``g`` through a *probe*:

* :class:`QueryProbe` spends oracle queries (one per sign, a bracketed
  bisection per finite difference);
* :class:`ExactProbe` answers from a known gradient, which is the regime the
  closed-form cosine results are stated in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig
from .rayoracle import DEFAULT_SIGMA, DEFAULT_TOL, LAMBDA_MAX, AttackGoal, RayState, ray_radius, resolve_tol, sign_query
from .vecmath import OrthonormalFrame, gram_schmidt

KINDS = ("sign_opt", "prior_sign_opt", "prior_opt", "pure_prior_sign", "pure_prior")
PRIOR_KINDS = KINDS[1:]


@dataclass
class EstimatorConfig:
    kind: str = "prior_opt"
    q: int = 20
    sigma: float = DEFAULT_SIGMA
    bs_tol: float = DEFAULT_TOL
    tol_mode: str = "absolute"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown estimator kind {self.kind!r}")
        if self.q < 1:
            raise InvalidConfig("q must be >= 1")
        if not self.sigma > 0:
            raise InvalidConfig("sigma must be positive")
        if not self.bs_tol > 0:
            raise InvalidConfig("bs_tol must be positive")


@dataclass
class GradientEstimate:
    v_star: np.ndarray
    frame: OrthonormalFrame
    coefficients: np.ndarray
    n_priors: int
    queries_spent: int = 0
    fd_queries: list[int] = field(default_factory=list)
    events: list[str] = field(default_factory=list)


class ExactProbe:
    """Directional information from a known gradient; costs no queries."""

    def __init__(self, grad):
        self.grad = np.asarray(grad, dtype=float)
        self.queries = 0
        self.fd_queries: list[int] = []
        self.events: list[str] = []

    def sign(self, u) -> int:
        return 1 if float(self.grad @ u) >= 0.0 else -1

    def signs(self, U) -> np.ndarray:
        return np.where(U @ self.grad >= 0.0, 1.0, -1.0)

    def slope(self, w) -> float:
        return float(self.grad @ w)


class QueryProbe:
    """Directional information from hard-label queries at the state ``(theta, g(theta))``."""

    def __init__(self, oracle, goal: AttackGoal, state: RayState, sigma: float = DEFAULT_SIGMA,
                 tol: float = DEFAULT_TOL, tol_mode: str = "absolute", lambda_max: float = LAMBDA_MAX):
        self.oracle, self.goal, self.state = oracle, goal, state
        self.sigma = sigma
        self.tol = resolve_tol(tol, state.radius, tol_mode)
        self.lambda_max = lambda_max
        self.queries = 0
        self.fd_queries: list[int] = []
        self.events: list[str] = []

    def sign(self, u) -> int:
        s = sign_query(self.oracle, self.goal.x, self.state.theta, self.state.radius, u, self.sigma, self.goal)
        self.queries += 1
        return s

    def signs(self, U) -> np.ndarray:
        return np.array([self.sign(u) for u in U], dtype=float)

    def slope(self, w) -> float:
        """``(g(theta + sigma w) - g(theta)) / sigma``."""
        tilted = self.state.theta + self.sigma * w
        tilted = tilted / np.linalg.norm(tilted)
        r, n = ray_radius(self.oracle, self.goal.x, tilted, self.goal, tol=self.tol,
                          lambda_hint=self.state.radius, lambda_max=self.lambda_max)
        self.queries += n
        self.fd_queries.append(n)
        if not math.isfinite(r):
            self.events.append("infinite_tilt")
            return 10.0 * self.state.radius / self.sigma
        return (r - self.state.radius) / self.sigma


def _prior_matrix(priors, d: int) -> np.ndarray:
    rows = [np.asarray(getattr(p, "k", p), dtype=float) for p in priors]
    return np.vstack(rows) if rows else np.zeros((0, d))


def build_frame(priors, q: int, d: int, rng: np.random.Generator) -> tuple[OrthonormalFrame, int]:
    """Gram-Schmidt over ``priors`` followed by ``q - s`` Gaussian vectors.

    Priors that collapse (zero or dependent) are dropped and replaced by
    random vectors, so the frame still has ``q`` rows. Returns the frame and
    the number of surviving priors.
    """
    K = _prior_matrix(priors, d)
    s = gram_schmidt(K).size if K.shape[0] else 0
    if q < s:
        raise InvalidConfig(f"q={q} is smaller than the number of priors s={s}")
    R = rng.standard_normal((q - s, d))
    frame = gram_schmidt(np.vstack([K, R]))
    n_priors = sum(1 for src in frame.sources if src < K.shape[0])
    return frame, n_priors


def _finish(v, frame, coeffs, s, probe, q0) -> GradientEstimate:
    return GradientEstimate(v, frame, np.asarray(coeffs, dtype=float), s, probe.queries - q0,
                            list(probe.fd_queries), list(probe.events))


def estimate_sign_opt(probe, cfg: EstimatorConfig, rng: np.random.Generator, d: int) -> GradientEstimate:
    """``sum_i sign(D_u_i g) u_i`` over ``q`` random orthonormal directions."""
    if cfg.q < 1:
        raise InvalidConfig("q must be >= 1")
    q0 = probe.queries
    frame, _ = build_frame([], cfg.q, d, rng)
    signs = probe.signs(frame.basis)
    return _finish(signs @ frame.basis, frame, signs, 0, probe, q0)


def estimate_prior_sign_opt(probe, cfg: EstimatorConfig, priors, rng: np.random.Generator,
                            d: int) -> GradientEstimate:
    """Signs along the orthonormalized priors and the random complement directions alike."""
    q0 = probe.queries
    frame, s = build_frame(priors, cfg.q, d, rng)
    signs = probe.signs(frame.basis)
    return _finish(signs @ frame.basis, frame, signs, s, probe, q0)


def estimate_prior_opt(probe, cfg: EstimatorConfig, priors, rng: np.random.Generator,
                       d: int) -> GradientEstimate:
    """Finite differences along each prior and along the aggregated sign vector.

    The random directions are folded into ``v_perp = sum sign(D_u g) u`` and only
    its normalized direction gets a finite difference, so the cost is ``q - s``
    sign queries plus ``s + 1`` bracketed bisections.
    """
    q0 = probe.queries
    frame, s = build_frame(priors, cfg.q, d, rng)
    if s == cfg.q:
        return estimate_pure_prior(probe, cfg, priors, rng, d, mode="finite_diff")
    P, U = frame.basis[:s], frame.basis[s:]
    signs = probe.signs(U)
    v_perp = signs @ U
    v_perp_unit = v_perp / np.linalg.norm(v_perp)
    coeffs = [probe.slope(p) for p in P]
    c_perp = probe.slope(v_perp_unit)
    v = (np.asarray(coeffs) @ P if s else np.zeros(d)) + c_perp * v_perp_unit
    return _finish(v, frame, np.concatenate([coeffs, [c_perp], signs]), s, probe, q0)


def estimate_pure_prior(probe, cfg: EstimatorConfig, priors, rng: np.random.Generator | None,
                        d: int, mode: str = "sign") -> GradientEstimate:
    """Priors only: ``sign`` mode spends one query per prior, ``finite_diff`` a bisection each."""
    q0 = probe.queries
    K = _prior_matrix(priors, d)
    frame = gram_schmidt(K) if K.shape[0] else OrthonormalFrame(np.zeros((0, d)))
    s = frame.size
    if s == 0:
        est = _finish(np.zeros(d), frame, np.zeros(0), 0, probe, q0)
        est.events.append("no_priors")
        return est
    if mode == "sign":
        coeffs = probe.signs(frame.basis)
    elif mode == "finite_diff":
        coeffs = np.array([probe.slope(p) for p in frame.basis])
    else:
        raise InvalidConfig(f"unknown pure-prior mode {mode!r}")
    return _finish(coeffs @ frame.basis, frame, coeffs, s, probe, q0)


def estimate(probe, cfg: EstimatorConfig, priors, rng: np.random.Generator, d: int) -> GradientEstimate:
    """Dispatch on ``cfg.kind``."""
    if cfg.kind == "sign_opt":
        return estimate_sign_opt(probe, cfg, rng, d)
    if cfg.kind == "prior_sign_opt":
        return estimate_prior_sign_opt(probe, cfg, priors, rng, d)
    if cfg.kind == "prior_opt":
        return estimate_prior_opt(probe, cfg, priors, rng, d)
    if cfg.kind == "pure_prior_sign":
        return estimate_pure_prior(probe, cfg, priors, rng, d, mode="sign")
    if cfg.kind == "pure_prior":
        return estimate_pure_prior(probe, cfg, priors, rng, d, mode="finite_diff")
    raise InvalidConfig(f"unknown estimator kind {cfg.kind!r}")
