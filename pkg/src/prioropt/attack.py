"""Hard-label ray-search attack loop with optional surrogate priors."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (BadExemplar, BudgetExhausted, DegenerateBoundary, InitFailed, InvalidConfig, NoCrossing,
                     NoImprovement, TargetedPriorFail, ZeroVector)
from .estimators import PRIOR_KINDS, EstimatorConfig, QueryProbe, estimate
from .priors import acquire_prior, pgd_init
from .rayoracle import (LAMBDA_MAX, AttackGoal, RayState, binary_search_radius, distortion, phi, radius_below,
                        ray_radius, resolve_tol)
from .vecmath import make_rng, normalize

INIT_KINDS = ("rnd", "pgd", "targeted")
CHECKPOINT_EVERY = 100


@dataclass
class AttackConfig:
    method: str = "prior_opt"
    init: str = "rnd"
    n_init: int = 100
    exemplar: np.ndarray | None = None
    T: int = 1000
    g_max: float = 0.1
    p: float = 2
    budget: int = 5000
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    seed: int = 0
    eta_init: float = 0.2
    max_doublings: int = 8
    max_halvings: int = 12
    stall_patience: int = 3
    sigma_floor: float = 1e-5
    lambda_max: float = LAMBDA_MAX

    def __post_init__(self):
        if self.estimator.kind != self.method:
            self.estimator = dataclasses.replace(self.estimator, kind=self.method)
        if self.init not in INIT_KINDS:
            raise InvalidConfig(f"init must be one of {INIT_KINDS}")
        if self.init == "targeted" and self.exemplar is None:
            raise InvalidConfig("targeted init needs an exemplar")
        if self.T < 1:
            raise InvalidConfig("T must be >= 1")
        if not self.g_max > 0:
            raise InvalidConfig("g_max must be positive")
        if self.budget < 1:
            raise InvalidConfig("budget must be >= 1")
        if self.p not in (2, math.inf):
            raise InvalidConfig("p must be 2 or inf")
        if self.n_init < 1:
            raise InvalidConfig("n_init must be >= 1")


class CostEntry(NamedTuple):
    phase: str
    declared: int  # cost computed from the phase's own counters
    ledger_delta: int
    partial: bool  # cut short by the budget; declared is then the ledger delta


@dataclass
class AttackTrace:
    points: list[tuple[int, float]] = field(default_factory=list)
    final_theta: np.ndarray | None = None
    final_radius: float = math.inf
    success: bool = False
    costs: list[CostEntry] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    iterations: int = 0
    queries: int = 0

    def record(self, queries: int, best: float) -> None:
        """Add checkpoints up to ``queries`` at the previous best, then the new point if it moved."""
        last_q, last_d = self.points[-1] if self.points else (0, math.inf)
        if queries <= last_q:
            return
        c = (last_q // CHECKPOINT_EVERY + 1) * CHECKPOINT_EVERY
        while c < queries:
            if self.points:
                self.points.append((c, last_d))
            c += CHECKPOINT_EVERY
        if best < last_d or queries % CHECKPOINT_EVERY == 0:
            self.points.append((queries, min(best, last_d)))

    def finish(self, queries: int) -> None:
        self.queries = queries
        if self.points:
            self.record(queries, self.points[-1][1])
            if self.points[-1][0] != queries:
                self.points.append((queries, self.points[-1][1]))

    @property
    def best_distortion(self) -> float:
        return self.points[-1][1] if self.points else math.inf


def clip_grad_norm(v, g_max: float) -> np.ndarray:
    if not g_max > 0:
        raise InvalidConfig("g_max must be positive")
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    return v * (g_max / n) if n > g_max else v


# ---------------------------------------------------------------- initialization


def init_random_directions(oracle, goal: AttackGoal, n: int, rng: np.random.Generator,
                           tol: float = 1e-4, lambda_max: float = LAMBDA_MAX) -> tuple[RayState, int]:
    """Best of ``n`` Gaussian directions; returns the state and the queries spent.

    The first direction that crosses gets a full radius search; later ones
    only need to beat the current best, which one probe usually rules out.
    """
    if n < 1:
        raise InvalidConfig("n must be >= 1")
    best, spent = None, 0
    try:
        for _ in range(n):
            theta = normalize(rng.standard_normal(goal.x.size))
            if best is None:
                r, k = ray_radius(oracle, goal.x, theta, goal, tol=tol, lambda_max=lambda_max)
            else:
                r, k = radius_below(oracle, goal.x, theta, goal, best.radius, tol)
            spent += k
            if math.isfinite(r) and (best is None or r < best.radius):
                best = RayState(theta, r)
    except BudgetExhausted as err:
        err.best = best
        raise
    if best is None:
        raise InitFailed(f"none of {n} random directions reaches the adversarial region")
    return best, spent


def init_targeted(oracle, goal: AttackGoal, exemplar, tol: float = 1e-4) -> tuple[RayState, int]:
    """Direction toward a target-class exemplar, radius by bisection below its distance."""
    if not goal.targeted:
        raise InvalidConfig("targeted init needs a targeted goal")
    exemplar = np.asarray(exemplar, dtype=float)
    if not phi(oracle, exemplar, goal):
        raise BadExemplar("exemplar is not classified as the target class")
    delta = exemplar - goal.x
    hi = float(np.linalg.norm(delta))
    theta = normalize(delta)
    r, k = binary_search_radius(oracle, goal.x, theta, goal, hi, tol)
    return RayState(theta, r), k + 1


# ---------------------------------------------------------------- line search


class LineSearchResult(NamedTuple):
    eta: float
    state: RayState
    queries: int
    candidates: list[tuple[float, float]]  # (eta, radius or inf)


def line_search(oracle, state: RayState, goal: AttackGoal, v_star, eta_init: float | None = None,
                tol: float = 1e-4, max_doublings: int = 8, max_halvings: int = 12) -> LineSearchResult:
    """Step ``theta <- normalize(theta - eta v*)`` with geometric search over ``eta``.

    Doubles ``eta`` while the radius keeps improving; if the first step fails,
    halves it instead. Each candidate is measured only below the best radius so
    far. Raises ``NoImprovement`` when nothing beats ``state.radius``.
    On ``BudgetExhausted`` the best state found so far is attached as ``.best``.
    """
    v_star = np.asarray(v_star, dtype=float)
    vn = float(np.linalg.norm(v_star))
    if vn == 0:
        raise ZeroVector("search direction is zero")
    if not math.isfinite(state.radius):
        raise ValueError("line search needs a finite radius")
    eta = eta_init if eta_init is not None else 0.2 / vn
    best, best_eta, spent, cands = state, None, 0, []

    def trial(e):
        nonlocal spent
        th = normalize(state.theta - e * v_star)
        r, k = radius_below(oracle, goal.x, th, goal, best.radius, tol)
        spent += k
        cands.append((e, r))
        return RayState(th, r)

    try:
        cand = trial(eta)
        if cand.radius < best.radius:
            best, best_eta = cand, eta
            for _ in range(max_doublings):
                cand = trial(2.0 * best_eta)
                if not cand.radius < best.radius:
                    break
                best, best_eta = cand, 2.0 * best_eta
        else:
            for _ in range(max_halvings):
                eta *= 0.5
                cand = trial(eta)
                if cand.radius < best.radius:
                    best, best_eta = cand, eta
                    break
    except BudgetExhausted as err:
        err.best = best if best_eta is not None else None
        err.eta = best_eta
        raise
    if best_eta is None:
        raise NoImprovement(f"no improving step among {len(cands)} candidates", spent)
    return LineSearchResult(best_eta, best, spent, cands)


# ---------------------------------------------------------------- main loop


def _declared_estimator_cost(kind: str, est) -> int:
    if kind in ("sign_opt", "prior_sign_opt"):
        return est.frame.size
    if kind == "pure_prior_sign":
        return est.n_priors
    if kind == "pure_prior":
        return sum(est.fd_queries)
    if est.n_priors == est.frame.size:  # prior_opt degenerated to finite differences only
        return sum(est.fd_queries)
    return est.frame.size - est.n_priors + sum(est.fd_queries)


def _init(oracle, goal, surrogates, cfg, rng, tol):
    if cfg.init == "targeted":
        return init_targeted(oracle, goal, cfg.exemplar, tol)
    if cfg.init == "pgd":
        if not surrogates:
            raise InvalidConfig("PGD init needs a surrogate")
        theta = pgd_init(surrogates[0], goal.x, goal)
        r, k = ray_radius(oracle, goal.x, theta, goal, tol=tol, lambda_max=cfg.lambda_max)
        if not math.isfinite(r):
            raise InitFailed("PGD direction does not reach the target's adversarial region")
        return RayState(theta, r), k
    return init_random_directions(oracle, goal, cfg.n_init, rng, tol, cfg.lambda_max)


def run_attack(oracle, goal: AttackGoal, surrogates, cfg: AttackConfig,
               rng: np.random.Generator | None = None) -> AttackTrace:
    """Run the attack until ``cfg.T`` iterations, the query budget, or a persistent stall.

    ``oracle.ledger`` is capped at ``cfg.budget`` for the duration of the run.
    The returned trace carries a cost log with one entry per query-spending
    phase; a phase cut short by the budget is marked ``partial``.
    """
    surrogates = list(surrogates)
    if cfg.method in PRIOR_KINDS and not surrogates:
        raise InvalidConfig(f"{cfg.method} needs at least one surrogate")
    rng = rng if rng is not None else make_rng(cfg.seed)
    ledger = oracle.ledger
    ledger.budget = ledger.count + cfg.budget
    q_start = ledger.count
    trace = AttackTrace()
    est_cfg = cfg.estimator
    tol0 = est_cfg.bs_tol

    def used():
        return ledger.count - q_start

    def log(phase, declared, before, partial=False):
        trace.costs.append(CostEntry(phase, declared, ledger.count - before, partial))

    def dist(st):
        return distortion(goal.x, st.theta, st.radius, cfg.p)

    before = ledger.count
    try:
        state, k = _init(oracle, goal, surrogates, cfg, rng, tol0)
    except BudgetExhausted as err:
        log("init", ledger.count - before, before, partial=True)
        trace.events.append("budget_exhausted")
        state = getattr(err, "best", None)
        if state is not None:
            trace.record(used(), dist(state))
            trace.final_theta, trace.final_radius, trace.success = state.theta, state.radius, True
        trace.finish(used())
        return trace
    log("init", k, before)
    trace.record(used(), dist(state))

    eta = None
    stalls, sigma_halved = 0, False
    try:
        for it in range(cfg.T):
            trace.iterations = it + 1
            tol = resolve_tol(tol0, state.radius, est_cfg.tol_mode)
            priors = []
            if cfg.method in PRIOR_KINDS:
                before = ledger.count
                for i, sur in enumerate(surrogates):
                    try:
                        priors.append(acquire_prior(sur, goal.x, state.theta, goal, source=i,
                                                    lambda_f=state.radius))
                    except (NoCrossing, TargetedPriorFail, DegenerateBoundary, ZeroVector) as err:
                        trace.events.append(f"prior_skipped:{i}:{type(err).__name__}")
                log("prior", 0, before)

            probe = QueryProbe(oracle, goal, state, est_cfg.sigma, tol, "absolute", cfg.lambda_max)
            before = ledger.count
            try:
                est = estimate(probe, est_cfg, priors, rng, goal.x.size)
            except BudgetExhausted:
                log("estimate", ledger.count - before, before, partial=True)
                raise
            log("estimate", _declared_estimator_cost(est_cfg.kind, est), before)
            trace.events.extend(est.events)
            trace.record(used(), trace.best_distortion)

            v = clip_grad_norm(est.v_star, cfg.g_max)
            if not np.any(v):
                trace.events.append("zero_estimate")
                improved = False
            else:
                before = ledger.count
                try:
                    ls = line_search(oracle, state, goal, v, eta if eta is not None else cfg.eta_init / np.linalg.norm(v),
                                     tol, cfg.max_doublings, cfg.max_halvings)
                    log("line_search", ls.queries, before)
                    eta, state, improved = ls.eta, ls.state, True
                except NoImprovement as err:
                    log("line_search", err.queries, before)
                    improved = False
                except BudgetExhausted as err:
                    log("line_search", ledger.count - before, before, partial=True)
                    if getattr(err, "best", None) is not None:
                        state = err.best
                    raise
            trace.record(used(), min(trace.best_distortion, dist(state)))

            if improved:
                stalls = 0
                continue
            stalls += 1
            if stalls >= cfg.stall_patience:
                if sigma_halved:
                    trace.events.append("stalled")
                    break
                est_cfg = dataclasses.replace(est_cfg, sigma=max(cfg.sigma_floor, est_cfg.sigma / 2))
                trace.events.append(f"sigma_halved:{est_cfg.sigma:g}")
                sigma_halved, stalls = True, 0
                eta = None
    except BudgetExhausted:
        trace.events.append("budget_exhausted")

    trace.record(used(), min(trace.best_distortion, dist(state)))
    trace.final_theta = state.theta
    trace.final_radius = state.radius
    trace.success = math.isfinite(state.radius)
    trace.finish(used())
    return trace


def adversarial_point(goal: AttackGoal, trace: AttackTrace) -> np.ndarray:
    return goal.x + trace.final_radius * trace.final_theta
