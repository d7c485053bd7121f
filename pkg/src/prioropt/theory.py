"""Expected cosine similarity of the three estimators: closed forms and Monte Carlo.

``gamma`` is the cosine between an estimate and the true gradient. All formulas
assume exact directional derivatives (the small-``sigma`` limit) and random
directions uniform on the sphere orthogonal to the priors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.special import betaln

from .errors import InvalidSpec
from .estimators import EstimatorConfig, ExactProbe, estimate_prior_opt, estimate_prior_sign_opt, estimate_sign_opt
from .vecmath import embed_priors_with_cosines, normalize, sphere_abs_mean, unit_sphere

TWO_OVER_PI = 2.0 / math.pi


@dataclass(frozen=True)
class TheorySpec:
    d: int
    q: int
    alphas: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if not 1 <= self.q <= self.d:
            raise InvalidSpec(f"need 1 <= q <= d, got q={self.q}, d={self.d}")
        if self.s >= self.q:
            raise InvalidSpec(f"need s < q, got s={self.s}, q={self.q}")
        if any(abs(a) > 1 for a in self.alphas) or self.sum_sq > 1 + 1e-12:
            raise InvalidSpec(f"infeasible prior cosines {self.alphas}")

    @property
    def s(self) -> int:
        return len(self.alphas)

    @property
    def sum_sq(self) -> float:
        return float(sum(a * a for a in self.alphas))

    @property
    def sum_abs(self) -> float:
        return float(sum(abs(a) for a in self.alphas))


@dataclass
class GammaStats:
    mean_gamma: float
    mean_gamma_sq: float
    stderr_mean: float
    stderr_sq: float
    trials: int

    @classmethod
    def from_samples(cls, gamma) -> "GammaStats":
        g = np.asarray(gamma, dtype=float)
        n = g.size
        g2 = g * g
        return cls(float(np.mean(g)), float(np.mean(g2)),
                   float(np.std(g, ddof=1) / math.sqrt(n)), float(np.std(g2, ddof=1) / math.sqrt(n)), n)


# ---------------------------------------------------------------- closed forms


def _check(d: int, q: int) -> None:
    if not 1 <= q <= d:
        raise InvalidSpec(f"need 1 <= q <= d, got q={q}, d={d}")


def mean_gamma_sign_opt(d: int, q: int) -> float:
    _check(d, q)
    return math.sqrt(q) * sphere_abs_mean(d)


def mean_sq_gamma_sign_opt(d: int, q: int) -> float:
    _check(d, q)
    return (TWO_OVER_PI * (q - 1) + 1.0) / d


def _as_spec(spec_or_d, q=None, alphas=None) -> TheorySpec:
    if isinstance(spec_or_d, TheorySpec):
        return spec_or_d
    return TheorySpec(spec_or_d, q, tuple(alphas))


def mean_gamma_prior_sign_opt(spec, q=None, alphas=None) -> float:
    sp = _as_spec(spec, q, alphas)
    if sp.s < 1:
        raise InvalidSpec("Prior-Sign-OPT needs at least one prior")
    rest = (sp.q - sp.s) * math.sqrt(max(0.0, 1.0 - sp.sum_sq)) * sphere_abs_mean(sp.d - sp.s)
    return (sp.sum_abs + rest) / math.sqrt(sp.q)


def mean_sq_gamma_prior_sign_opt(spec, q=None, alphas=None) -> float:
    sp = _as_spec(spec, q, alphas)
    if sp.s < 1:
        raise InvalidSpec("Prior-Sign-OPT needs at least one prior")
    m, dd = sp.q - sp.s, sp.d - sp.s
    resid = max(0.0, 1.0 - sp.sum_sq)
    return (sp.sum_abs ** 2
            + m / dd * (TWO_OVER_PI * (m - 1) + 1.0) * resid
            + 2.0 * sp.sum_abs * m * math.sqrt(resid) * sphere_abs_mean(dd)) / sp.q


def mean_sq_gamma_prior_opt(spec, q=None, alphas=None) -> float:
    sp = _as_spec(spec, q, alphas)
    if sp.s < 1:
        raise InvalidSpec("Prior-OPT needs at least one prior")
    m, dd = sp.q - sp.s, sp.d - sp.s
    return sp.sum_sq + (TWO_OVER_PI * (m - 1) + 1.0) * (1.0 - sp.sum_sq) / dd


def prior_opt_gamma_bounds(spec, q=None, alphas=None) -> tuple[float, float]:
    """Jensen-type lower and upper bounds on ``E[gamma]`` for Prior-OPT."""
    sp = _as_spec(spec, q, alphas)
    if sp.s < 1:
        raise InvalidSpec("Prior-OPT needs at least one prior")
    m, dd = sp.q - sp.s, sp.d - sp.s
    # (Gamma(dd/2)/Gamma((dd+1)/2))^2 / pi == sphere_abs_mean(dd)^2
    lower = math.sqrt(sp.sum_sq + m * (1.0 - sp.sum_sq) * sphere_abs_mean(dd) ** 2)
    upper = math.sqrt(mean_sq_gamma_prior_opt(sp))
    assert lower <= upper + 1e-12
    return lower, upper


def advantage_condition(d: int, q: int, s: int) -> tuple[float, float]:
    """Threshold on ``sum alpha_i^2`` above which Prior-OPT has larger ``E[gamma^2]`` than Sign-OPT.

    Returns ``(exact, approx)`` with ``approx = 2s / (pi d)``.
    """
    if not (1 <= s < q <= d):
        raise InvalidSpec(f"need 1 <= s < q <= d, got d={d}, q={q}, s={s}")
    c1 = (TWO_OVER_PI * (q - 1) + 1.0) / d
    c2 = (TWO_OVER_PI * (q - s - 1) + 1.0) / (d - s)
    return (c1 - c2) / (1.0 - c2), 2.0 * s / (math.pi * d)


def crossing_interval_prior_sign_opt(d: int, q: int, resolution: float = 1e-6):
    """Range of ``|alpha|`` where one-prior Prior-Sign-OPT beats Sign-OPT in ``E[gamma]``.

    The gap is concave in ``|alpha|`` with its peak at ``1/sqrt(1+C^2)``; each
    root is found by bisection on its side of the peak. Returns ``None`` if the
    gap is never positive.
    """
    if q < 2:
        return None
    base = mean_gamma_sign_opt(d, q)

    def gap(a):
        return mean_gamma_prior_sign_opt(TheorySpec(d, q, (a,))) - base

    c = (q - 1) * sphere_abs_mean(d - 1)
    peak = 1.0 / math.sqrt(1.0 + c * c)
    if gap(peak) <= 0:
        return None

    def root(lo, hi, rising):
        while hi - lo > resolution:
            mid = 0.5 * (lo + hi)
            if (gap(mid) > 0) == rising:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    lo = 0.0 if gap(0.0) > 0 else root(0.0, peak, True)
    hi = 1.0 if gap(1.0) > 0 else root(peak, 1.0, False)
    return lo, hi


# ---------------------------------------------------------------- Monte Carlo


def _reduced_gammas(kind: str, sp: TheorySpec, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Cosines drawn through the projections of the gradient onto the random frame.

    For ``m`` random orthonormal directions in the ``D = d - s`` dimensional
    complement, the projections of the residual gradient are distributed as the
    first ``m`` coordinates of a uniform unit vector in R^D scaled by its norm;
    the remaining ``D - m`` coordinates only enter through a chi-square norm.
    """
    s, m, D = sp.s, sp.q - sp.s, sp.d - sp.s
    z = rng.standard_normal((trials, m))
    tail = rng.chisquare(D - m, size=trials) if D > m else np.zeros(trials)
    beta = math.sqrt(max(0.0, 1.0 - sp.sum_sq)) * z / np.sqrt(np.sum(z * z, axis=1) + tail)[:, None]
    abs_sum = np.sum(np.abs(beta), axis=1)
    if kind == "sign_opt":
        return abs_sum / math.sqrt(sp.q)
    if kind == "prior_sign_opt":
        return (sp.sum_abs + abs_sum) / math.sqrt(sp.q)
    if kind == "prior_opt":
        return np.sqrt(sp.sum_sq + abs_sum ** 2 / m)
    raise InvalidSpec(f"unknown estimator kind {kind!r}")


def _frame_gammas(kind: str, sp: TheorySpec, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Cosines from the actual estimators run with exact directional derivatives."""
    g = normalize(rng.standard_normal(sp.d))
    probe = ExactProbe(g)
    cfg = EstimatorConfig(kind=kind, q=sp.q)
    priors = list(embed_priors_with_cosines(g, sp.alphas, rng).basis) if sp.s else []
    out = np.empty(trials)
    for i in range(trials):
        if kind == "sign_opt":
            est = estimate_sign_opt(probe, cfg, rng, sp.d)
        elif kind == "prior_sign_opt":
            est = estimate_prior_sign_opt(probe, cfg, priors, rng, sp.d)
        elif kind == "prior_opt":
            est = estimate_prior_opt(probe, cfg, priors, rng, sp.d)
        else:
            raise InvalidSpec(f"unknown estimator kind {kind!r}")
        out[i] = float(normalize(est.v_star) @ g)
    return out


def mc_estimate_gamma(kind: str, spec: TheorySpec, trials: int, rng: np.random.Generator,
                      method: str = "reduced") -> GammaStats:
    """Monte Carlo ``E[gamma]`` and ``E[gamma^2]``.

    ``method="frame"`` builds full orthonormal frames in R^d and runs the
    estimator code; ``method="reduced"`` samples only the projections that
    determine ``gamma`` and is cheap enough for d in the thousands.
    """
    if trials < 100:
        raise InvalidSpec("at least 100 trials required")
    if kind == "sign_opt" and spec.s:
        raise InvalidSpec("Sign-OPT takes no priors")
    if kind != "sign_opt" and not spec.s:
        raise InvalidSpec(f"{kind} needs at least one prior")
    if method == "reduced":
        gam = _reduced_gammas(kind, spec, trials, rng)
    elif method == "frame":
        gam = _frame_gammas(kind, spec, trials, rng)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GammaStats.from_samples(gam)


def closed_form(kind: str, spec: TheorySpec) -> dict:
    if kind == "sign_opt":
        return {"cf_mean": mean_gamma_sign_opt(spec.d, spec.q), "cf_sq": mean_sq_gamma_sign_opt(spec.d, spec.q)}
    if kind == "prior_sign_opt":
        return {"cf_mean": mean_gamma_prior_sign_opt(spec), "cf_sq": mean_sq_gamma_prior_sign_opt(spec)}
    if kind == "prior_opt":
        lo, hi = prior_opt_gamma_bounds(spec)
        return {"cf_lower": lo, "cf_upper": hi, "cf_sq": mean_sq_gamma_prior_opt(spec)}
    raise InvalidSpec(f"unknown estimator kind {kind!r}")


def validate(kind: str, spec: TheorySpec, stats: GammaStats, k: float = 3.0) -> dict:
    """Compare Monte Carlo statistics with the closed forms at ``k`` standard errors."""
    cf = closed_form(kind, spec)
    # exact cases (e.g. perfect priors) have zero spread
    se_m = max(stats.stderr_mean, 1e-12)
    se_s = max(stats.stderr_sq, 1e-12)
    ok_sq = abs(stats.mean_gamma_sq - cf["cf_sq"]) <= k * se_s
    if "cf_mean" in cf:
        ok_mean = abs(stats.mean_gamma - cf["cf_mean"]) <= k * se_m
    else:
        ok_mean = cf["cf_lower"] - k * se_m <= stats.mean_gamma <= cf["cf_upper"] + k * se_m
    return {
        "kind": kind, "d": spec.d, "q": spec.q, "s": spec.s, "alphas": list(spec.alphas),
        "mc_mean": stats.mean_gamma, "mc_sq": stats.mean_gamma_sq, **cf,
        "stderr_mean": stats.stderr_mean, "stderr_sq": stats.stderr_sq, "trials": stats.trials,
        "pass_mean": bool(ok_mean), "pass_sq": bool(ok_sq), "pass": bool(ok_mean and ok_sq),
    }


def alpha_configs(s: int) -> list[tuple[float, ...]]:
    """Prior-cosine settings used by the validation grid for ``s`` priors."""
    configs = [(a,) * s for a in (0.0, 0.1, 0.3, 0.6) if s * a * a <= 1.0]
    mixes = {1: [], 2: [(0.6, 0.3)], 5: [(0.6, 0.3, 0.3, 0.1, 0.0), (0.6, 0.0, 0.0, 0.0, 0.0)]}
    return configs + mixes.get(s, [(0.6,) + (0.0,) * (s - 1)])


def theory_grid(kinds=("sign_opt", "prior_sign_opt", "prior_opt"), ds=(16, 64, 256, 3072),
                qs=(1, 10, 50, 200), ss=(1, 2, 5)) -> list[tuple[str, TheorySpec]]:
    cells = []
    for kind in kinds:
        for d in ds:
            for q in qs:
                if q > d:
                    continue
                if kind == "sign_opt":
                    cells.append((kind, TheorySpec(d, q)))
                    continue
                for s in ss:
                    if s >= q:
                        continue
                    for al in alpha_configs(s):
                        cells.append((kind, TheorySpec(d, q, al)))
    return cells


def run_theory_grid(cells, trials: int, seed: int, method: str = "reduced") -> list[dict]:
    """Validate every cell with its own RNG substream; rows are in ``cells`` order."""
    rows = []
    for i, (kind, sp) in enumerate(cells):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        rows.append(validate(kind, sp, mc_estimate_gamma(kind, sp, trials, rng, method)))
    return rows


# ---------------------------------------------------------------- lemmas


def _density_cdf_grid(d: int, n: int = 20001):
    """CDF of ``beta = u.g`` by quadrature of its density, on a grid in ``t = asin(beta)``.

    With ``beta = sin t`` the density ``(1-beta^2)^((d-3)/2) / B((d-1)/2, 1/2)``
    becomes ``cos(t)^(d-2) / B`` in ``t``, which is smooth for every ``d >= 2``.
    """
    t = np.linspace(-math.pi / 2, math.pi / 2, n)
    dens = np.cos(t).clip(0.0) ** (d - 2) / math.exp(betaln((d - 1) / 2, 0.5))
    cdf = cumulative_simpson(dens, x=t, initial=0.0)
    return t, cdf


def ks_statistic_beta(betas, d: int) -> tuple[float, float]:
    """Kolmogorov-Smirnov distance of sampled ``beta`` from the stated density; also the density's total mass."""
    t, cdf = _density_cdf_grid(d)
    ts = np.sort(np.arcsin(np.clip(betas, -1.0, 1.0)))
    F = np.interp(ts, t, cdf)
    n = ts.size
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    return float(max(np.max(ecdf_hi - F), np.max(F - ecdf_lo))), float(cdf[-1])


@dataclass
class LemmaReport:
    d: int
    trials: int
    rows: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)


def lemma_checks(d: int, trials: int, rng: np.random.Generator, beta_p: float = 0.6,
                 k: float = 3.0, ks_max: float = 0.01) -> LemmaReport:
    """Monte Carlo checks of the three sphere lemmas in dimension ``d``."""
    if d < 2:
        raise InvalidSpec("need d >= 2")
    rep = LemmaReport(d, trials)
    g = normalize(rng.standard_normal(d))
    U = unit_sphere(trials, d, rng)
    beta = U @ g

    def row(name, samples, expected):
        mc = float(np.mean(samples))
        se = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
        rep.rows.append({"check": name, "d": d, "mc": mc, "expected": expected, "stderr": se,
                         "pass": bool(abs(mc - expected) <= k * max(se, 1e-12))})

    row("lemma1_abs", np.abs(beta), sphere_abs_mean(d))
    row("lemma1_sq", beta * beta, 1.0 / d)

    p = embed_priors_with_cosines(g, [beta_p], rng).basis[0]
    xi = unit_sphere(trials, d, rng)
    perp = xi - np.outer(xi @ p, p)
    perp /= np.linalg.norm(perp, axis=1, keepdims=True)
    row("lemma2_abs", np.abs(perp @ g), sphere_abs_mean(d - 1) * math.sqrt(1.0 - beta_p ** 2))

    ks, mass = ks_statistic_beta(beta, d)
    rep.rows.append({"check": "lemma3_ks", "d": d, "mc": ks, "expected": 0.0, "mass": mass,
                     "pass": bool(ks < ks_max and abs(mass - 1.0) < 1e-6)})
    return rep


# ---------------------------------------------------------------- ablation curves


def ablation_curves(d: int = 3072, q: int = 50) -> dict[str, list[dict]]:
    """Closed-form ``E[gamma]`` curves versus prior cosine, ``q``, and number of priors."""
    alpha_rows = []
    for a in np.linspace(0.0, 1.0, 101):
        sp = TheorySpec(d, q, (float(a),))
        lo, hi = prior_opt_gamma_bounds(sp)
        alpha_rows.append({"alpha": float(a), "sign_opt": mean_gamma_sign_opt(d, q),
                           "prior_sign_opt": mean_gamma_prior_sign_opt(sp),
                           "prior_opt_lower": lo, "prior_opt_upper": hi})
    q_rows = []
    for qq in [2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, d]:
        if qq > d:
            continue
        sp = TheorySpec(d, qq, (0.1,))
        lo, hi = prior_opt_gamma_bounds(sp)
        q_rows.append({"q": qq, "sign_opt": mean_gamma_sign_opt(d, qq),
                       "prior_sign_opt": mean_gamma_prior_sign_opt(sp),
                       "prior_opt_lower": lo, "prior_opt_upper": hi})
    s_rows = []
    pool = [0.3, 0.25, 0.2, 0.15, 0.1, 0.05]
    for s in range(1, len(pool) + 1):
        sp = TheorySpec(d, q, tuple(pool[:s]))
        lo, hi = prior_opt_gamma_bounds(sp)
        s_rows.append({"s": s, "prior_sign_opt": mean_gamma_prior_sign_opt(sp),
                       "prior_opt_lower": lo, "prior_opt_upper": hi})
    return {"alpha": alpha_rows, "q": q_rows, "priors": s_rows}
