"""Dense vector helpers: RNG streams, sphere sampling, Gram-Schmidt, gamma ratios."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DimensionExceeded, InfeasibleCosines, NonPositiveArgument, ZeroVector

# residual norm below this fraction of the input norm is treated as linearly dependent
DROP_TOL = 1e-9


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent, reproducible stream for ``(seed, *keys)``.

    ``make_rng(7, run, it)`` and ``make_rng(7, run, it + 1)`` are statistically
    independent, so parallel runs can be keyed by run id and iteration.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_gaussian(d: int, rng: np.random.Generator) -> np.ndarray:
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return rng.standard_normal(d)


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise ZeroVector("cannot normalize a zero (or non-finite) vector")
    return v / n


def unit_sphere(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points drawn uniformly from the unit sphere in R^d, one per row."""
    z = rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@dataclass(frozen=True)
class OrthonormalFrame:
    """Rows of ``basis`` are orthonormal.

    ``sources[i]`` is the input index that produced row ``i``; ``dropped`` lists
    input indices discarded as (numerically) dependent on earlier inputs.
    """

    basis: np.ndarray
    sources: tuple[int, ...] = ()
    dropped: tuple[int, ...] = field(default=())

    @property
    def size(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def project(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection of ``v`` onto the span of the frame."""
        if self.size == 0:
            return np.zeros_like(v, dtype=float)
        return self.basis.T @ (self.basis @ v)

    def residual(self, v: np.ndarray) -> np.ndarray:
        return v - self.project(v)


def empty_frame(d: int) -> OrthonormalFrame:
    return OrthonormalFrame(np.zeros((0, d)))


def gram_schmidt(vectors, drop_tol: float = DROP_TOL) -> OrthonormalFrame:
    """Orthonormalize ``vectors`` in order (Gram-Schmidt; QR when nothing is dropped).

    Output ``i`` depends only on inputs ``0..i``, so leading vectors (priors)
    keep their directions. Inputs whose residual falls below ``drop_tol`` times
    their own norm are dropped.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    q, d = V.shape
    fast = _qr_frame(V, drop_tol)
    if fast is not None:
        return fast
    out = np.empty((min(q, d), d))
    sources, dropped = [], []
    m = 0
    for i in range(q):
        v = V[i].copy()
        n0 = np.linalg.norm(v)
        if n0 == 0.0:
            dropped.append(i)
            continue
        # second pass restores orthogonality lost to cancellation
        for _ in range(2):
            if m:
                v -= out[:m].T @ (out[:m] @ v)
        n = np.linalg.norm(v)
        if m == d or n < drop_tol * n0:
            dropped.append(i)
            continue
        out[m] = v / n
        sources.append(i)
        m += 1
    return OrthonormalFrame(out[:m].copy(), tuple(sources), tuple(dropped))


def _qr_frame(V: np.ndarray, drop_tol: float) -> OrthonormalFrame | None:
    """Householder QR shortcut, valid when nothing would be dropped.

    With full column rank, QR with a positive-diagonal ``R`` yields exactly the
    Gram-Schmidt rows. Returns ``None`` when some input looks dependent.
    """
    q, d = V.shape
    if q == 0 or q > d:
        return None
    Q, R = np.linalg.qr(V.T)
    diag = np.abs(np.diag(R))
    if np.any(diag <= drop_tol * np.linalg.norm(V, axis=1)) or not np.all(np.isfinite(diag)):
        return None
    basis = (Q * np.sign(np.diag(R))).T
    return OrthonormalFrame(np.ascontiguousarray(basis), tuple(range(q)), ())


def _as_frame(frame, d: int | None = None) -> OrthonormalFrame:
    if isinstance(frame, OrthonormalFrame):
        return frame
    arr = np.asarray(frame, dtype=float)
    if arr.size == 0:
        if d is None:
            raise ValueError("dimension needed for an empty frame")
        return empty_frame(d)
    arr = np.atleast_2d(arr)
    return OrthonormalFrame(arr, tuple(range(arr.shape[0])))


def sample_orthonormal_complement(frame, m: int, rng: np.random.Generator,
                                  d: int | None = None) -> OrthonormalFrame:
    """``m`` random orthonormal vectors orthogonal to ``frame``.

    The distribution is invariant under rotations that fix span(frame): Gaussian
    draws, projected off the frame, then orthonormalized.
    """
    F = _as_frame(frame, d)
    d = F.d
    if F.size + m > d:
        raise DimensionExceeded(f"frame of size {F.size} plus {m} exceeds d={d}")
    if m == 0:
        return empty_frame(d)
    R = rng.standard_normal((m, d))
    if F.size:
        for _ in range(2):
            R -= (R @ F.basis.T) @ F.basis
    out = gram_schmidt(R)
    if out.size < m:  # probability zero with Gaussian draws
        return sample_orthonormal_complement(F, m, rng)
    return out


def embed_priors_with_cosines(g_unit: np.ndarray, alphas, rng: np.random.Generator) -> OrthonormalFrame:
    """Orthonormal ``p_1..p_s`` with ``p_i . g_unit == alphas[i]``.

    Each ``p_i = alpha_i g + sum_j B_ij w_j`` with ``w`` a random orthonormal set
    orthogonal to ``g`` and ``B B^T = I - alpha alpha^T`` (symmetric square root).
    """
    g = np.asarray(g_unit, dtype=float)
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    s = a.size
    if not abs(np.linalg.norm(g) - 1.0) < 1e-10:
        raise ValueError("g_unit must have unit norm")
    tot = float(a @ a)
    if tot > 1.0 + 1e-12:
        raise InfeasibleCosines(f"sum of squared cosines is {tot:.6g} > 1")
    if s >= g.size:
        raise DimensionExceeded(f"{s} priors need d > {s}, got d={g.size}")
    W = sample_orthonormal_complement(g[None, :], s, rng).basis
    lam, Q = np.linalg.eigh(np.eye(s) - np.outer(a, a))
    B = (Q * np.sqrt(np.clip(lam, 0.0, None))) @ Q.T
    P = np.outer(a, g) + B @ W
    return OrthonormalFrame(P, tuple(range(s)))


def log_gamma_ratio(a: float, b: float) -> float:
    """``ln(Gamma(a) / Gamma(b))`` without forming either gamma value."""
    if not (a > 0 and b > 0):
        raise NonPositiveArgument(f"gamma arguments must be positive, got {a}, {b}")
    return float(gammaln(a) - gammaln(b))


def sphere_abs_mean(d: int) -> float:
    """``E|u . g|`` for ``u`` uniform on the unit sphere in R^d and unit ``g``."""
    return float(np.exp(log_gamma_ratio(d / 2, (d + 1) / 2)) / np.sqrt(np.pi))
