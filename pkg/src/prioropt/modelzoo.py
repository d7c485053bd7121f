"""Analytic classifiers used both as hard-label targets and as white-box surrogates.

Linear and Voronoi models have piecewise-affine score profiles along any ray, so
their true ray radius is available in closed form for testing.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import BudgetExhausted


# ---------------------------------------------------------------- models


@dataclass(frozen=True, eq=False)
class SoftmaxLinearModel:
    W: np.ndarray  # (k, d)
    b: np.ndarray  # (k,)

    family = "softmax_linear"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if W.ndim != 2 or W.shape[0] < 2 or b.shape != (W.shape[0],):
            raise ValueError(f"bad shapes W{W.shape} b{b.shape}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def k(self) -> int:
        return self.W.shape[0]

    def logits(self, x):
        return self.W @ x + self.b

    def logits_vjp(self, x, cot):
        """Gradient of ``cot . logits(x)`` with respect to ``x``."""
        return self.W.T @ cot

    def predict(self, x) -> int:
        return int(np.argmax(self.logits(x)))

    def predict_batch(self, X) -> np.ndarray:
        return np.argmax(X @ self.W.T + self.b, axis=1)

    def ray_scores(self, x, theta):
        """Scores along ``x + lam*theta`` as ``a + lam*m``, plus the label of each score."""
        return self.logits(x), self.W @ theta, np.arange(self.k)

    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


@dataclass(frozen=True, eq=False)
class MlpModel:
    """One tanh hidden layer: ``W2 tanh(W1 x + b1) + b2``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    family = "mlp"

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        h, d = self.W1.shape
        k = self.W2.shape[0]
        if self.b1.shape != (h,) or self.W2.shape != (k, h) or self.b2.shape != (k,) or k < 2:
            raise ValueError("inconsistent MLP shapes")

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def k(self) -> int:
        return self.W2.shape[0]

    def _hidden(self, x):
        return np.tanh(self.W1 @ x + self.b1)

    def logits(self, x):
        return self.W2 @ self._hidden(x) + self.b2

    def logits_vjp(self, x, cot):
        hid = self._hidden(x)
        return self.W1.T @ ((1.0 - hid * hid) * (self.W2.T @ cot))

    def predict(self, x) -> int:
        return int(np.argmax(self.logits(x)))

    def predict_batch(self, X) -> np.ndarray:
        H = np.tanh(X @ self.W1.T + self.b1)
        return np.argmax(H @ self.W2.T + self.b2, axis=1)

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


@dataclass(frozen=True, eq=False)
class VoronoiModel:
    """Label of the nearest center; ties go to the lowest center index."""

    centers: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) int

    family = "voronoi"

    def __post_init__(self):
        object.__setattr__(self, "centers", np.atleast_2d(np.asarray(self.centers, dtype=float)))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))
        if self.labels.shape != (self.centers.shape[0],):
            raise ValueError("one label per center required")

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1

    def predict(self, x) -> int:
        d2 = np.sum((self.centers - x) ** 2, axis=1)
        return int(self.labels[np.argmin(d2)])

    def predict_batch(self, X) -> np.ndarray:
        d2 = (np.sum(X * X, axis=1)[:, None] - 2.0 * X @ self.centers.T
              + np.sum(self.centers ** 2, axis=1)[None, :])
        return self.labels[np.argmin(d2, axis=1)]

    def ray_scores(self, x, theta):
        # -|x + lam t - c|^2 = -|x-c|^2 - 2 lam t.(x-c) - lam^2; the lam^2 term is shared
        diff = x - self.centers
        return -np.sum(diff * diff, axis=1), -2.0 * diff @ theta, self.labels

    def params(self) -> dict[str, np.ndarray]:
        return {"centers": self.centers, "labels": self.labels}


MODEL_FAMILIES = {cls.family: cls for cls in (SoftmaxLinearModel, MlpModel, VoronoiModel)}


# ---------------------------------------------------------------- serialization


def model_to_dict(model) -> dict[str, Any]:
    params = model.params()
    return {
        "family": model.family,
        "shapes": {name: list(arr.shape) for name, arr in params.items()},
        "params": {name: arr.ravel().tolist() for name, arr in params.items()},
    }


def model_from_dict(data: dict[str, Any]):
    cls = MODEL_FAMILIES[data["family"]]
    kwargs = {}
    for name, shape in data["shapes"].items():
        dtype = int if name == "labels" else float
        kwargs[name] = np.asarray(data["params"][name], dtype=dtype).reshape(shape)
    return cls(**kwargs)


def save_model(model, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


# ---------------------------------------------------------------- hard-label access


class QueryLedger:
    """Monotone query counter with an optional hard cap."""

    def __init__(self, budget: int | None = None):
        if budget is not None and budget < 0:
            raise ValueError("budget must be non-negative")
        self.budget = budget
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    @property
    def remaining(self) -> float:
        return math.inf if self.budget is None else self.budget - self._count

    def charge(self, n: int = 1) -> None:
        with self._lock:
            if self.budget is not None and self._count + n > self.budget:
                raise BudgetExhausted(f"query budget {self.budget} exhausted")
            self._count += n


class HardLabelOracle:
    """Top-1 label access to a model; every call costs one ledger query.

    With ``box=True`` inputs are clamped to [0, 1]^d before classification.
    """

    def __init__(self, model, ledger: QueryLedger | None = None, box: bool = False):
        self._model = model
        self.ledger = ledger if ledger is not None else QueryLedger()
        self.box = box

    @property
    def d(self) -> int:
        return self._model.d

    def predict(self, x) -> int:
        self.ledger.charge()
        if self.box:
            x = np.clip(x, 0.0, 1.0)
        return self._model.predict(x)


def predict(oracle: HardLabelOracle, x) -> int:
    return oracle.predict(x)


# ---------------------------------------------------------------- losses and radii


def runner_up(logits, exclude: int) -> int:
    """Index of the largest logit other than ``exclude`` (lowest index on ties)."""
    masked = np.array(logits, dtype=float, copy=True)
    masked[exclude] = -np.inf
    return int(np.argmax(masked))


def cw_loss_and_grad(model, x, label: int, targeted: bool = False):
    """Negative C&W margin and its exact input gradient.

    Untargeted (``label`` = true class y): ``f_y - max_{j!=y} f_j``.
    Targeted (``label`` = target class t): ``max_{j!=t} f_j - f_t``.
    Both are positive while the attack has not succeeded.
    """
    z = model.logits(x)
    j = runner_up(z, label)
    cot = np.zeros(z.size)
    if targeted:
        loss = z[j] - z[label]
        cot[j], cot[label] = 1.0, -1.0
    else:
        loss = z[label] - z[j]
        cot[label], cot[j] = 1.0, -1.0
    return float(loss), model.logits_vjp(x, cot)


def exact_ray_radius(model, x, theta, goal) -> float:
    """Smallest ``lam > 0`` where ``goal`` succeeds on ``x + lam*theta/|theta|``.

    Walks the upper envelope of the affine score lines (at most one step per
    score), so the result is exact up to rounding. Returns ``inf`` if the ray
    never reaches the adversarial region.
    """
    t = np.asarray(theta, dtype=float)
    t = t / np.linalg.norm(t)
    a, m, labels = model.ray_scores(np.asarray(x, dtype=float), t)
    cur = int(np.argmax(a))
    lam = 0.0
    if goal.is_success(int(labels[cur])):
        return 0.0
    while True:
        up = np.nonzero(m > m[cur])[0]
        if up.size == 0:
            return math.inf
        cross = (a[cur] - a[up]) / (m[up] - m[cur])
        cross = np.maximum(cross, lam)
        nxt = float(cross.min())
        tied = up[cross <= nxt + 1e-12 * max(1.0, abs(nxt))]
        # just past the crossing the steepest tied line leads; lowest index on ties
        steep = tied[m[tied] == m[tied].max()]
        cur = int(steep.min())
        lam = nxt
        if goal.is_success(int(labels[cur])):
            return lam


# ---------------------------------------------------------------- construction


def _rms(arr: np.ndarray) -> float:
    return float(np.sqrt(np.mean(arr * arr))) if arr.size else 0.0


def perturb_twin(model, rho: float, rng: np.random.Generator):
    """Copy of ``model`` with Gaussian weight noise of relative scale ``rho``.

    Each parameter array gets i.i.d. noise with standard deviation
    ``rho * rms(array)``; integer label arrays are left untouched.
    """
    if rho < 0:
        raise ValueError("rho must be non-negative")
    new = {}
    for name, arr in model.params().items():
        if arr.dtype.kind in "iu" or rho == 0:
            new[name] = arr.copy()
        else:
            new[name] = arr + rho * _rms(arr) * rng.standard_normal(arr.shape)
    return type(model)(**new)


def nearest_template_linear(templates: np.ndarray) -> SoftmaxLinearModel:
    """Linear classifier picking the closest template: ``f_j = mu_j.x - |mu_j|^2/2``."""
    T = np.asarray(templates, dtype=float)
    return SoftmaxLinearModel(T.copy(), -0.5 * np.sum(T * T, axis=1))


def random_templates(d: int, k: int, rng: np.random.Generator, sep: float = 4.0) -> np.ndarray:
    """``k`` class templates whose typical pairwise distance is ``sep``."""
    return rng.standard_normal((k, d)) * (sep / math.sqrt(2 * d))


def random_mlp(d: int, hidden: int, k: int, rng: np.random.Generator, scale: float = 1.0) -> MlpModel:
    return MlpModel(
        rng.standard_normal((hidden, d)) * (scale / math.sqrt(d)),
        0.1 * rng.standard_normal(hidden),
        rng.standard_normal((k, hidden)) * (scale * 2.0 / math.sqrt(hidden)),
        0.1 * rng.standard_normal(k),
    )
