"""Client loss models, synthetic data, and partitioning.

Every model exposes the same surface: ``value(w)``, ``gradient(w)``, and
``lipschitz_constant()`` returning a certified upper bound on the gradient's
Lipschitz constant. A model also carries ``weight``, its share of the global
objective; the consensus engine optimizes the share-weighted loss
``weight * value``, so the weighted accessors are provided alongside.

Gradients are exact full-batch gradients. There is no mini-batching anywhere:
the runtime monitors certify inequalities that hold only for exact gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError

LOSS_KINDS = ("quadratic", "least-squares", "logistic", "sigmoid-nonconvex")
PARTITION_SCHEMES = ("iid", "shard-skew")

# Peak of |d^2/dz^2 sigmoid(z)| = |s(1-s)(1-2s)|, attained at s = (3 +- sqrt(3))/6.
SIGMOID_CURVATURE_BOUND = 1.0 / (6.0 * math.sqrt(3.0))

WEIGHT_SUM_TOL = 1e-12


def _as_vector(w, dim: int, what: str = "parameter vector") -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (dim,):
        raise ShapeError(f"{what} has shape {w.shape}, expected ({dim},)")
    return w


def stable_sum(values) -> float:
    """Exact summation that degrades to nan instead of raising when a term is
    non-finite (fsum refuses infinities of opposite sign). Callers treat nan
    as the generic out-of-range marker."""
    values = [float(v) for v in values]
    if not all(math.isfinite(v) for v in values):
        return math.nan
    return math.fsum(values)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def top_eigenvalue(matvec, dim: int, tol: float = 1e-15, max_iter: int = 100_000) -> float:
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    Rayleigh quotients of power iterates are non-decreasing for PSD operators,
    so the running maximum converges from below; iteration stops only after the
    relative gain stays below ``tol`` for several consecutive steps, which keeps
    the residual under-estimate far inside the 1e-9 slack the Lipschitz
    invariant allows.
    """
    best = 0.0
    for salt in (1, 2, 3):
        rng = np.random.default_rng((0x7E1, salt, dim))
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        v /= norm
        lam = 0.0
        quiet = 0
        for _ in range(max_iter):
            av = matvec(v)
            rayleigh = float(v @ av)
            gain = abs(rayleigh - lam)
            lam = max(lam, rayleigh)
            norm = np.linalg.norm(av)
            if norm == 0.0:
                break
            v = av / norm
            quiet = quiet + 1 if gain <= tol * max(abs(lam), 1.0) else 0
            if quiet >= 8:
                break
        best = max(best, lam)
    return best


@dataclass
class Dataset:
    """Feature matrix (n, d) with one label per row.

    ``ground_truth`` is the planted parameter vector when the data is
    synthetic; it exists only so tests can compare recovered solutions
    against it.
    """

    features: np.ndarray
    labels: np.ndarray
    ground_truth: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError(
                f"labels shape {self.labels.shape} does not match {self.features.shape[0]} rows"
            )

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]


def generate_synthetic(kind: str, n_samples: int, dimension: int, seed, noise: float = 0.1) -> Dataset:
    """Deterministic synthetic dataset from a planted parameter vector.

    Regression labels are ``X @ truth`` plus centered Gaussian noise of scale
    ``noise``. Classification labels are ``sign(X @ truth)`` in {-1, +1}, with
    each label independently flipped with probability ``noise`` so the problem
    stays non-separable and keeps a finite stationary point.
    """
    if kind not in ("least-squares", "logistic", "sigmoid-nonconvex"):
        raise ConfigurationError(f"no synthetic generator for loss kind {kind!r}")
    if n_samples < 1 or dimension < 1:
        raise ConfigurationError("n_samples and dimension must be positive")
    if noise < 0:
        raise ConfigurationError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n_samples, dimension))
    truth = rng.standard_normal(dimension)
    margins = features @ truth
    if kind == "least-squares":
        labels = margins + noise * rng.standard_normal(n_samples)
    else:
        labels = np.where(margins >= 0.0, 1.0, -1.0)
        flips = rng.random(n_samples) < noise
        labels = np.where(flips, -labels, labels)
    return Dataset(features, labels, ground_truth=truth)


def save_dataset(dataset: Dataset, path) -> None:
    """Plain-text format: first line "n d", n feature rows, then n label lines."""
    n, d = dataset.features.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{n} {d}\n")
        for row in dataset.features:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
        for y in dataset.labels:
            fh.write(f"{y:.17g}\n")


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ConfigurationError(f"{path}: first line must be 'n d'")
        n, d = int(header[0]), int(header[1])
        rows = []
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) != d:
                raise ConfigurationError(f"{path}: feature row {i} has {len(parts)} values, expected {d}")
            rows.append([float(x) for x in parts])
        labels = [float(fh.readline()) for _ in range(n)]
    return Dataset(np.array(rows), np.array(labels))


@dataclass
class Partition:
    """Disjoint cover of sample indices {0..n-1} by client."""

    indices: tuple[np.ndarray, ...]

    @property
    def client_count(self) -> int:
        return len(self.indices)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(ix) for ix in self.indices)


def partition_dataset(dataset: Dataset, clients: int, scheme: str = "iid", seed=0) -> Partition:
    """Split sample indices across clients.

    iid: seeded random permutation cut into near-equal contiguous blocks.
    shard-skew: indices sorted by label, dealt as contiguous shards, so each
    client sees a label-skewed slice.
    """
    n = dataset.n_samples
    if clients < 1:
        raise ConfigurationError("client count must be at least 1")
    if clients > n:
        raise ConfigurationError(f"cannot split {n} samples across {clients} clients")
    if scheme == "iid":
        order = np.random.default_rng(seed).permutation(n)
    elif scheme == "shard-skew":
        order = np.argsort(dataset.labels, kind="stable")
    else:
        raise ConfigurationError(f"unknown partition scheme {scheme!r}")
    return Partition(tuple(np.array_split(order, clients)))


class _DataLoss:
    """Shared plumbing for losses backed by an (X, y) sample set."""

    kind = ""

    def __init__(self, features, labels, weight: float = 1.0, signed_labels: bool = False):
        self.features = np.asarray(features, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError("labels length does not match feature rows")
        if self.features.shape[0] == 0:
            raise ConfigurationError("empty sample set")
        if signed_labels and not np.all(np.abs(self.labels) == 1.0):
            raise ConfigurationError(f"{self.kind} labels must be +1 or -1")
        if not weight > 0:
            raise ConfigurationError("model weight must be positive")
        self.weight = float(weight)
        self._lipschitz: float | None = None

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def lipschitz_constant(self) -> float:
        if self._lipschitz is None:
            self._lipschitz = self._compute_lipschitz()
        return self._lipschitz

    def _compute_lipschitz(self) -> float:
        raise NotImplementedError

    def weighted_value(self, w) -> float:
        return self.weight * self.value(w)

    def weighted_gradient(self, w) -> np.ndarray:
        return self.weight * self.gradient(w)

    def weighted_grad_bound(self) -> float:
        return self.weight * self.lipschitz_constant()


class QuadraticLoss:
    """F(w) = 1/2 (w - c)^T A (w - c) for a symmetric PSD matrix A.

    Analytic and dataset-independent, which makes closed-form oracles
    (stationary points, exact Lipschitz constants) available to tests.
    """

    kind = "quadratic"

    def __init__(self, matrix, center, weight: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        if self.center.ndim != 1:
            raise ShapeError("center must be a vector")
        d = self.center.shape[0]
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.shape != (d, d):
            raise ShapeError(f"matrix shape {self.matrix.shape} does not match center dimension {d}")
        if not np.allclose(self.matrix, self.matrix.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(self.matrix).max()))):
            raise ConfigurationError("quadratic matrix must be symmetric (and PSD)")
        if not weight > 0:
            raise ConfigurationError("model weight must be positive")
        self.weight = float(weight)
        self._lipschitz: float | None = None

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def value(self, w) -> float:
        w = _as_vector(w, self.dimension)
        r = w - self.center
        return 0.5 * float(r @ (self.matrix @ r))

    def gradient(self, w) -> np.ndarray:
        w = _as_vector(w, self.dimension)
        return self.matrix @ (w - self.center)

    def lipschitz_constant(self) -> float:
        if self._lipschitz is None:
            self._lipschitz = top_eigenvalue(lambda v: self.matrix @ v, self.dimension)
        return self._lipschitz

    def weighted_value(self, w) -> float:
        return self.weight * self.value(w)

    def weighted_gradient(self, w) -> np.ndarray:
        return self.weight * self.gradient(w)

    def weighted_grad_bound(self) -> float:
        return self.weight * self.lipschitz_constant()


class LeastSquaresLoss(_DataLoss):
    """F(w) = 1/(2n) ||X w - y||^2; gradient Lipschitz bound lam_max(X^T X)/n."""

    kind = "least-squares"

    def __init__(self, features, labels, weight: float = 1.0):
        super().__init__(features, labels, weight, signed_labels=False)

    def value(self, w) -> float:
        w = _as_vector(w, self.dimension)
        r = self.features @ w - self.labels
        return 0.5 * float(r @ r) / self.n_samples

    def gradient(self, w) -> np.ndarray:
        w = _as_vector(w, self.dimension)
        r = self.features @ w - self.labels
        return (self.features.T @ r) / self.n_samples

    def _compute_lipschitz(self) -> float:
        X = self.features
        return top_eigenvalue(lambda v: X.T @ (X @ v), self.dimension) / self.n_samples


class LogisticLoss(_DataLoss):
    """F(w) = 1/n sum log(1 + exp(-y_i <x_i, w>)), labels in {-1, +1}.

    Gradient Lipschitz bound lam_max(X^T X)/(4n) from the 1/4 cap on the
    logistic second derivative.
    """

    kind = "logistic"

    def __init__(self, features, labels, weight: float = 1.0):
        super().__init__(features, labels, weight, signed_labels=True)

    def value(self, w) -> float:
        w = _as_vector(w, self.dimension)
        margins = self.labels * (self.features @ w)
        return float(np.mean(np.logaddexp(0.0, -margins)))

    def gradient(self, w) -> np.ndarray:
        w = _as_vector(w, self.dimension)
        margins = self.labels * (self.features @ w)
        coeff = self.labels * _sigmoid(-margins)
        return -(self.features.T @ coeff) / self.n_samples

    def _compute_lipschitz(self) -> float:
        X = self.features
        return top_eigenvalue(lambda v: X.T @ (X @ v), self.dimension) / (4.0 * self.n_samples)


class SigmoidLoss(_DataLoss):
    """Non-convex smooth classification loss F(w) = 1/n sum sigmoid(-y_i <x_i, w>).

    The gradient Lipschitz bound is max_i ||x_i||^2 times the analytic peak of
    the sigmoid's second derivative, so the certificate stays valid without any
    eigensolve.
    """

    kind = "sigmoid-nonconvex"

    def __init__(self, features, labels, weight: float = 1.0):
        super().__init__(features, labels, weight, signed_labels=True)

    def value(self, w) -> float:
        w = _as_vector(w, self.dimension)
        margins = self.labels * (self.features @ w)
        return float(np.mean(_sigmoid(-margins)))

    def gradient(self, w) -> np.ndarray:
        w = _as_vector(w, self.dimension)
        s = _sigmoid(-(self.labels * (self.features @ w)))
        coeff = self.labels * s * (1.0 - s)
        return -(self.features.T @ coeff) / self.n_samples

    def _compute_lipschitz(self) -> float:
        row_sq = np.einsum("ij,ij->i", self.features, self.features)
        return float(row_sq.max()) * SIGMOID_CURVATURE_BOUND


_DATA_LOSS_CLASSES = {
    "least-squares": LeastSquaresLoss,
    "logistic": LogisticLoss,
    "sigmoid-nonconvex": SigmoidLoss,
}


def client_losses(dataset: Dataset, part: Partition, kind: str) -> list:
    """One loss model per client from a partition; weights are |D_k| / |D|."""
    if kind not in _DATA_LOSS_CLASSES:
        raise ConfigurationError(f"loss kind {kind!r} is not dataset-backed")
    cls = _DATA_LOSS_CLASSES[kind]
    n = dataset.n_samples
    models = []
    for ix in part.indices:
        models.append(cls(dataset.features[ix], dataset.labels[ix], weight=len(ix) / n))
    return models


def _check_weights(models) -> None:
    total = math.fsum(m.weight for m in models)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ConfigurationError(f"model weights sum to {total!r}, expected 1 within {WEIGHT_SUM_TOL}")


def weighted_global_objective(models, w) -> float:
    """sum_k weight_k * F_k(w); weights must sum to 1."""
    _check_weights(models)
    return math.fsum(m.weight * m.value(w) for m in models)


def weighted_global_gradient(models, w) -> np.ndarray:
    _check_weights(models)
    total = np.zeros(models[0].dimension)
    for m in models:
        total += m.weighted_gradient(w)
    return total
