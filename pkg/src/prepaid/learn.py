"""Local surrogates and geometry: LS-SVM regression, linear fits, hierarchical
clustering with a size cap, and minimum-volume enclosing ellipsoids."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.spatial.distance import pdist

from .domain import DomainError, StatSchema


class FitError(RuntimeError):
    pass


class DegenerateGeometryError(ValueError):
    pass


def _standardize(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (x - mean) / std, mean, std


def _gaussian_kernel(a: np.ndarray, b: np.ndarray, bandwidth: float) -> np.ndarray:
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * bandwidth * bandwidth))


@dataclass
class KernelSurrogate:
    x_train: np.ndarray          # standardized inputs
    x_mean: np.ndarray
    x_std: np.ndarray
    alpha: np.ndarray
    bias: float
    bandwidth: float
    reg_weight: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = (x - self.x_mean) / self.x_std
        k = _gaussian_kernel(z, self.x_train, self.bandwidth)
        return k @ self.alpha + self.bias


def lssvm_fit(x: np.ndarray, y: np.ndarray, bandwidth: float,
              reg_weight: float) -> KernelSurrogate:
    """Least-squares SVM regression with a Gaussian kernel: one (N+1)x(N+1)
    saddle-point solve.  Inputs are standardized internally."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 3:
        raise FitError("need at least three training points")
    if bandwidth <= 0 or reg_weight <= 0:
        raise DomainError("bandwidth and regularization weight must be positive")
    z, x_mean, x_std = _standardize(x)
    gram = _gaussian_kernel(z, z, bandwidth)
    system = np.zeros((n + 1, n + 1))
    system[0, 1:] = 1.0
    system[1:, 0] = 1.0
    system[1:, 1:] = gram + np.eye(n) / reg_weight
    rhs = np.concatenate([[0.0], y])
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        system[1:, 1:] += 1e-10 * np.eye(n)
        try:
            sol = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError as exc:
            raise FitError("singular LS-SVM system") from exc
    return KernelSurrogate(x_train=z, x_mean=x_mean, x_std=x_std,
                           alpha=sol[1:], bias=float(sol[0]),
                           bandwidth=float(bandwidth), reg_weight=float(reg_weight))


DEFAULT_BANDWIDTH_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_REG_WEIGHTS = (1.0, 10.0, 100.0, 1000.0, 10000.0)


def median_pairwise_distance(x: np.ndarray) -> float:
    z, _, _ = _standardize(np.asarray(x, dtype=float))
    d = pdist(z)
    med = float(np.median(d)) if len(d) else 1.0
    return med if med > 0 else 1.0


def lssvm_tune(x: np.ndarray, y: np.ndarray,
               bandwidths=None, reg_weights=DEFAULT_REG_WEIGHTS,
               folds: int = 5) -> tuple[float, float]:
    """Grid search minimizing k-fold CV squared error; folds assigned by index
    stride, ties broken by candidate order."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if not (2 <= folds <= n):
        raise DomainError("need n >= folds >= 2")
    if bandwidths is None:
        med = median_pairwise_distance(x)
        bandwidths = tuple(f * med for f in DEFAULT_BANDWIDTH_FACTORS)
    fold_of = np.arange(n) % folds
    best = None
    for bw in bandwidths:
        for reg in reg_weights:
            sse, count = 0.0, 0
            for f in range(folds):
                test = fold_of == f
                if test.all() or not test.any():
                    continue
                try:
                    fit = lssvm_fit(x[~test], y[~test], bw, reg)
                except FitError:
                    sse, count = math.inf, 1
                    break
                resid = y[test] - fit.predict(x[test])
                sse += float(resid @ resid)
                count += int(test.sum())
            score = sse / max(count, 1)
            if best is None or score < best[0] - 1e-15:
                best = (score, float(bw), float(reg))
    return best[1], best[2]


def fit_tuned_surrogate(x: np.ndarray, y: np.ndarray, folds: int = 5) -> KernelSurrogate:
    bw, reg = lssvm_tune(x, y, folds=min(folds, len(x)))
    return lssvm_fit(x, y, bw, reg)


def linear_fit(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """OLS coefficients [intercept, slopes...]; raises on rank deficiency."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if n <= k + 1:
        raise FitError("need more observations than coefficients")
    design = np.column_stack([np.ones(n), x])
    if np.linalg.matrix_rank(design) < k + 1:
        raise FitError("rank-deficient design")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


@dataclass
class LinearSurrogate:
    coef: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.coef[0] + x @ self.coef[1:]


def clamp_predictions(s_pred: np.ndarray, schema: StatSchema) -> np.ndarray:
    return schema.clamp(np.asarray(s_pred, dtype=float))


def hcluster(points: np.ndarray, max_cluster_size: int) -> list[np.ndarray]:
    """Ward agglomerative clustering cut so no cluster exceeds the cap."""
    if max_cluster_size < 2:
        raise DomainError("max_cluster_size must be at least 2")
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n <= max_cluster_size:
        return [np.arange(n)]
    z, _, _ = _standardize(points)
    tree = linkage(z, method="ward")
    for n_clusters in range(2, n + 1):
        labels = cut_tree(tree, n_clusters=n_clusters)[:, 0]
        sizes = np.bincount(labels)
        if sizes.max() <= max_cluster_size:
            return [np.flatnonzero(labels == c) for c in range(n_clusters)]
    return [np.array([i]) for i in range(n)]


@dataclass
class Ellipsoid:
    """Membership rule (x - center)' shape (x - center) <= 1."""
    center: np.ndarray
    shape: np.ndarray
    iteration_volumes: list | None = None

    def membership(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = x - self.center
        return np.einsum("ni,ij,nj->n", d, self.shape, d)

    def volume(self) -> float:
        k = len(self.center)
        sign, logdet = np.linalg.slogdet(self.shape)
        if sign <= 0:
            raise DegenerateGeometryError("ellipsoid shape matrix is not positive definite")
        return _unit_ball_volume(k) * math.exp(-0.5 * logdet)

    def sample(self, n: int, seed) -> np.ndarray:
        """Uniform interior samples via an affine map of uniform ball samples."""
        k = len(self.center)
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((n, k))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radii = rng.random(n) ** (1.0 / k)
        ball = g * radii[:, None]
        vals, vecs = np.linalg.eigh(self.shape)
        if np.any(vals <= 0):
            raise DegenerateGeometryError("ellipsoid shape matrix is not positive definite")
        transform = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
        return self.center + ball @ transform


def _unit_ball_volume(k: int) -> float:
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


def mvee(points: np.ndarray, tolerance: float = 1e-5, max_iter: int = 1000000,
         track_volumes: bool = False) -> Ellipsoid:
    """Minimum-volume enclosing ellipsoid by Khachiyan's iterative reweighting.

    Stops when the worst leverage excess guarantees membership <= 1 + tolerance
    for every input point.  Leverages are maintained by a rank-1 update of the
    weighted scatter inverse (refreshed periodically against drift), so one
    iteration costs O(n K) instead of O(n K^2).  With track_volumes, the volume
    of the per-iteration trial ellipsoid is recorded; it grows monotonically
    toward the optimum (the algorithm is coordinate ascent on the log
    determinant of the weighted scatter)."""
    p = np.asarray(points, dtype=float)
    if p.ndim != 2:
        raise DegenerateGeometryError("points must form an (n, K) matrix")
    n, d = p.shape
    if n < d + 1:
        raise DegenerateGeometryError("need at least K+1 points")
    q = np.column_stack([p, np.ones(n)])
    u = np.full(n, 1.0 / n)

    def refresh():
        lam = q.T @ (u[:, None] * q)
        try:
            inv = np.linalg.inv(lam)
        except np.linalg.LinAlgError as exc:
            raise DegenerateGeometryError("affinely dependent points") from exc
        return inv, np.einsum("ni,ij,nj->n", q, inv, q)

    inv, m = refresh()
    volumes = [] if track_volumes else None
    for it in range(max_iter):
        j = int(np.argmax(m))
        mj = float(m[j])
        if track_volumes:
            volumes.append(_volume_from_weights(p, u, d))
        if (mj - d - 1.0) / d < tolerance:
            break
        step = (mj - d - 1.0) / ((d + 1.0) * (mj - 1.0))
        new_u = (1.0 - step) * u
        new_u[j] += step
        u = new_u
        if (it + 1) % 200 == 0:
            inv, m = refresh()
            continue
        v = inv @ q[j]
        g = q @ v
        denom = 1.0 - step + step * mj
        inv = (inv - (step / denom) * np.outer(v, v)) / (1.0 - step)
        m = (m - step * g * g / denom) / (1.0 - step)
    center = p.T @ u
    scatter = p.T @ (u[:, None] * p) - np.outer(center, center)
    try:
        shape = np.linalg.inv(scatter * d)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError("affinely dependent points") from exc
    shape = 0.5 * (shape + shape.T)
    if np.any(np.linalg.eigvalsh(shape) <= 0):
        raise DegenerateGeometryError("degenerate point configuration")
    return Ellipsoid(center=center, shape=shape, iteration_volumes=volumes)


def enclosing_ellipsoid(points: np.ndarray, tolerance: float = 1e-2,
                        max_iter: int = 5000) -> Ellipsoid:
    """Cheap enclosing ellipsoid: a loosely converged mvee inflated so every
    input point satisfies membership <= 1 exactly."""
    e = mvee(points, tolerance=tolerance, max_iter=max_iter)
    worst = float(e.membership(points).max())
    if worst > 1.0:
        e = Ellipsoid(center=e.center, shape=e.shape / worst,
                      iteration_volumes=e.iteration_volumes)
    return e


def _volume_from_weights(p: np.ndarray, u: np.ndarray, d: int) -> float:
    center = p.T @ u
    scatter = p.T @ (u[:, None] * p) - np.outer(center, center)
    sign, logdet = np.linalg.slogdet(scatter * d)
    if sign <= 0:
        return math.inf
    return _unit_ball_volume(d) * math.exp(0.5 * logdet)
