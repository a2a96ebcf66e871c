"""Ricker population dynamics: latent stochastic map with Poisson observations."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..domain import DomainError, Model, ParameterSpace, StatSchema

STAT_NAMES = ("mean", "zero_frac", "acov1", "acov2", "acov3", "acov4", "acov5",
              "ar_lin", "ar_quad")

DEFAULT_BURN_IN = 50


class SimulationError(RuntimeError):
    pass


@njit(cache=True)
def _latent_path(r: float, e: np.ndarray, n0: float) -> np.ndarray:
    out = np.empty(e.shape[0])
    n = n0
    for t in range(e.shape[0]):
        n = r * n * math.exp(-n + e[t])
        out[t] = n
    return out


def simulate_ricker(theta_user: np.ndarray, t: int, seed,
                    burn_in: int = DEFAULT_BURN_IN) -> np.ndarray:
    """Observed counts y_1..y_T; y_t ~ Poisson(phi * N_t) after `burn_in` latent steps."""
    r, sigma, phi = (float(x) for x in np.asarray(theta_user, dtype=float))
    if t < 1:
        raise DomainError("T must be at least 1")
    if r <= 0 or sigma < 0 or phi < 0:
        raise DomainError("Ricker parameters must be positive")
    rng = np.random.default_rng(seed)
    e = sigma * rng.standard_normal(burn_in + t)
    n = _latent_path(r, e, 1.0)
    if not np.all(np.isfinite(n)):
        bad = int(np.argmin(np.isfinite(n)))
        raise SimulationError(f"non-finite latent state at step {bad}")
    return rng.poisson(phi * n[burn_in:]).astype(np.int64)


def _autocov(y: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocovariance at lags 1..max_lag, denominator T (brute-force definition)."""
    t = len(y)
    d = y - y.mean()
    return np.array([float(d[:t - lag] @ d[lag:]) / t for lag in range(1, max_lag + 1)])


def _ar_coeffs(y: np.ndarray) -> tuple[float, float, bool]:
    """Slopes of the OLS fit of y_t^0.3 on {1, y_{t-1}^0.3, y_{t-1}^0.6}.

    Returns (linear slope, quadratic slope, degenerate flag); degenerate
    designs (constant series) yield zero coefficients.
    """
    x = np.asarray(y, dtype=float) ** 0.3
    a, b = x[:-1], x[1:]
    design = np.column_stack([np.ones_like(a), a, a * a])
    gram = design.T @ design
    if np.linalg.matrix_rank(gram) < 3:
        return 0.0, 0.0, True
    coef = np.linalg.solve(gram, design.T @ b)
    return float(coef[1]), float(coef[2]), False


def ricker_stats(y: np.ndarray, with_flag: bool = False):
    """Summary statistics of one series: mean, fraction of zeros, autocovariances
    at lags 1..5, and the two autoregression slopes."""
    y = np.asarray(y, dtype=float)
    if len(y) < 10:
        raise DomainError("series too short for Ricker statistics (need T >= 10)")
    ar1, ar2, degenerate = _ar_coeffs(y)
    stats = np.concatenate([[y.mean(), float(np.mean(y == 0))], _autocov(y, 5), [ar1, ar2]])
    return (stats, degenerate) if with_flag else stats


def ricker_stats_batch(ys: np.ndarray) -> np.ndarray:
    """Statistics of each row of an (n, T) matrix; equals row-wise ricker_stats."""
    ys = np.asarray(ys, dtype=float)
    n, t = ys.shape
    means = ys.mean(axis=1)
    zero_frac = np.mean(ys == 0, axis=1)
    d = ys - means[:, None]
    acov = np.stack([np.einsum("ij,ij->i", d[:, :t - lag], d[:, lag:]) / t
                     for lag in range(1, 6)], axis=1)

    x = ys ** 0.3
    a, b = x[:, :-1], x[:, 1:]
    m = t - 1
    s1 = a.sum(axis=1)
    s2 = (a * a).sum(axis=1)
    s3 = (a ** 3).sum(axis=1)
    s4 = (a ** 4).sum(axis=1)
    gram = np.empty((n, 3, 3))
    gram[:, 0, 0] = m
    gram[:, 0, 1] = gram[:, 1, 0] = s1
    gram[:, 0, 2] = gram[:, 2, 0] = gram[:, 1, 1] = s2
    gram[:, 1, 2] = gram[:, 2, 1] = s3
    gram[:, 2, 2] = s4
    rhs = np.stack([b.sum(axis=1),
                    np.einsum("ij,ij->i", a, b),
                    np.einsum("ij,ij->i", a * a, b)], axis=1)
    coef = np.zeros((n, 3))
    ok = np.linalg.matrix_rank(gram) == 3
    if np.any(ok):
        coef[ok] = np.linalg.solve(gram[ok], rhs[ok][..., None])[..., 0]
    return np.column_stack([means, zero_frac, acov, coef[:, 1], coef[:, 2]])


def ricker_space() -> ParameterSpace:
    # default bounded box: r in [1,90], sigma in [0.05,0.7], phi in [0,20]
    return ParameterSpace(names=("r", "sigma", "phi"),
                          lower=np.array([1.0, 0.05, 0.0]),
                          upper=np.array([90.0, 0.7, 20.0]),
                          transforms=("identity", "identity", "identity"))


def ricker_space_online() -> ParameterSpace:
    # wider box with log-scale grid axes for r and phi
    return ParameterSpace(names=("r", "sigma", "phi"),
                          lower=np.array([1.0, 0.05, math.exp(-2.0)]),
                          upper=np.array([200.0, 0.7, math.exp(7.0)]),
                          transforms=("log", "identity", "log"))


def ricker_schema() -> StatSchema:
    inf = math.inf
    return StatSchema(names=STAT_NAMES,
                      feasible_low=np.array([0.0, 0.0, -inf, -inf, -inf, -inf, -inf, -inf, -inf]),
                      feasible_high=np.array([inf, 1.0, inf, inf, inf, inf, inf, inf, inf]))


class RickerModel(Model):
    t_min = 10

    def __init__(self, online: bool = False, burn_in: int = DEFAULT_BURN_IN):
        self.id = "ricker-online" if online else "ricker"
        self.online = online
        self.burn_in = burn_in
        self.space = ricker_space_online() if online else ricker_space()
        self.schema = ricker_schema()

    def simulate(self, theta_user, t, seed):
        return simulate_ricker(theta_user, t, seed, burn_in=self.burn_in)

    def summarize(self, dataset):
        return ricker_stats(dataset)

    def summarize_segments(self, dataset, t_seg):
        n_seg = len(dataset) // t_seg
        return ricker_stats_batch(np.asarray(dataset[:n_seg * t_seg]).reshape(n_seg, t_seg))

    def parse_dataset(self, text: str) -> np.ndarray:
        """One integer count per line."""
        values = [int(tok) for tok in text.split()]
        if not values:
            raise DomainError("empty Ricker dataset")
        return np.asarray(values, dtype=np.int64)

    def config(self):
        return {"online": self.online, "burn_in": self.burn_in}
