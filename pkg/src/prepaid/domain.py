"""Core vocabulary types: parameter spaces, statistic schemas, priors, the model interface."""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

_LOG_2PI = math.log(2.0 * math.pi)


class DomainError(ValueError):
    """A value violates a declared domain constraint."""


def point_seed(build_seed: int, index: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for grid point `index`.

    Splitting is done through SeedSequence spawn keys, so streams do not
    depend on how points are batched over workers.
    """
    return np.random.SeedSequence(entropy=build_seed, spawn_key=(index,))


@dataclass(frozen=True)
class ParameterSpace:
    """Bounded box of model parameters.

    `lower`/`upper` are user-scale bounds; `transforms` ("identity" or "log")
    map user scale to grid scale per dimension.  All grid placement, distances
    and interpolation happen in grid scale.
    """

    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    transforms: tuple[str, ...]

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        k = len(self.names)
        if k < 1:
            raise DomainError("parameter space needs at least one dimension")
        if not (len(lower) == len(upper) == len(self.transforms) == k):
            raise DomainError("names, bounds and transforms must have equal length")
        if not np.all(lower < upper):
            raise DomainError("every lower bound must be strictly below its upper bound")
        for name, t, lo in zip(self.names, self.transforms, lower):
            if t not in ("identity", "log"):
                raise DomainError(f"unknown transform {t!r} for dimension {name!r}")
            if t == "log" and lo <= 0:
                raise DomainError(f"log transform needs a positive lower bound for {name!r}")

    @property
    def ndim(self) -> int:
        return len(self.names)

    @property
    def grid_lower(self) -> np.ndarray:
        return self.to_grid(self.lower)

    @property
    def grid_upper(self) -> np.ndarray:
        return self.to_grid(self.upper)

    def to_grid(self, user_values: np.ndarray) -> np.ndarray:
        """Apply per-dimension transforms; values may be a (K,) vector or (n, K) matrix."""
        v = np.asarray(user_values, dtype=float)
        out = v.copy()
        for k, t in enumerate(self.transforms):
            if t == "log":
                out[..., k] = np.log(v[..., k])
        return out

    def to_user(self, grid_values: np.ndarray) -> np.ndarray:
        v = np.asarray(grid_values, dtype=float)
        out = v.copy()
        for k, t in enumerate(self.transforms):
            if t == "log":
                out[..., k] = np.exp(v[..., k])
        return out

    def validate_user(self, user_values: np.ndarray) -> None:
        v = np.asarray(user_values, dtype=float)
        for k, name in enumerate(self.names):
            vals = np.atleast_1d(v[..., k])
            if np.any(vals < self.lower[k]) or np.any(vals > self.upper[k]):
                raise DomainError(f"value out of bounds for dimension {name!r}")

    def contains_grid(self, grid_values: np.ndarray) -> bool:
        v = np.asarray(grid_values, dtype=float)
        return bool(np.all(v >= self.grid_lower - 1e-12) and np.all(v <= self.grid_upper + 1e-12))


def transform_to_grid(space: ParameterSpace, user_values: np.ndarray) -> np.ndarray:
    """Validated user-scale to grid-scale conversion."""
    space.validate_user(user_values)
    return space.to_grid(user_values)


@dataclass(frozen=True)
class StatSchema:
    """Names and feasible ranges of the summary statistics (entries may be +-inf)."""

    names: tuple[str, ...]
    feasible_low: np.ndarray
    feasible_high: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.feasible_low, dtype=float)
        hi = np.asarray(self.feasible_high, dtype=float)
        object.__setattr__(self, "feasible_low", lo)
        object.__setattr__(self, "feasible_high", hi)
        if not (len(lo) == len(hi) == len(self.names)):
            raise DomainError("schema names and ranges must have equal length")
        if not np.all(lo <= hi):
            raise DomainError("feasible_low must not exceed feasible_high")

    @property
    def nstats(self) -> int:
        return len(self.names)

    def clamp(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.feasible_low, self.feasible_high)


class Model(ABC):
    """Simulator plus summary-statistic extractor.

    `simulate` must be deterministic given (theta, T, seed); datasets are
    arrays sliceable along axis 0 so that `summarize(dataset[a:b])` yields the
    statistics of a sub-series.
    """

    id: str
    space: ParameterSpace
    schema: StatSchema
    t_min: int = 1

    @abstractmethod
    def simulate(self, theta_user: np.ndarray, t: int, seed) -> np.ndarray:
        ...

    @abstractmethod
    def summarize(self, dataset: np.ndarray) -> np.ndarray:
        ...

    def summarize_segments(self, dataset: np.ndarray, t_seg: int) -> np.ndarray:
        """Statistics of each disjoint length-`t_seg` segment, shape (n_seg, R)."""
        n_seg = len(dataset) // t_seg
        return np.array([self.summarize(dataset[i * t_seg:(i + 1) * t_seg]) for i in range(n_seg)])

    def config(self) -> dict:
        """Constructor arguments needed to rebuild this model (stored in database headers)."""
        return {}


class Prior(ABC):
    """Evaluable log-density over user-scale parameters, up to an additive constant."""

    @abstractmethod
    def logpdf(self, theta_user: np.ndarray) -> float:
        ...

    def logpdf_many(self, thetas_user: np.ndarray) -> np.ndarray:
        """Log-density per row of an (n, K) matrix; subclasses may vectorize."""
        thetas = np.atleast_2d(np.asarray(thetas_user, dtype=float))
        return np.array([self.logpdf(t) for t in thetas])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class UniformBoxPrior(Prior):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))

    def logpdf(self, theta_user: np.ndarray) -> float:
        t = np.asarray(theta_user, dtype=float)
        if np.any(t < self.lower) or np.any(t > self.upper):
            return -math.inf
        return float(-np.sum(np.log(self.upper - self.lower)))

    def logpdf_many(self, thetas_user: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(thetas_user, dtype=float))
        inside = np.all((t >= self.lower) & (t <= self.upper), axis=1)
        const = float(-np.sum(np.log(self.upper - self.lower)))
        return np.where(inside, const, -math.inf)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)


@dataclass(frozen=True)
class ScaledBetaPrior(Prior):
    """Independent Beta(alpha_k, beta_k) on the affinely rescaled coordinate of each dimension."""

    lower: np.ndarray
    upper: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        for name in ("lower", "upper", "alpha", "beta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def logpdf(self, theta_user: np.ndarray) -> float:
        t = np.asarray(theta_user, dtype=float)
        if np.any(t < self.lower) or np.any(t > self.upper):
            return -math.inf
        z = (t - self.lower) / (self.upper - self.lower)
        lp = sstats.beta.logpdf(z, self.alpha, self.beta) - np.log(self.upper - self.lower)
        return float(np.sum(lp))

    def logpdf_many(self, thetas_user: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(thetas_user, dtype=float))
        z = np.clip((t - self.lower) / (self.upper - self.lower), 0.0, 1.0)
        lp = sstats.beta.logpdf(z, self.alpha, self.beta) - np.log(self.upper - self.lower)
        out = np.sum(lp, axis=1)
        inside = np.all((t >= self.lower) & (t <= self.upper), axis=1)
        return np.where(inside, out, -math.inf)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.beta(self.alpha, self.beta)
        return self.lower + z * (self.upper - self.lower)


@dataclass(frozen=True)
class ProductPrior(Prior):
    parts: tuple[Prior, ...]

    def logpdf(self, theta_user: np.ndarray) -> float:
        return float(sum(p.logpdf(theta_user) for p in self.parts))

    def logpdf_many(self, thetas_user: np.ndarray) -> np.ndarray:
        return np.sum([p.logpdf_many(thetas_user) for p in self.parts], axis=0)


@dataclass(frozen=True)
class TyingPrior:
    """Cross-condition tying penalty on the listed (grid-scale) dimensions.

    For each tied dimension d the contribution is
    sum_c log N((theta_d^c - mean_c(theta_d)) / sigma_prior)
    with N the standard normal density; sigma_prior = inf disables the tie.
    """

    tied_dims: tuple[int, ...]
    sigma_prior: float

    def __post_init__(self):
        if not self.tied_dims:
            raise DomainError("tying prior needs at least one tied dimension")
        if not (self.sigma_prior > 0):
            raise DomainError("sigma_prior must be positive")

    def logpdf_joint(self, thetas_grid: np.ndarray) -> float:
        """`thetas_grid` has shape (C, K), one row per condition."""
        t = np.asarray(thetas_grid, dtype=float)
        if math.isinf(self.sigma_prior):
            return 0.0
        total = 0.0
        for d in self.tied_dims:
            z = (t[:, d] - t[:, d].mean()) / self.sigma_prior
            total += float(np.sum(-0.5 * z * z - 0.5 * _LOG_2PI))
        return total
