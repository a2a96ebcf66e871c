"""Result containers shared by all estimation pipelines."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PosteriorSample:
    """Parameter draws (grid scale) with nonnegative weights summing to one."""
    theta_grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.theta_grid = np.asarray(self.theta_grid, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("posterior weights must be nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("posterior weights must not all be zero")
        self.weights = w / total

    def mean(self) -> np.ndarray:
        return self.weights @ self.theta_grid

    def quantiles(self, probs) -> np.ndarray:
        """Weighted marginal quantiles, shape (len(probs), K)."""
        probs = np.asarray(probs, dtype=float)
        k = self.theta_grid.shape[1]
        out = np.empty((len(probs), k))
        for d in range(k):
            order = np.argsort(self.theta_grid[:, d])
            vals = self.theta_grid[order, d]
            cum = np.cumsum(self.weights[order])
            cum /= cum[-1]
            out[:, d] = np.interp(probs, cum, vals)
        return out


@dataclass
class EstimationResult:
    method: str
    names: tuple[str, ...]
    theta: np.ndarray                      # user scale
    objective: float = float("nan")
    t_prepaid: int | None = None
    neighbors: np.ndarray | None = None
    ci_level: float | None = None
    ci_low: np.ndarray | None = None       # user scale
    ci_high: np.ndarray | None = None
    posterior: PosteriorSample | None = None
    wall_time: float = 0.0
    flags: tuple[str, ...] = ()

    def theta_dict(self) -> dict:
        return {name: float(v) for name, v in zip(self.names, self.theta)}

    def to_dict(self, include_posterior: bool = False) -> dict:
        out = {
            "method": self.method,
            "theta": self.theta_dict(),
            "objective": None if np.isnan(self.objective) else float(self.objective),
            "t_prepaid": self.t_prepaid,
            "neighbors": None if self.neighbors is None else [int(i) for i in self.neighbors[:100]],
            "wall_time": self.wall_time,
            "flags": list(self.flags),
        }
        if self.ci_level is not None:
            out["ci"] = {
                "level": self.ci_level,
                "low": {n: float(v) for n, v in zip(self.names, self.ci_low)},
                "high": {n: float(v) for n, v in zip(self.names, self.ci_high)},
            }
        if include_posterior and self.posterior is not None:
            out["posterior"] = {
                "theta_grid": self.posterior.theta_grid.tolist(),
                "weights": self.posterior.weights.tolist(),
            }
        return out
