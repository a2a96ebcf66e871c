"""Gaussian-mean toy model: estimate mu of N(mu, s^2) from the sample mean (or its square)."""
from __future__ import annotations

import math

import numpy as np

from ..domain import DomainError, Model, ParameterSpace, StatSchema


def simulate_toy(mu: float, s: float, t: int, statistic: str, seed) -> float:
    """Sample mean (or squared sample mean) of T iid N(mu, s^2) draws."""
    if s <= 0:
        raise DomainError("s must be positive")
    if t < 1:
        raise DomainError("T must be at least 1")
    rng = np.random.default_rng(seed)
    ybar = float(mu + s * rng.standard_normal(t).mean())
    if statistic == "mean":
        return ybar
    if statistic == "mean-squared":
        return ybar * ybar
    raise DomainError(f"unknown toy statistic {statistic!r}")


class ToyModel(Model):
    t_min = 1

    def __init__(self, s: float = 1.0, statistic: str = "mean",
                 mu_bounds: tuple[float, float] = (-10.0, 10.0)):
        if statistic not in ("mean", "mean-squared"):
            raise DomainError(f"unknown toy statistic {statistic!r}")
        self.id = "toy"
        self.s = float(s)
        self.statistic = statistic
        self.mu_bounds = (float(mu_bounds[0]), float(mu_bounds[1]))
        self.space = ParameterSpace(names=("mu",),
                                    lower=np.array([self.mu_bounds[0]]),
                                    upper=np.array([self.mu_bounds[1]]),
                                    transforms=("identity",))
        low = 0.0 if statistic == "mean-squared" else -math.inf
        self.schema = StatSchema(names=(statistic,),
                                 feasible_low=np.array([low]),
                                 feasible_high=np.array([math.inf]))

    def simulate(self, theta_user, t, seed):
        mu = float(np.asarray(theta_user, dtype=float)[0])
        rng = np.random.default_rng(seed)
        return mu + self.s * rng.standard_normal(t)

    def summarize(self, dataset):
        ybar = float(np.mean(dataset))
        value = ybar if self.statistic == "mean" else ybar * ybar
        return np.array([value])

    def summarize_segments(self, dataset, t_seg):
        n_seg = len(dataset) // t_seg
        means = np.asarray(dataset[:n_seg * t_seg], dtype=float).reshape(n_seg, t_seg).mean(axis=1)
        values = means if self.statistic == "mean" else means ** 2
        return values[:, None]

    def parse_dataset(self, text: str) -> np.ndarray:
        values = [float(tok) for tok in text.split()]
        if not values:
            raise DomainError("empty toy dataset")
        return np.asarray(values, dtype=float)

    def config(self):
        return {"s": self.s, "statistic": self.statistic, "mu_bounds": list(self.mu_bounds)}
