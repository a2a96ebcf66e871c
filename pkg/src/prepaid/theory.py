"""Analytic results and miniature simulation study for the normal-mean example.

The estimation problem: y_i ~ N(mu, s^2) with s known, an evenly spaced mu grid
with gap delta, one simulated statistic per grid value, and the estimate found
by inverting a local linear regression fitted on the N nearest statistics.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import DomainError


@dataclass(frozen=True)
class ToyConfig:
    mu: float
    s: float
    t_obs: int
    t_sim: int
    delta: float
    n_neighbors: int
    alpha: float = 0.0           # selection offset M_mu - mu
    situation: int = 1

    def __post_init__(self):
        if self.delta <= 0:
            raise DomainError("delta must be positive")
        if self.n_neighbors < 2:
            raise DomainError("need at least two neighbors")
        if self.t_sim < 1 or self.t_obs < 1:
            raise DomainError("sample sizes must be at least 1")
        if self.situation not in (1, 2):
            raise DomainError("situation must be 1 or 2")


def toy_selection_moments(delta: float, n: int, mu_first: float):
    """Mean, variance and sd of N consecutive grid values starting at mu_first."""
    if delta <= 0 or n < 2:
        raise DomainError("need delta > 0 and n >= 2")
    mean = mu_first + delta * (n - 1) / 2.0
    var = delta * delta * (n - 1) * (n + 1) / 12.0
    return mean, var, math.sqrt(var)


def toy_estimator_moments(config: ToyConfig):
    """Closed-form mean and variance of the regression-inversion estimator
    (situation 1, consecutive-selection approximation)."""
    if config.situation != 1:
        raise DomainError("closed forms exist only for situation 1")
    mu, s, a = config.mu, config.s, config.alpha
    t_obs, t_sim = config.t_obs, config.t_sim
    d, n = config.delta, config.n_neighbors
    mean = mu - (a / t_sim) * 12.0 * s * s / (d * d * n ** 3)
    var = (s * s / t_obs
           + s * s / (t_sim * n)
           + 12.0 * s * s * a * a / (t_sim * d * d * n ** 4)
           + 36.0 * s ** 4 / (t_sim * t_obs * d * d * n ** 3)
           + 144.0 * s ** 6 / (t_sim ** 2 * t_obs * d ** 4 * n ** 6))
    return mean, var


@dataclass
class ToyStudyResult:
    deltas: np.ndarray
    n_values: np.ndarray
    situation: int
    mu: float
    s: float
    t_obs: int
    t_sim: int
    replications: int
    rmse: np.ndarray          # (len(deltas), len(n_values))
    mse: np.ndarray
    mc_se_mse: np.ndarray     # Monte Carlo standard error of each MSE entry
    bias: np.ndarray
    excluded: np.ndarray      # replications dropped for a vanishing slope


def toy_rmse_study(deltas, n_values, situation: int = 1, replications: int = 2000,
                   seed: int = 0, mu: float | None = None, s: float = 1.0,
                   t_obs: int = 100, t_sim: int = 1000,
                   chunk: int = 250) -> ToyStudyResult:
    """Miniature prepaid pipeline per (delta, N) cell.

    Each replication simulates the grid statistics, picks the N nearest to the
    observed statistic, fits the inverting regression and records the estimate.
    Replications with |slope| < 1e-12 are excluded and counted.
    """
    if replications < 100:
        raise DomainError("need at least 100 replications")
    if situation not in (1, 2):
        raise DomainError("situation must be 1 or 2")
    if mu is None:
        mu = 0.0 if situation == 1 else 1.0
    deltas = np.asarray(deltas, dtype=float)
    n_values = np.asarray(n_values, dtype=int)
    shape = (len(deltas), len(n_values))
    mse = np.zeros(shape)
    mc_se = np.zeros(shape)
    bias = np.zeros(shape)
    excluded = np.zeros(shape, dtype=int)

    for ci, (di, ni) in enumerate(np.ndindex(shape)):
        delta, n = float(deltas[di]), int(n_values[ni])
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(ci,)))
        # grid centered on the truth, wide enough that selection never clips
        margin = n * delta / 2.0 + 6.0 * s * (1.0 / math.sqrt(t_obs) + 1.0 / math.sqrt(t_sim))
        half = int(math.ceil(margin / delta))
        grid = mu + delta * np.arange(-half, half + 1)
        errors = []
        for lo in range(0, replications, chunk):
            size = min(chunk, replications - lo)
            y_bar = rng.normal(mu, s / math.sqrt(t_obs), size=size)
            stat_sim = grid[None, :] + rng.normal(0.0, s / math.sqrt(t_sim),
                                                  size=(size, len(grid)))
            if situation == 1:
                stat_obs = y_bar
            else:
                stat_obs = y_bar ** 2
                stat_sim = stat_sim ** 2
            pick = np.argpartition(np.abs(stat_sim - stat_obs[:, None]), n - 1,
                                   axis=1)[:, :n]
            x = grid[pick]
            y = np.take_along_axis(stat_sim, pick, axis=1)
            x_mean = x.mean(axis=1)
            y_mean = y.mean(axis=1)
            sxx = np.sum((x - x_mean[:, None]) ** 2, axis=1)
            sxy = np.sum((x - x_mean[:, None]) * (y - y_mean[:, None]), axis=1)
            slope = sxy / sxx
            valid = np.abs(slope) >= 1e-12
            excluded[di, ni] += int(np.sum(~valid))
            mu_hat = x_mean + (stat_obs - y_mean) / slope
            errors.append(mu_hat[valid] - mu)
        err = np.concatenate(errors)
        sq = err ** 2
        mse[di, ni] = sq.mean()
        mc_se[di, ni] = sq.std(ddof=1) / math.sqrt(len(sq))
        bias[di, ni] = err.mean()

    return ToyStudyResult(deltas=deltas, n_values=n_values, situation=situation,
                          mu=mu, s=s, t_obs=t_obs, t_sim=t_sim,
                          replications=replications, rmse=np.sqrt(mse), mse=mse,
                          mc_se_mse=mc_se, bias=bias, excluded=excluded)


def write_toy_csv(result: ToyStudyResult, path: str | Path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "n_neighbors", "rmse", "mse", "mc_se_mse",
                         "bias", "excluded"])
        for di, delta in enumerate(result.deltas):
            for ni, n in enumerate(result.n_values):
                writer.writerow([repr(float(delta)), int(n),
                                 repr(float(result.rmse[di, ni])),
                                 repr(float(result.mse[di, ni])),
                                 repr(float(result.mc_se_mse[di, ni])),
                                 repr(float(result.bias[di, ni])),
                                 int(result.excluded[di, ni])])


def write_toy_matrix(result: ToyStudyResult, path: str | Path) -> None:
    """RMSE surface as a gnuplot-style matrix: blank-line separated blocks of
    `delta n rmse` triples, one block per delta."""
    lines = []
    for di, delta in enumerate(result.deltas):
        for ni, n in enumerate(result.n_values):
            lines.append(f"{float(delta):.10g} {int(n)} {float(result.rmse[di, ni]):.10g}")
        lines.append("")
    Path(path).write_text("\n".join(lines) + "\n")
