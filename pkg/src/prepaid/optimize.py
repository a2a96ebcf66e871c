"""Bounded global minimization with DE/rand/1/bin."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DomainError


class OptimizationError(RuntimeError):
    pass


@dataclass
class DEConfig:
    bounds_lower: np.ndarray
    bounds_upper: np.ndarray
    popsize: int | None = None        # default max(15, 10*K)
    weight: float = 0.8
    crossover: float = 0.9
    maxiter: int = 1000
    tol: float = 1e-10
    patience: int = 50
    seed: int = 0
    init: np.ndarray | None = None    # optional rows injected into the initial population

    def __post_init__(self):
        self.bounds_lower = np.asarray(self.bounds_lower, dtype=float)
        self.bounds_upper = np.asarray(self.bounds_upper, dtype=float)
        if not np.all(np.isfinite(self.bounds_lower)) or not np.all(np.isfinite(self.bounds_upper)):
            raise DomainError("DE needs finite bounds")
        if not np.all(self.bounds_lower <= self.bounds_upper):
            raise DomainError("lower bounds must not exceed upper bounds")
        k = len(self.bounds_lower)
        if self.popsize is None:
            self.popsize = max(15, 10 * k)
        if self.popsize < 4:
            raise DomainError("population size must be at least 4")
        if not (0.0 < self.weight <= 2.0):
            raise DomainError("differential weight must be in (0, 2]")
        if not (0.0 <= self.crossover <= 1.0):
            raise DomainError("crossover rate must be in [0, 1]")


@dataclass
class DEResult:
    x: np.ndarray
    fun: float
    generations: int
    history: list = field(default_factory=list)


def _reflect(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fold out-of-bounds coordinates back into the box by reflection."""
    span = hi - lo
    degenerate = span <= 0
    y = np.where(degenerate, lo, x)
    with np.errstate(invalid="ignore"):
        z = np.mod(y - lo, np.where(degenerate, 1.0, 2.0 * span))
        z = np.where(z > span, 2.0 * span - z, z)
    return np.where(degenerate, lo, lo + z)


def differential_evolution(objective, config: DEConfig) -> DEResult:
    """Minimize `objective` over the box.  `objective` takes a (P, K) matrix and
    returns (P,) values; NaN is treated as rejection (+inf).  Deterministic per seed."""
    lo, hi = config.bounds_lower, config.bounds_upper
    k = len(lo)
    p = config.popsize
    rng = np.random.default_rng(config.seed)

    pop = lo + rng.random((p, k)) * (hi - lo)
    if config.init is not None:
        init = np.atleast_2d(np.asarray(config.init, dtype=float))
        n_init = min(len(init), p)
        pop[:n_init] = np.clip(init[:n_init], lo, hi)

    def evaluate(x):
        vals = np.asarray(objective(x), dtype=float)
        return np.where(np.isnan(vals), np.inf, vals)

    fitness = evaluate(pop)
    if not np.any(np.isfinite(fitness)):
        raise OptimizationError("objective returned no finite value on the initial population")

    best_idx = int(np.argmin(fitness))
    best_val = float(fitness[best_idx])
    history = [best_val]
    stall = 0
    gen = 0
    for gen in range(1, config.maxiter + 1):
        # DE/rand/1: three distinct partners per member, none equal to the member
        choices = np.argsort(rng.random((p, p - 1)), axis=1)[:, :3]
        partners = np.where(choices >= np.arange(p)[:, None], choices + 1, choices)
        a, b, c = pop[partners[:, 0]], pop[partners[:, 1]], pop[partners[:, 2]]
        mutant = _reflect(a + config.weight * (b - c), lo, hi)

        cross = rng.random((p, k)) < config.crossover
        forced = rng.integers(0, k, size=p)
        cross[np.arange(p), forced] = True
        trial = np.where(cross, mutant, pop)

        trial_fit = evaluate(trial)
        improved = trial_fit <= fitness
        pop = np.where(improved[:, None], trial, pop)
        fitness = np.where(improved, trial_fit, fitness)

        new_best = float(np.min(fitness))
        if best_val - new_best < config.tol:
            stall += 1
        else:
            stall = 0
        best_val = min(best_val, new_best)
        history.append(best_val)
        if stall >= config.patience:
            break
        if not np.any(np.isfinite(fitness)):
            raise OptimizationError("objective returned no finite value for an entire generation")

    best_idx = int(np.argmin(fitness))
    return DEResult(x=pop[best_idx].copy(), fun=float(fitness[best_idx]),
                    generations=gen, history=history)
