"""Frequentist pipelines: grid/surrogate maximum synthetic likelihood, MAP with
priors, and multi-condition estimation with parameter tying."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from ..domain import DomainError, Model, Prior, TyingPrior
from ..grid import PrepaidDatabase
from ..inference import (NeighborSet, NumericError, ScanContext, nn_by_synthlik,
                         regularized_cholesky, scale_cov)
from ..learn import (DegenerateGeometryError, FitError, LinearSurrogate,
                     fit_tuned_surrogate, linear_fit)
from ..optimize import DEConfig, differential_evolution
from .results import EstimationResult

_LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_NEIGHBORS = 100


def estimate_grid_ml(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int,
                     n_neighbors: int = DEFAULT_NEIGHBORS,
                     ctx: ScanContext | None = None) -> EstimationResult:
    """Best grid point by synthetic log-likelihood with covariances scaled to t_obs."""
    start = time.perf_counter()
    if ctx is None:
        ctx = ScanContext(db, t_obs)
    nn = nn_by_synthlik(db, s_obs, t_obs, min(n_neighbors, db.omega), ctx=ctx)
    best = int(nn.indices[0])
    return EstimationResult(method="grid-ml", names=db.space.names,
                            theta=db.space.to_user(db.theta[best]),
                            objective=float(nn.scores[0]),
                            t_prepaid=ctx.t_prepaid, neighbors=nn.indices,
                            wall_time=time.perf_counter() - start)


@dataclass
class SurrogateContext:
    """Per-statistic local surrogates fitted on one neighbor set, with the scaled
    nearest-neighbor covariance factor.  Reused across bootstrap replicates."""
    surrogates: list
    bounds_lower: np.ndarray      # neighbor bounding box, grid scale
    bounds_upper: np.ndarray
    chol: np.ndarray
    logdet: float
    neighbors: NeighborSet
    t_prepaid: int
    db: PrepaidDatabase

    def __post_init__(self):
        # kernel surrogates fitted on one neighbor set share training inputs,
        # so one squared-distance matrix serves every statistic
        self._kernel_batch = None
        first = self.surrogates[0]
        if all(isinstance(s, type(first)) and hasattr(s, "x_train")
               for s in self.surrogates):
            self._kernel_batch = {
                "alpha": np.column_stack([s.alpha for s in self.surrogates]),
                "bias": np.array([s.bias for s in self.surrogates]),
                "bw2": np.array([2.0 * s.bandwidth ** 2 for s in self.surrogates]),
            }

    def predict(self, thetas_grid: np.ndarray) -> np.ndarray:
        thetas_grid = np.atleast_2d(thetas_grid)
        if self._kernel_batch is None:
            preds = np.column_stack([s.predict(thetas_grid) for s in self.surrogates])
            return self.db.schema.clamp(preds)
        ref = self.surrogates[0]
        z = (thetas_grid - ref.x_mean) / ref.x_std
        sq = (np.sum(z * z, axis=1)[:, None]
              + np.sum(ref.x_train * ref.x_train, axis=1)[None, :]
              - 2.0 * z @ ref.x_train.T)
        np.maximum(sq, 0.0, out=sq)
        batch = self._kernel_batch
        kern = np.exp(-sq[:, :, None] / batch["bw2"][None, None, :])
        preds = np.einsum("pnr,nr->pr", kern, batch["alpha"]) + batch["bias"]
        return self.db.schema.clamp(preds)

    def negloglik(self, thetas_grid: np.ndarray, s_obs: np.ndarray) -> np.ndarray:
        diff = self.predict(thetas_grid) - np.asarray(s_obs, dtype=float)
        z = sla.solve_triangular(self.chol, diff.T, lower=True)
        return 0.5 * np.einsum("rn,rn->n", z, z) + 0.5 * self.logdet


def build_surrogate_context(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int,
                            n_neighbors: int = DEFAULT_NEIGHBORS, kind: str = "svm",
                            ctx: ScanContext | None = None) -> SurrogateContext:
    """Fit one surrogate per statistic on the top-N neighbors of s_obs."""
    if ctx is None:
        ctx = ScanContext(db, t_obs)
    nn = nn_by_synthlik(db, s_obs, t_obs, min(n_neighbors, db.omega), ctx=ctx)
    theta_nn = db.theta[nn.indices]
    mu_nn = db.mu[nn.indices]
    if kind == "svm":
        surrogates = [fit_tuned_surrogate(theta_nn, mu_nn[:, j]) for j in range(db.nstats)]
    elif kind == "linear":
        surrogates = [LinearSurrogate(linear_fit(theta_nn, mu_nn[:, j])) for j in range(db.nstats)]
    else:
        raise DomainError(f"unknown surrogate kind {kind!r}")
    cov = scale_cov(db.cov(int(nn.indices[0]), ctx.t_prepaid), ctx.t_prepaid, t_obs)
    chol = regularized_cholesky(cov, label="nearest-neighbor covariance")
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return SurrogateContext(surrogates=surrogates,
                            bounds_lower=theta_nn.min(axis=0),
                            bounds_upper=theta_nn.max(axis=0),
                            chol=chol, logdet=logdet, neighbors=nn,
                            t_prepaid=ctx.t_prepaid, db=db)


def minimize_surrogate(sctx: SurrogateContext, s_obs: np.ndarray,
                       seed: int = 0, maxiter: int = 1000) -> tuple[np.ndarray, float]:
    """Differential evolution over the neighbor box, seeded with the best
    neighbor grid points under the surrogate objective."""
    neighbor_vals = sctx.negloglik(sctx.db.theta[sctx.neighbors.indices], s_obs)
    order = np.argsort(neighbor_vals, kind="stable")
    init = sctx.db.theta[sctx.neighbors.indices[order[:10]]]
    config = DEConfig(bounds_lower=sctx.bounds_lower, bounds_upper=sctx.bounds_upper,
                      seed=seed, init=init, maxiter=maxiter)
    res = differential_evolution(lambda x: sctx.negloglik(x, s_obs), config)
    if res.fun > float(np.min(neighbor_vals)):
        # cannot regress below the grid answer; the best seed row wins ties
        best = int(np.argmin(neighbor_vals))
        return sctx.db.theta[sctx.neighbors.indices[best]].copy(), float(neighbor_vals[best])
    return res.x, res.fun


def _surrogate_ml(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int, kind: str,
                  method: str, n_neighbors: int, seed: int,
                  ctx: ScanContext | None) -> EstimationResult:
    start = time.perf_counter()
    if ctx is None:
        ctx = ScanContext(db, t_obs)
    try:
        sctx = build_surrogate_context(db, s_obs, t_obs, n_neighbors, kind, ctx=ctx)
        x, fun = minimize_surrogate(sctx, s_obs, seed=seed)
    except (FitError, DegenerateGeometryError, NumericError):
        fallback = estimate_grid_ml(db, s_obs, t_obs, n_neighbors, ctx=ctx)
        fallback.method = method
        fallback.flags = fallback.flags + ("surrogate-fallback",)
        fallback.wall_time = time.perf_counter() - start
        return fallback
    return EstimationResult(method=method, names=db.space.names,
                            theta=db.space.to_user(x), objective=-fun,
                            t_prepaid=sctx.t_prepaid,
                            neighbors=sctx.neighbors.indices,
                            wall_time=time.perf_counter() - start)


def estimate_svm_ml(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int,
                    n_neighbors: int = DEFAULT_NEIGHBORS, seed: int = 0,
                    ctx: ScanContext | None = None) -> EstimationResult:
    """Kernel-surrogate maximum synthetic likelihood inside the neighbor box."""
    return _surrogate_ml(db, s_obs, t_obs, "svm", "svm-ml", n_neighbors, seed, ctx)


def estimate_lin_ml(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int,
                    n_neighbors: int = DEFAULT_NEIGHBORS, seed: int = 0,
                    ctx: ScanContext | None = None) -> EstimationResult:
    """As estimate_svm_ml but with per-statistic linear regressions."""
    return _surrogate_ml(db, s_obs, t_obs, "linear", "lin-ml", n_neighbors, seed, ctx)


def estimate_grid_map(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int,
                      prior: Prior, n_neighbors: int = DEFAULT_NEIGHBORS,
                      ctx: ScanContext | None = None) -> EstimationResult:
    """Grid argmax of synthetic log-likelihood plus log prior density."""
    start = time.perf_counter()
    if ctx is None:
        ctx = ScanContext(db, t_obs)
    post = ctx.logliks(s_obs) + prior.logpdf_many(db.space.to_user(db.theta))
    order = np.lexsort((np.arange(db.omega), -post))
    top = order[:min(n_neighbors, db.omega)]
    best = int(top[0])
    if not np.isfinite(post[best]):
        raise NumericError("prior excludes every usable grid point")
    return EstimationResult(method="grid-map", names=db.space.names,
                            theta=db.space.to_user(db.theta[best]),
                            objective=float(post[best]),
                            t_prepaid=ctx.t_prepaid, neighbors=top,
                            wall_time=time.perf_counter() - start)


def _tying_scores(candidates_d: np.ndarray, fixed_d: np.ndarray, sigma: float) -> np.ndarray:
    """Tying log-density contribution of one dimension for each candidate value,
    the other conditions held at fixed_d."""
    c = len(fixed_d) + 1
    mean = (fixed_d.sum() + candidates_d) / c
    sq = (candidates_d - mean) ** 2 + np.sum((fixed_d[:, None] - mean[None, :]) ** 2, axis=0)
    return -0.5 * sq / (sigma * sigma) - 0.5 * c * _LOG_2PI


def estimate_multicondition(db: PrepaidDatabase, s_obs_list, t_obs_list,
                            tied_dims, sigma_prior: float,
                            shortlist: int = 1000, sweeps: int = 5) -> list[EstimationResult]:
    """Joint estimation across conditions with selected dimensions tied by a
    normal deviation-from-mean prior.

    Each condition gets a shortlist of its best grid points; the joint objective
    (sum of per-condition synthetic log-likelihoods plus the tying log prior) is
    maximized by greedy coordinate sweeps over the shortlists.  Tied dimensions
    are reported as the across-condition mean unless sigma_prior is infinite.
    """
    start = time.perf_counter()
    if len(s_obs_list) < 2 or len(s_obs_list) != len(t_obs_list):
        raise DomainError("need at least two conditions with matching t_obs entries")
    tying = TyingPrior(tied_dims=tuple(tied_dims), sigma_prior=float(sigma_prior))
    n_cond = len(s_obs_list)
    size = min(shortlist, db.omega)

    idx, theta, ll, t_near = [], [], [], []
    for s_obs, t_obs in zip(s_obs_list, t_obs_list):
        ctx = ScanContext(db, t_obs)
        nn = nn_by_synthlik(db, s_obs, t_obs, size, ctx=ctx)
        idx.append(nn.indices)
        theta.append(db.theta[nn.indices])
        ll.append(nn.scores)
        t_near.append(ctx.t_prepaid)

    sel = [int(np.argmax(l)) for l in ll]
    if not math.isinf(tying.sigma_prior):
        for _ in range(sweeps):
            changed = False
            for c in range(n_cond):
                scores = ll[c].copy()
                for d in tying.tied_dims:
                    fixed = np.array([theta[o][sel[o], d] for o in range(n_cond) if o != c])
                    scores += _tying_scores(theta[c][:, d], fixed, tying.sigma_prior)
                new = int(np.argmax(scores))
                if new != sel[c]:
                    sel[c] = new
                    changed = True
            if not changed:
                break

    chosen = np.array([theta[c][sel[c]] for c in range(n_cond)])
    objective = float(sum(ll[c][sel[c]] for c in range(n_cond)) + tying.logpdf_joint(chosen))
    flags = ()
    if not math.isinf(tying.sigma_prior):
        chosen[:, list(tying.tied_dims)] = chosen[:, list(tying.tied_dims)].mean(axis=0)
        flags = ("tied-dims-averaged",)
    elapsed = time.perf_counter() - start
    return [EstimationResult(method="multicond", names=db.space.names,
                             theta=db.space.to_user(chosen[c]), objective=objective,
                             t_prepaid=t_near[c],
                             neighbors=idx[c][:DEFAULT_NEIGHBORS],
                             wall_time=elapsed, flags=flags)
            for c in range(n_cond)]


def tune_sigma_prior(db: PrepaidDatabase, model: Model, t_obs_list, tied_dims,
                     candidates, replications: int = 20, seed: int = 0,
                     trim: float = 0.01) -> float:
    """Pick the tying width minimizing summed tied-dimension RMSE over simulated
    replications of the experimental design.  Deterministic per seed."""
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise DomainError("need at least one candidate")
    if len(candidates) == 1:
        return candidates[0]
    tied = list(tied_dims)
    untied = [d for d in range(db.ndim) if d not in tied]
    lo, hi = db.space.grid_lower, db.space.grid_upper

    truths, stats = [], []
    for i in range(replications):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        rng = np.random.default_rng(ss)
        base = lo + (trim + rng.random(db.ndim) * (1 - 2 * trim)) * (hi - lo)
        truth = np.tile(base, (len(t_obs_list), 1))
        for c in range(1, len(t_obs_list)):
            truth[c, untied] = lo[untied] + (trim + rng.random(len(untied)) * (1 - 2 * trim)) \
                * (hi[untied] - lo[untied])
        s_obs = []
        for c, t_obs in enumerate(t_obs_list):
            data = model.simulate(db.space.to_user(truth[c]), int(t_obs), ss.spawn(1)[0])
            s_obs.append(model.summarize(data))
        truths.append(truth)
        stats.append(s_obs)

    best = None
    for cand in candidates:
        sq = 0.0
        for truth, s_obs in zip(truths, stats):
            results = estimate_multicondition(db, s_obs, t_obs_list, tied, cand)
            est = np.array([db.space.to_grid(r.theta) for r in results])
            sq += float(np.sum((est[:, tied] - truth[:, tied]) ** 2))
        rmse = math.sqrt(sq / (replications * len(t_obs_list) * len(tied)))
        if best is None or rmse < best[0]:
            best = (rmse, cand)
    return best[1]
