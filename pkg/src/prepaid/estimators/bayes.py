"""Bayesian pipelines over the prepaid database: synthetic-likelihood posterior
mean, rejection sampling on stored replicate samples, and its surrogate-boosted
refinement."""
from __future__ import annotations

import math
import time

import numpy as np
from scipy import linalg as sla

from ..domain import DomainError
from ..grid import PrepaidDatabase
from ..inference import (ScanContext, mahalanobis_eps, regularized_cholesky,
                         rescale_posterior)
from ..learn import (DegenerateGeometryError, FitError, enclosing_ellipsoid,
                     fit_tuned_surrogate, hcluster)
from .freq import estimate_grid_ml
from .results import EstimationResult, PosteriorSample

DEFAULT_POSTERIOR_SIZE = 1000
DEFAULT_COVERAGE = 0.999
DEFAULT_CI_LEVEL = 0.95


class UnsupportedMethodError(RuntimeError):
    pass


def posterior_mean_sl(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int,
                      ctx: ScanContext | None = None) -> EstimationResult:
    """Likelihood-weighted mean over the whole grid; the grid plays the prior."""
    start = time.perf_counter()
    if ctx is None:
        ctx = ScanContext(db, t_obs)
    ll = ctx.logliks(s_obs)
    finite = np.isfinite(ll)
    if not np.any(finite):
        fallback = estimate_grid_ml(db, s_obs, t_obs, ctx=ctx)
        fallback.method = "sl-grid-pm"
        fallback.flags = fallback.flags + ("weight-underflow-fallback",)
        return fallback
    # max-subtracted exponentiation keeps the weights representable
    w = np.zeros(db.omega)
    w[finite] = np.exp(ll[finite] - ll[finite].max())
    w /= w.sum()
    theta_hat = w @ db.theta
    posterior = PosteriorSample(theta_grid=db.theta[finite], weights=w[finite])
    low, high = _credible_interval(db, posterior)
    return EstimationResult(method="sl-grid-pm", names=db.space.names,
                            theta=db.space.to_user(theta_hat),
                            objective=float(ll[finite].max()),
                            t_prepaid=ctx.t_prepaid,
                            ci_level=DEFAULT_CI_LEVEL, ci_low=low, ci_high=high,
                            posterior=posterior,
                            wall_time=time.perf_counter() - start)


def _credible_interval(db: PrepaidDatabase, posterior: PosteriorSample,
                       level: float = DEFAULT_CI_LEVEL):
    tail = 0.5 * (1.0 - level)
    q = posterior.quantiles([tail, 1.0 - tail])
    return db.space.to_user(q[0]), db.space.to_user(q[1])


def _sample_stage(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int,
                  n_posterior: int, coverage: float,
                  ctx: ScanContext | None = None):
    """Shared front end of the sample-based methods: high-likelihood subset,
    pooled covariance, and per-sample distances.

    Returns (subset indices, pooled covariance, eps matrix (Q, M), t_prepaid)."""
    if db.m_samples == 0:
        raise UnsupportedMethodError("database was built without replicate samples")
    if ctx is None:
        ctx = ScanContext(db, t_obs)
    ll = ctx.logliks(s_obs)
    finite = np.isfinite(ll)
    n_finite = int(finite.sum())
    if n_finite * db.m_samples < n_posterior:
        raise DomainError("too few stored samples for the requested posterior size")
    order = np.lexsort((np.arange(db.omega), -ll))[:n_finite]
    w = np.exp(ll[order] - ll[order[0]])
    w /= w.sum()
    q = int(np.searchsorted(np.cumsum(w), coverage) + 1)
    q = min(max(q, math.ceil(n_posterior / db.m_samples)), n_finite)
    subset = order[:q]
    flat = db.samples[ctx.t_prepaid][subset].reshape(q * db.m_samples, db.nstats)
    pooled = np.atleast_2d(np.cov(flat, rowvar=False, ddof=1))
    eps = mahalanobis_eps(flat, s_obs, pooled).reshape(q, db.m_samples)
    return subset, pooled, eps, ctx.t_prepaid


def abc_grid_pm(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int,
                n_posterior: int = DEFAULT_POSTERIOR_SIZE,
                coverage: float = DEFAULT_COVERAGE,
                ctx: ScanContext | None = None) -> EstimationResult:
    """Rejection sampling over the stored replicate samples of the
    high-likelihood subset; posterior = parameters of the smallest-distance
    samples, rescaled when the stored segment length differs from t_obs."""
    start = time.perf_counter()
    subset, _, eps, t_near = _sample_stage(db, s_obs, t_obs, n_posterior, coverage, ctx)
    flat_eps = eps.reshape(-1)
    sel = np.argsort(flat_eps, kind="stable")[:n_posterior]
    theta_post = db.theta[subset[sel // db.m_samples]]
    flags = ()
    if t_near != t_obs:
        theta_post = rescale_posterior(theta_post, t_near, t_obs)
        flags = ("posterior-rescaled",)
    posterior = PosteriorSample(theta_grid=theta_post, weights=np.ones(n_posterior))
    low, high = _credible_interval(db, posterior)
    return EstimationResult(method="abc-grid-pm", names=db.space.names,
                            theta=db.space.to_user(posterior.mean()),
                            objective=-float(flat_eps[sel[-1]]),
                            t_prepaid=t_near, neighbors=subset[:100],
                            ci_level=DEFAULT_CI_LEVEL, ci_low=low, ci_high=high,
                            posterior=posterior, flags=flags,
                            wall_time=time.perf_counter() - start)


def abc_svm_pm(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int,
               n_posterior: int = DEFAULT_POSTERIOR_SIZE,
               coverage: float = DEFAULT_COVERAGE,
               n_top: int = 100, cluster_cap: int = 50, cluster_min: int = 20,
               n_draw: int = 1000, keep: int = 5000,
               rel_tol: float = 1e-3, max_iter: int = 50,
               seed: int = 0, ctx: ScanContext | None = None) -> EstimationResult:
    """Surrogate-boosted refinement of abc_grid_pm.

    The top grid points by small-distance sample count are clustered; each
    cluster gets per-statistic surrogates and an enclosing ellipsoid, then an
    iterative resample-predict-translate loop contracts the ellipsoid around
    low-distance parameter values.  The final posterior pools the best samples
    across clusters, weighted by ellipsoid volume.
    """
    start = time.perf_counter()
    subset, pooled, eps, t_near = _sample_stage(db, s_obs, t_obs, n_posterior, coverage, ctx)
    chol_w = regularized_cholesky(pooled, label="pooled covariance")
    m = db.m_samples

    # rank prepaid points by how many of the globally best samples they own
    flat_eps = eps.reshape(-1)
    best = np.argsort(flat_eps, kind="stable")[:n_posterior]
    counts = np.bincount(best // m, minlength=len(subset))
    min_eps = eps.min(axis=1)
    point_order = np.lexsort((np.arange(len(subset)), min_eps, -counts))
    top = subset[point_order[:min(n_top, len(subset))]]

    ok_idx = np.flatnonzero(db.ok_mask)
    z_mean = db.theta[ok_idx].mean(axis=0)
    z_std = db.theta[ok_idx].std(axis=0)
    z_std = np.where(z_std > 0, z_std, 1.0)
    z_all = (db.theta[ok_idx] - z_mean) / z_std

    clusters = hcluster(db.theta[top], cluster_cap)
    flags: list[str] = []
    pools = []   # per cluster: (eps values, theta rows, ellipsoid volume)
    for cid, members in enumerate(clusters):
        pts = top[members]
        if len(pts) < cluster_min:
            # pad with the nearest grid points in standardized parameter space
            centroid = ((db.theta[pts] - z_mean) / z_std).mean(axis=0)
            dist = np.linalg.norm(z_all - centroid, axis=1)
            order = ok_idx[np.argsort(dist, kind="stable")]
            extra = order[~np.isin(order, pts)][:cluster_min - len(pts)]
            pts = np.concatenate([pts, extra])
        try:
            result = _refine_cluster(db, s_obs, pts, t_near, chol_w, n_draw, keep,
                                     rel_tol, max_iter, seed, cid)
        except (DegenerateGeometryError, FitError):
            flags.append(f"cluster-{cid}-skipped")
            continue
        pools.append(result)

    if not pools:
        fallback = abc_grid_pm(db, s_obs, t_obs, n_posterior, coverage)
        fallback.method = "abc-svm-pm"
        fallback.flags = fallback.flags + tuple(flags) + ("cluster-fallback",)
        return fallback

    all_eps = np.concatenate([p[0] for p in pools])
    all_theta = np.concatenate([p[1] for p in pools])
    all_vol = np.concatenate([np.full(len(p[0]), p[2]) for p in pools])
    sel = np.argsort(all_eps, kind="stable")[:n_posterior]
    if len(sel) < n_posterior:
        raise DomainError("refinement produced too few samples for the posterior")
    theta_post = all_theta[sel]
    if t_near != t_obs:
        theta_post = rescale_posterior(theta_post, t_near, t_obs)
        flags.append("posterior-rescaled")
    posterior = PosteriorSample(theta_grid=theta_post, weights=all_vol[sel])
    low, high = _credible_interval(db, posterior)
    theta_hat = np.clip(posterior.mean(), db.space.grid_lower, db.space.grid_upper)
    return EstimationResult(method="abc-svm-pm", names=db.space.names,
                            theta=db.space.to_user(theta_hat),
                            objective=-float(all_eps[sel].max()),
                            t_prepaid=t_near, neighbors=top,
                            ci_level=DEFAULT_CI_LEVEL, ci_low=low, ci_high=high,
                            posterior=posterior, flags=tuple(flags),
                            wall_time=time.perf_counter() - start)


def _refine_cluster(db: PrepaidDatabase, s_obs: np.ndarray, pts: np.ndarray,
                    t_near: int, chol_w: np.ndarray, n_draw: int, keep: int,
                    rel_tol: float, max_iter: int, seed: int, cid: int):
    """Ellipsoid contraction loop for one cluster.

    Keeps a running pool of the lowest-distance (sample, parameter) pairs, so
    the worst kept distance is nonincreasing by construction."""
    x = db.theta[pts]
    surrogates = [fit_tuned_surrogate(x, db.mu[pts, j]) for j in range(db.nstats)]
    ellipse = enclosing_ellipsoid(x)
    donors_z, d_mean, d_std = _standardized(x)
    donor_samples = db.samples[t_near][pts]        # (P, M, R)
    m = db.m_samples

    kept_eps = np.empty(0)
    kept_theta = np.empty((0, db.ndim))
    worst = math.inf
    for it in range(max_iter):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(cid, it))
        cand = ellipse.sample(n_draw, ss)
        preds = db.schema.clamp(np.column_stack([s.predict(cand) for s in surrogates]))
        cz = (cand - d_mean) / d_std
        dist = np.linalg.norm(cz[:, None, :] - donors_z[None, :, :], axis=2)
        donor = np.argmin(dist, axis=1)
        shift = preds - db.mu[pts[donor]]
        shifted = db.schema.clamp(donor_samples[donor] + shift[:, None, :])
        diff = shifted.reshape(-1, db.nstats) - np.asarray(s_obs, dtype=float)
        z = sla.solve_triangular(chol_w, diff.T, lower=True)
        new_eps = np.einsum("rn,rn->n", z, z)
        new_theta = np.repeat(cand, m, axis=0)

        merged_eps = np.concatenate([kept_eps, new_eps])
        merged_theta = np.concatenate([kept_theta, new_theta])
        order = np.argsort(merged_eps, kind="stable")[:keep]
        kept_eps = merged_eps[order]
        kept_theta = merged_theta[order]
        new_worst = float(kept_eps[-1]) if len(kept_eps) == keep else math.inf
        improved = worst - new_worst > rel_tol * abs(worst) if math.isfinite(worst) else True
        worst = min(worst, new_worst)
        if not improved:
            break
        unique_theta = np.unique(kept_theta, axis=0)
        try:
            ellipse = enclosing_ellipsoid(unique_theta)
        except DegenerateGeometryError:
            break
    return kept_eps, kept_theta, ellipse.volume()


def _standardized(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (x - mean) / std, mean, std
