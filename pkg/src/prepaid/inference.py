"""Likelihood and distance machinery over the prepaid database."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .domain import DomainError
from .grid import PrepaidDatabase

# jitter ladder applied to near-singular covariances before giving up
_JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


class NumericError(RuntimeError):
    pass


class EmptyDatabaseError(RuntimeError):
    pass


@dataclass(frozen=True)
class NeighborSet:
    """Record indices sorted best-first with their matching objective values."""
    indices: np.ndarray
    scores: np.ndarray


def regularized_cholesky(cov: np.ndarray, label: str = "covariance") -> np.ndarray:
    """Lower Cholesky factor, escalating diagonal jitter before failing."""
    cov = np.asarray(cov, dtype=float)
    scale = float(np.mean(np.diag(cov)))
    base = scale if scale > 0 else 1.0
    for lam in _JITTER_LADDER:
        try:
            return np.linalg.cholesky(cov + lam * base * np.eye(len(cov)))
        except np.linalg.LinAlgError:
            continue
    raise NumericError(f"{label}: covariance not factorizable after jitter escalation")


def synthetic_loglik(s_obs: np.ndarray, mu: np.ndarray, cov: np.ndarray) -> float:
    """-1/2 (s-mu)' cov^-1 (s-mu) - 1/2 log|cov|, via a triangular factorization."""
    chol = regularized_cholesky(cov)
    diff = np.asarray(s_obs, dtype=float) - np.asarray(mu, dtype=float)
    z = sla.solve_triangular(chol, diff, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * float(z @ z) - 0.5 * logdet


def scale_cov(cov: np.ndarray, t_prepaid: int, t_obs: int) -> np.ndarray:
    """Adapt a stored covariance to the observed sample size: (T_prepaid/T_obs) * cov."""
    if t_obs < 1:
        raise DomainError("t_obs must be at least 1")
    return (t_prepaid / t_obs) * np.asarray(cov, dtype=float)


def nearest_t_prepaid(t_list, t_obs: int) -> int:
    """The stored length closest to t_obs in logarithmic scale (ties: smaller T)."""
    if t_obs < 1:
        raise DomainError("t_obs must be at least 1")
    best = min(sorted(t_list), key=lambda t: abs(math.log(t) - math.log(t_obs)))
    return int(best)


class ScanContext:
    """Precomputed per-record inverse covariances and log-determinants for one
    (database, t_obs) pair; reused across bootstrap replicates and full scans."""

    def __init__(self, db: PrepaidDatabase, t_obs: int):
        self.db = db
        self.t_obs = int(t_obs)
        self.t_prepaid = nearest_t_prepaid(db.t_prepaid, t_obs)
        covs = scale_cov(db.cov_stack(self.t_prepaid), self.t_prepaid, t_obs)
        ok = db.ok_mask.copy()
        chols, bad = _batched_cholesky(covs, ok)
        ok &= ~bad
        if not np.any(ok):
            raise EmptyDatabaseError("no usable grid points in database")
        r = db.nstats
        eye = np.eye(r)
        inv_chol = np.linalg.solve(chols[ok], np.broadcast_to(eye, (int(ok.sum()), r, r)))
        self.ok = ok
        self.precision = np.zeros_like(covs)
        self.precision[ok] = np.einsum("nki,nkj->nij", inv_chol, inv_chol)
        self.logdet = np.full(db.omega, np.inf)
        diags = np.einsum("nii->ni", chols[ok])
        self.logdet[ok] = 2.0 * np.sum(np.log(diags), axis=1)

    def logliks(self, s_obs: np.ndarray) -> np.ndarray:
        """(omega,) synthetic log-likelihoods; -inf at failed/unfactorizable records."""
        diff = np.asarray(s_obs, dtype=float)[None, :] - self.db.mu
        quad = np.einsum("ni,nij,nj->n", diff, self.precision, diff)
        out = np.full(self.db.omega, -np.inf)
        out[self.ok] = -0.5 * quad[self.ok] - 0.5 * self.logdet[self.ok]
        return out


def _batched_cholesky(covs: np.ndarray, ok: np.ndarray):
    """Cholesky factors of a covariance stack with per-record jitter recovery.

    Returns (factors, bad_mask); rows outside `ok` or unfactorizable after the
    jitter ladder are flagged bad and left as identity."""
    n, r, _ = covs.shape
    chols = np.broadcast_to(np.eye(r), covs.shape).copy()
    bad = np.zeros(n, dtype=bool)
    work = covs[ok]
    try:
        chols[ok] = np.linalg.cholesky(work)
        return chols, bad
    except np.linalg.LinAlgError:
        pass
    for i in np.flatnonzero(ok):
        try:
            chols[i] = regularized_cholesky(covs[i], label=f"grid point {i}")
        except NumericError:
            bad[i] = True
    return chols, bad


def nn_by_synthlik(db: PrepaidDatabase, s_obs: np.ndarray, t_obs: int, n: int,
                   ctx: ScanContext | None = None) -> NeighborSet:
    """Top-N grid points by synthetic log-likelihood; exhaustive scan, ties by index."""
    if n > db.omega:
        raise DomainError("cannot request more neighbors than grid points")
    if ctx is None:
        ctx = ScanContext(db, t_obs)
    ll = ctx.logliks(s_obs)
    # stable sort on (-loglik, index) implements the lower-index tie rule
    order = np.lexsort((np.arange(db.omega), -ll))
    top = order[:n]
    return NeighborSet(indices=top, scores=ll[top])


def mahalanobis_eps(s_sample: np.ndarray, s_obs: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(s - s_obs)' W^-1 (s - s_obs); `s_sample` may be a vector or an (n, R) matrix."""
    chol = regularized_cholesky(w, label="pooled covariance")
    diff = np.atleast_2d(np.asarray(s_sample, dtype=float) - np.asarray(s_obs, dtype=float))
    z = sla.solve_triangular(chol, diff.T, lower=True)
    eps = np.einsum("rn,rn->n", z, z)
    return eps if np.asarray(s_sample).ndim > 1 else float(eps[0])


def rescale_posterior(samples: np.ndarray, t_prepaid: int, t_obs: int) -> np.ndarray:
    """Contract/dilate about the sample mean so the covariance scales by
    T_prepaid/T_obs while the mean is unchanged."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 2:
        raise DomainError("need at least two posterior samples to rescale")
    factor = math.sqrt(t_prepaid / t_obs)
    mean = samples.mean(axis=0)
    return mean + factor * (samples - mean)
