"""Single request-handling path shared by the CLI and the HTTP service."""
from __future__ import annotations

import os
import threading
from pathlib import Path

import numpy as np

from .domain import DomainError, Prior, ScaledBetaPrior, UniformBoxPrior
from .estimators import (METHODS, bootstrap_ci, estimate_grid_map,
                         make_estimator)
from .grid import PrepaidDatabase
from .inference import ScanContext
from .models import build_model
from .storage import load_database

DB_DIR_ENV = "PREPAID_DB_DIR"
DB_SUFFIX = ".ppdb"

# databases are immutable, so the per-(database, t_obs) scan precomputation is
# shared across requests; entries live as long as the database object
_SCAN_CACHE: dict[tuple[int, int], ScanContext] = {}
_SCAN_LOCK = threading.Lock()


def get_scan_context(db: PrepaidDatabase, t_obs: int) -> ScanContext:
    key = (id(db), int(t_obs))
    with _SCAN_LOCK:
        ctx = _SCAN_CACHE.get(key)
    if ctx is not None and ctx.db is db:
        return ctx
    ctx = ScanContext(db, t_obs)
    with _SCAN_LOCK:
        _SCAN_CACHE[key] = ctx
    return ctx


def discover_databases(db_dir: str | Path | None = None) -> dict[str, Path]:
    """Map served model keys (file stems) to PPDB paths under the database
    directory, which defaults to $PREPAID_DB_DIR."""
    if db_dir is None:
        db_dir = os.environ.get(DB_DIR_ENV)
    if db_dir is None:
        raise DomainError(f"no database directory given and {DB_DIR_ENV} is unset")
    db_dir = Path(db_dir)
    if not db_dir.is_dir():
        raise DomainError(f"database directory {db_dir} does not exist")
    return {p.stem: p for p in sorted(db_dir.glob(f"*{DB_SUFFIX}"))}


def build_prior(db: PrepaidDatabase, spec: dict | None) -> Prior:
    """Prior over the user-scale box from a serializable description."""
    if spec is None or spec.get("kind", "uniform") == "uniform":
        return UniformBoxPrior(lower=db.space.lower, upper=db.space.upper)
    if spec["kind"] == "beta":
        alpha = np.asarray(spec["alpha"], dtype=float)
        beta = np.asarray(spec["beta"], dtype=float)
        if len(alpha) != db.ndim or len(beta) != db.ndim:
            raise DomainError("alpha/beta must have one entry per parameter")
        if np.any(alpha <= 0) or np.any(beta <= 0):
            raise DomainError("beta prior shapes must be positive")
        return ScaledBetaPrior(lower=db.space.lower, upper=db.space.upper,
                               alpha=alpha, beta=beta)
    raise DomainError(f"unknown prior kind {spec.get('kind')!r}")


def database_summary(key: str, db: PrepaidDatabase) -> dict:
    return {
        "key": key,
        "model_id": db.model_id,
        "omega": db.omega,
        "t_sim": db.t_sim,
        "t_prepaid": list(db.t_prepaid),
        "m_samples": db.m_samples,
        "failed_points": int(np.sum(~db.ok_mask)),
        "space": {
            "names": list(db.space.names),
            "lower": db.space.lower.tolist(),
            "upper": db.space.upper.tolist(),
            "transforms": list(db.space.transforms),
        },
        "schema": {"names": list(db.schema.names)},
    }


def resolve_statistics(db: PrepaidDatabase, data_text: str | None,
                       statistics: list | None, t_obs: int | None):
    """Turn a request's data-or-statistics payload into (s_obs, t_obs)."""
    if (data_text is None) == (statistics is None):
        raise DomainError("provide exactly one of data and statistics")
    if data_text is not None:
        model = build_model(db.model_id, db.model_config)
        dataset = model.parse_dataset(data_text)
        if t_obs is None:
            t_obs = len(dataset)
        return model.summarize(dataset), int(t_obs)
    if t_obs is None or t_obs < 1:
        raise DomainError("statistics requests need t_obs >= 1")
    s_obs = np.asarray(statistics, dtype=float)
    if s_obs.shape != (db.nstats,):
        raise DomainError(f"expected {db.nstats} statistics, got {len(s_obs)}")
    return s_obs, int(t_obs)


def perform_estimate(db: PrepaidDatabase, method: str, s_obs: np.ndarray,
                     t_obs: int, n_neighbors: int = 100, seed: int = 0,
                     prior_spec: dict | None = None, bootstrap_b: int = 0,
                     ci_level: float = 0.95):
    """Run one estimation request; returns an EstimationResult."""
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")
    ctx = get_scan_context(db, t_obs)
    if method == "grid-map":
        result = estimate_grid_map(db, s_obs, t_obs, build_prior(db, prior_spec),
                                   n_neighbors=n_neighbors, ctx=ctx)
    elif method in ("grid-ml", "svm-ml", "lin-ml"):
        options = {"n_neighbors": n_neighbors, "ctx": ctx}
        if method != "grid-ml":
            options["seed"] = seed
        result = make_estimator(method, **options)(db, s_obs, t_obs)
    elif method == "abc-svm-pm":
        result = make_estimator(method, seed=seed, ctx=ctx)(db, s_obs, t_obs)
    else:
        result = make_estimator(method, ctx=ctx)(db, s_obs, t_obs)
    if bootstrap_b > 0:
        model = build_model(db.model_id, db.model_config)
        result = bootstrap_ci(db, model, s_obs, t_obs, estimate=result,
                              level=ci_level, n_boot=bootstrap_b, seed=seed,
                              n_neighbors=n_neighbors)
    return result


def load_database_checked(path: str | Path) -> PrepaidDatabase:
    path = Path(path)
    if not path.exists():
        raise DomainError(f"database file {path} does not exist")
    return load_database(path)
