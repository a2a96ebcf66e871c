"""HTTP estimation service over a directory of prepaid databases."""
from __future__ import annotations

import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from ..api import (database_summary, discover_databases, load_database_checked,
                   perform_estimate, resolve_statistics)
from ..domain import DomainError
from .schemas import (EstimateRequest, EstimateResponse, HealthOut, IntervalOut,
                      ModelOut, SpaceOut)


def create_app(db_dir: str | Path | None = None) -> FastAPI:
    """Application serving every PPDB file found in the database directory.

    Databases are loaded once at startup and never mutated, so requests are
    safely concurrent and retryable.
    """
    app = FastAPI(title="prepaid estimation service")
    paths = discover_databases(db_dir)
    if not paths:
        raise DomainError("database directory contains no .ppdb files")
    databases = {key: load_database_checked(p) for key, p in paths.items()}

    @app.exception_handler(DomainError)
    async def domain_error(request: Request, exc: DomainError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        diagnostic = uuid.uuid4().hex
        return JSONResponse(status_code=500,
                            content={"detail": f"estimation failed ({type(exc).__name__})",
                                     "diagnostic_id": diagnostic})

    @app.get("/v1/health", response_model=HealthOut)
    async def health():
        return HealthOut(status="ok", models=sorted(databases))

    @app.get("/v1/models", response_model=list[ModelOut])
    async def models():
        out = []
        for key in sorted(databases):
            info = database_summary(key, databases[key])
            out.append(ModelOut(key=info["key"], model_id=info["model_id"],
                                omega=info["omega"], t_sim=info["t_sim"],
                                t_prepaid=info["t_prepaid"],
                                m_samples=info["m_samples"],
                                failed_points=info["failed_points"],
                                space=SpaceOut(**info["space"]),
                                schema_names=info["schema"]["names"]))
        return out

    @app.post("/v1/estimate", response_model=EstimateResponse)
    def estimate(req: EstimateRequest):
        db = databases.get(req.model)
        if db is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown model {req.model!r}; "
                                       f"available: {', '.join(sorted(databases))}")
        s_obs, t_obs = resolve_statistics(db, req.data, req.statistics, req.t_obs)
        opts = req.options
        result = perform_estimate(db, req.method, s_obs, t_obs,
                                  n_neighbors=opts.n_neighbors, seed=opts.seed,
                                  prior_spec=None if opts.prior is None
                                  else opts.prior.model_dump(),
                                  bootstrap_b=opts.bootstrap_b,
                                  ci_level=opts.ci_level)
        payload = result.to_dict(include_posterior=req.include_posterior)
        ci = payload.get("ci")
        return EstimateResponse(model=req.model, method=result.method,
                                theta=payload["theta"],
                                objective=payload["objective"],
                                t_prepaid=payload["t_prepaid"], t_obs=t_obs,
                                neighbors=payload["neighbors"],
                                ci=None if ci is None else IntervalOut(**ci),
                                posterior=payload.get("posterior"),
                                wall_time=payload["wall_time"],
                                flags=payload["flags"])

    return app
