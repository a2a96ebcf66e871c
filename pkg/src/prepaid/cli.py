"""Command-line client for grid building, estimation, studies, and the service."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .api import (DB_DIR_ENV, database_summary, load_database_checked,
                  perform_estimate, resolve_statistics)
from .domain import DomainError
from .estimators import (METHODS, make_estimator, recovery_study,
                         write_report_csv, write_report_json)
from .grid import build_database
from .models import build_model, model_ids
from .storage import save_database
from .theory import toy_rmse_study, write_toy_csv, write_toy_matrix


@click.group()
def main():
    """Likelihood-free estimation from a precomputed simulation database."""


def _fail(exc: Exception, usage: bool = False):
    if usage:
        raise click.UsageError(str(exc))
    raise click.ClickException(str(exc))


def _echo(payload: dict, as_json: bool):
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for key, value in payload.items():
            click.echo(f"{key}: {value}")


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


@main.command("build-grid")
@click.option("--model", "model_id", required=True,
              type=click.Choice(model_ids()), help="Simulator to prepay.")
@click.option("--points", required=True, type=int, help="Grid size (omega).")
@click.option("--tsim", required=True, type=int, help="Simulation length per grid point.")
@click.option("--t-prepaid", "t_prepaid", default="100,1000", show_default=True,
              help="Comma-separated segment lengths to store.")
@click.option("--samples", default=0, type=int, show_default=True,
              help="Replicate segment statistics stored per point and length.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--workers", default=1, type=int, show_default=True)
@click.option("--config", "config_json", default=None,
              help="Model configuration overrides as JSON.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def build_grid(model_id, points, tsim, t_prepaid, samples, seed, workers,
               config_json, out_path, as_json):
    """Simulate and store a prepaid database."""
    try:
        config = json.loads(config_json) if config_json else {}
        model = build_model(model_id, config)
        lengths = [int(t) for t in _parse_floats(t_prepaid)]
        db = build_database(model, points, tsim, lengths, m_samples=samples,
                            seed=seed, worker_count=workers)
        save_database(db, out_path)
    except DomainError as exc:
        _fail(exc, usage=True)
    except Exception as exc:
        _fail(exc)
    _echo({"path": str(out_path), "omega": db.omega,
           "failed_points": int(np.sum(~db.ok_mask))}, as_json)


@main.command("estimate")
@click.option("--db", "db_path", required=True, type=click.Path(dir_okay=False))
@click.option("--method", default="grid-ml", show_default=True,
              type=click.Choice(METHODS))
@click.option("--data", "data_path", default=None, type=click.Path(dir_okay=False),
              help="Dataset file in the model's text format.")
@click.option("--stats", default=None, help="Comma-separated summary statistics.")
@click.option("--t-obs", "t_obs", default=None, type=int)
@click.option("--neighbors", default=100, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--bootstrap", "bootstrap_b", default=0, type=int, show_default=True,
              help="Parametric bootstrap replicates for a confidence interval.")
@click.option("--ci-level", default=0.95, type=float, show_default=True)
@click.option("--prior", "prior_json", default=None,
              help="Prior description as JSON (grid-map only).")
@click.option("--include-posterior", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
def estimate(db_path, method, data_path, stats, t_obs, neighbors, seed,
             bootstrap_b, ci_level, prior_json, include_posterior, as_json):
    """Estimate parameters for one dataset or statistics vector."""
    try:
        db = load_database_checked(db_path)
        data_text = Path(data_path).read_text() if data_path else None
        statistics = _parse_floats(stats) if stats is not None else None
        s_obs, t_obs = resolve_statistics(db, data_text, statistics, t_obs)
        prior_spec = json.loads(prior_json) if prior_json else None
        result = perform_estimate(db, method, s_obs, t_obs,
                                  n_neighbors=neighbors, seed=seed,
                                  prior_spec=prior_spec, bootstrap_b=bootstrap_b,
                                  ci_level=ci_level)
    except DomainError as exc:
        _fail(exc, usage=True)
    except Exception as exc:
        _fail(exc)
    _echo(result.to_dict(include_posterior=include_posterior), as_json)


@main.command("recover")
@click.option("--db", "db_path", required=True, type=click.Path(dir_okay=False))
@click.option("--items", default=50, type=int, show_default=True)
@click.option("--t-obs", "t_obs", default="100", show_default=True,
              help="Comma-separated observation lengths.")
@click.option("--methods", default="grid-ml,svm-ml", show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--trim", default=0.01, type=float, show_default=True)
@click.option("--bootstrap", "bootstrap_b", default=0, type=int, show_default=True)
@click.option("--out-csv", default=None, type=click.Path(dir_okay=False))
@click.option("--out-json", default=None, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def recover(db_path, items, t_obs, methods, seed, trim, bootstrap_b,
            out_csv, out_json, as_json):
    """Parameter-recovery study against simulated truths."""
    try:
        db = load_database_checked(db_path)
        model = build_model(db.model_id, db.model_config)
        t_list = [int(t) for t in _parse_floats(t_obs)]
        method_map = {}
        for name in methods.split(","):
            name = name.strip()
            if name not in METHODS:
                raise DomainError(f"unknown method {name!r}; valid: {', '.join(METHODS)}")
            method_map[name] = make_estimator(name)
        report = recovery_study(db, model, method_map, items, t_list, seed=seed,
                                trim=trim, bootstrap_b=bootstrap_b)
        if out_csv:
            write_report_csv(report, out_csv)
        if out_json:
            write_report_json(report, out_json)
    except DomainError as exc:
        _fail(exc, usage=True)
    except Exception as exc:
        _fail(exc)
    _echo({"summary": report["summary"]}, as_json)


@main.command("toy-study")
@click.option("--situation", default=1, type=click.IntRange(1, 2), show_default=True)
@click.option("--deltas", default=None,
              help="Comma-separated gap sizes (default: log-spaced 1e-4..1e-1).")
@click.option("--neighbors", default="10,30,100,300", show_default=True)
@click.option("--replications", default=2000, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--t-obs", "t_obs", default=100, type=int, show_default=True)
@click.option("--t-sim", "t_sim", default=1000, type=int, show_default=True)
@click.option("--out-csv", default=None, type=click.Path(dir_okay=False))
@click.option("--out-matrix", default=None, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def toy_study(situation, deltas, neighbors, replications, seed, t_obs, t_sim,
              out_csv, out_matrix, as_json):
    """RMSE surface of the normal-mean example over (gap, neighbor) cells."""
    try:
        delta_values = (_parse_floats(deltas) if deltas
                        else np.geomspace(1e-4, 1e-1, 7).tolist())
        n_values = [int(n) for n in _parse_floats(neighbors)]
        result = toy_rmse_study(delta_values, n_values, situation=situation,
                                replications=replications, seed=seed,
                                t_obs=t_obs, t_sim=t_sim)
        if out_csv:
            write_toy_csv(result, out_csv)
        if out_matrix:
            write_toy_matrix(result, out_matrix)
    except DomainError as exc:
        _fail(exc, usage=True)
    except Exception as exc:
        _fail(exc)
    payload = {"deltas": [float(d) for d in result.deltas],
               "n_values": [int(n) for n in result.n_values],
               "rmse": result.rmse.tolist(),
               "excluded": result.excluded.tolist()}
    _echo(payload, as_json)


@main.command("serve")
@click.option("--db-dir", default=None, type=click.Path(file_okay=False),
              help=f"Database directory (default: ${DB_DIR_ENV}).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
@click.option("--timeout", default=60, type=int, show_default=True,
              help="Per-request timeout passed to the server.")
def serve(db_dir, host, port, timeout):
    """Run the HTTP estimation service."""
    try:
        import uvicorn

        from .service import create_app
        app = create_app(db_dir)
    except DomainError as exc:
        _fail(exc, usage=True)
    except Exception as exc:
        _fail(exc)
    uvicorn.run(app, host=host, port=port, timeout_keep_alive=timeout)


@main.command("inspect")
@click.option("--db", "db_path", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def inspect(db_path, as_json):
    """Print the header summary of a database file."""
    try:
        db = load_database_checked(db_path)
    except DomainError as exc:
        _fail(exc, usage=True)
    except Exception as exc:
        _fail(exc)
    _echo(database_summary(Path(db_path).stem, db), as_json)


if __name__ == "__main__":
    sys.exit(main())
