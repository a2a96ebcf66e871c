"""Shared database fixtures.

Everything here is deterministic: fixed build seeds, fixed grid sizes.  The
desk-scale databases are only requested by the acceptance suite, so unit-test
runs stay fast.
"""
import math

import numpy as np
import pytest

from prepaid.domain import ParameterSpace, StatSchema
from prepaid.grid import PrepaidDatabase, build_database, design_grid, full_to_tril
from prepaid.models import build_model


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    """Echo the one-line acceptance verdicts past output capture."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ricker_model():
    return build_model("ricker")


@pytest.fixture(scope="session")
def ricker_small_db(ricker_model):
    """Small Ricker database with stored replicate samples, a few seconds to build."""
    return build_database(ricker_model, 400, 20000, (100, 1000), m_samples=20, seed=3)


@pytest.fixture(scope="session")
def ricker_desk_db(ricker_model):
    """Desk-scale Ricker database used by the acceptance studies (about 90 s)."""
    return build_database(ricker_model, 5000, 100000, (100, 1000), seed=11)


@pytest.fixture(scope="session")
def trait_model():
    return build_model("trait", {"j_size": 100, "s_count": 200})


@pytest.fixture(scope="session")
def trait_small_db():
    model = build_model("trait", {"j_size": 50, "s_count": 80})
    return build_database(model, 80, 20, (1,), m_samples=10, seed=5), model


@pytest.fixture(scope="session")
def trait_desk_db(trait_model):
    """Desk-scale trait database with 200 stored samples per point (about 60 s)."""
    return build_database(trait_model, 2000, 250, (1,), m_samples=200, seed=7)


@pytest.fixture(scope="session")
def toy_model():
    return build_model("toy")


@pytest.fixture(scope="session")
def toy_db(toy_model):
    return build_database(toy_model, 5000, 10000, (100,), seed=9)


@pytest.fixture(scope="session")
def toy_sample_db(toy_model):
    """Toy database with stored replicate samples for the rejection methods."""
    return build_database(toy_model, 3000, 10000, (100,), m_samples=50, seed=13)


def make_synthetic_db(n_points: int, noise: float = 0.0, seed: int = 0):
    """Database whose statistics are exact smooth functions of two parameters.

    With noise == 0 the mean surface is known analytically, which gives the
    surrogate estimators a recoverable ground truth.
    """
    space = ParameterSpace(names=("a", "b"),
                           lower=np.array([-1.0, -1.0]),
                           upper=np.array([1.0, 1.0]),
                           transforms=("identity", "identity"))
    schema = StatSchema(names=("s1", "s2", "s3", "s4"),
                        feasible_low=np.full(4, -math.inf),
                        feasible_high=np.full(4, math.inf))
    theta = design_grid(space, n_points)
    mu = np.column_stack([
        theta[:, 0],
        theta[:, 1],
        theta[:, 0] + theta[:, 1],
        theta[:, 0] - theta[:, 1],
    ])
    if noise:
        rng = np.random.default_rng(seed)
        mu = mu + noise * rng.standard_normal(mu.shape)
    cov = np.array([[0.04, 0.01, 0.0, 0.0],
                    [0.01, 0.04, 0.0, 0.0],
                    [0.0, 0.0, 0.05, 0.01],
                    [0.0, 0.0, 0.01, 0.05]])
    tril = full_to_tril(cov)
    return PrepaidDatabase(model_id="synthetic", model_config={}, space=space,
                           schema=schema, t_sim=10000, t_prepaid=(100,),
                           m_samples=0, build_seed=seed, halton_burn=20,
                           theta=theta, mu=mu,
                           cov_tril={100: np.tile(tril, (n_points, 1))},
                           samples={}, flags=np.zeros(n_points, dtype=np.uint8))


@pytest.fixture(scope="session")
def synthetic_db():
    return make_synthetic_db(2000)


@pytest.fixture(scope="session")
def synthetic_big_db():
    return make_synthetic_db(100000)


@pytest.fixture(scope="session")
def service_db_dir(tmp_path_factory, ricker_small_db):
    from prepaid.storage import save_database
    d = tmp_path_factory.mktemp("dbs")
    save_database(ricker_small_db, d / "ricker.ppdb")
    return d
