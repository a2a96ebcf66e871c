"""Quasi-random grid design and prepaid database construction."""
from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .domain import DomainError, Model, ParameterSpace, StatSchema, point_seed

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53)

# skip the early part of the sequence to avoid startup correlation between bases
DEFAULT_HALTON_BURN = 20

FLAG_OK = 0
FLAG_FAILED = 1

FORMAT_VERSION = 1


def radical_inverse(index: int, base: int) -> float:
    if index < 1:
        raise DomainError("Halton index starts at 1")
    value, inv_base = 0.0, 1.0 / base
    f = inv_base
    while index > 0:
        value += (index % base) * f
        index //= base
        f *= inv_base
    return value


def halton_point(index: int, k: int) -> np.ndarray:
    """Point `index` (1-based) of the K-dimensional Halton sequence in [0,1)^K."""
    if k > len(PRIMES):
        raise DomainError(f"at most {len(PRIMES)} dimensions supported")
    return np.array([radical_inverse(index, PRIMES[d]) for d in range(k)])


def design_grid(space: ParameterSpace, n_points: int,
                burn: int = DEFAULT_HALTON_BURN) -> np.ndarray:
    """(n_points, K) grid-scale parameter matrix, Halton sequence mapped into the box."""
    if n_points < 1:
        raise DomainError("need at least one grid point")
    k = space.ndim
    unit = np.array([halton_point(burn + i + 1, k) for i in range(n_points)])
    lo, hi = space.grid_lower, space.grid_upper
    return lo + unit * (hi - lo)


def expected_gap(space: ParameterSpace, n_points: int) -> np.ndarray:
    """Expected per-dimension spacing (range / n^(1/K)) of an equally spaced grid."""
    if n_points < 1:
        raise DomainError("need at least one grid point")
    return (space.grid_upper - space.grid_lower) / n_points ** (1.0 / space.ndim)


@dataclasses.dataclass
class PrepaidDatabase:
    """Immutable after construction; all estimation queries are read-only."""

    model_id: str
    model_config: dict
    space: ParameterSpace
    schema: StatSchema
    t_sim: int
    t_prepaid: tuple[int, ...]
    m_samples: int
    build_seed: int
    halton_burn: int
    theta: np.ndarray                      # (omega, K), grid scale
    mu: np.ndarray                         # (omega, R)
    cov_tril: dict[int, np.ndarray]        # T -> (omega, R*(R+1)/2) lower triangle, row order
    samples: dict[int, np.ndarray]         # T -> (omega, M, R)
    flags: np.ndarray                      # (omega,) uint8
    format_version: int = FORMAT_VERSION

    @property
    def omega(self) -> int:
        return len(self.theta)

    @property
    def ndim(self) -> int:
        return self.theta.shape[1]

    @property
    def nstats(self) -> int:
        return self.mu.shape[1]

    @property
    def ok_mask(self) -> np.ndarray:
        return self.flags == FLAG_OK

    def cov_stack(self, t_prepaid: int) -> np.ndarray:
        """Full symmetric (omega, R, R) covariance stack for one prepaid length."""
        tril = self.cov_tril[t_prepaid]
        r = self.nstats
        rows, cols = np.tril_indices(r)
        out = np.zeros((len(tril), r, r))
        out[:, rows, cols] = tril
        out[:, cols, rows] = tril
        return out

    def cov(self, index: int, t_prepaid: int) -> np.ndarray:
        return _tril_to_full(self.cov_tril[t_prepaid][index], self.nstats)

    def header_dict(self) -> dict:
        return {
            "magic": "PPDB",
            "format_version": self.format_version,
            "model_id": self.model_id,
            "model_config": self.model_config,
            "ndim": self.ndim,
            "nstats": self.nstats,
            "omega": self.omega,
            "t_sim": self.t_sim,
            "t_prepaid": list(self.t_prepaid),
            "m_samples": self.m_samples,
            "build_seed": self.build_seed,
            "halton_burn": self.halton_burn,
            "space": {
                "names": list(self.space.names),
                "lower": self.space.lower.tolist(),
                "upper": self.space.upper.tolist(),
                "transforms": list(self.space.transforms),
            },
            "schema": {
                "names": list(self.schema.names),
                "feasible_low": self.schema.feasible_low.tolist(),
                "feasible_high": self.schema.feasible_high.tolist(),
            },
        }


def _tril_to_full(tril: np.ndarray, r: int) -> np.ndarray:
    rows, cols = np.tril_indices(r)
    out = np.zeros((r, r))
    out[rows, cols] = tril
    out[cols, rows] = tril
    return out


def full_to_tril(cov: np.ndarray) -> np.ndarray:
    r = cov.shape[-1]
    rows, cols = np.tril_indices(r)
    return cov[..., rows, cols]


def _build_points(model: Model, theta_grid: np.ndarray, indices: np.ndarray,
                  t_sim: int, t_prepaid: tuple[int, ...], m_samples: int,
                  build_seed: int):
    """Records for one index range: (mu rows, tril rows per T, sample rows per T, flags)."""
    r = model.schema.nstats
    n = len(indices)
    ntril = r * (r + 1) // 2
    mu = np.zeros((n, r))
    tril = {t: np.zeros((n, ntril)) for t in t_prepaid}
    samples = {t: np.zeros((n, m_samples, r)) for t in t_prepaid} if m_samples else {}
    flags = np.zeros(n, dtype=np.uint8)
    theta_user = model.space.to_user(theta_grid)
    for row, p in enumerate(indices):
        try:
            dataset = model.simulate(theta_user[row], t_sim, point_seed(build_seed, int(p)))
            mu[row] = model.summarize(dataset)
            for t in t_prepaid:
                seg_stats = model.summarize_segments(dataset, t)
                seg_cov = np.atleast_2d(np.cov(seg_stats, rowvar=False, ddof=1))
                tril[t][row] = full_to_tril(seg_cov)
                if m_samples:
                    samples[t][row] = seg_stats[:m_samples]
        except Exception:
            flags[row] = FLAG_FAILED
    return mu, tril, samples, flags


def build_database(model: Model, n_points: int, t_sim: int,
                   t_prepaid: tuple[int, ...] | list[int], m_samples: int = 0,
                   seed: int = 0, worker_count: int = 1,
                   halton_burn: int = DEFAULT_HALTON_BURN) -> PrepaidDatabase:
    """Simulate the prepaid grid.  Deterministic in `seed` regardless of `worker_count`."""
    t_prepaid = tuple(int(t) for t in t_prepaid)
    if not t_prepaid:
        raise DomainError("need at least one prepaid length")
    for t in t_prepaid:
        if t_sim % t != 0:
            raise DomainError(f"t_sim must be divisible by every prepaid length (got {t})")
        n_seg = t_sim // t
        if n_seg < 2:
            raise DomainError("need at least two segments per prepaid length")
        if m_samples > n_seg:
            raise DomainError("m_samples cannot exceed the segment count")
    theta = design_grid(model.space, n_points, burn=halton_burn)
    all_indices = np.arange(n_points)

    if worker_count <= 1:
        parts = [_build_points(model, theta, all_indices, t_sim, t_prepaid, m_samples, seed)]
        chunks = [all_indices]
    else:
        chunks = np.array_split(all_indices, worker_count * 4)
        chunks = [c for c in chunks if len(c)]
        with ProcessPoolExecutor(max_workers=worker_count) as pool:
            parts = list(pool.map(_build_points,
                                  [model] * len(chunks),
                                  [theta[c] for c in chunks],
                                  chunks,
                                  [t_sim] * len(chunks),
                                  [t_prepaid] * len(chunks),
                                  [m_samples] * len(chunks),
                                  [seed] * len(chunks)))

    r = model.schema.nstats
    ntril = r * (r + 1) // 2
    mu = np.zeros((n_points, r))
    cov_tril = {t: np.zeros((n_points, ntril)) for t in t_prepaid}
    samples = {t: np.zeros((n_points, m_samples, r)) for t in t_prepaid} if m_samples else {}
    flags = np.zeros(n_points, dtype=np.uint8)
    for chunk, (mu_c, tril_c, samples_c, flags_c) in zip(chunks, parts):
        mu[chunk] = mu_c
        flags[chunk] = flags_c
        for t in t_prepaid:
            cov_tril[t][chunk] = tril_c[t]
            if m_samples:
                samples[t][chunk] = samples_c[t]

    return PrepaidDatabase(model_id=model.id, model_config=model.config(),
                           space=model.space, schema=model.schema,
                           t_sim=int(t_sim), t_prepaid=t_prepaid,
                           m_samples=int(m_samples), build_seed=int(seed),
                           halton_burn=int(halton_burn),
                           theta=theta, mu=mu, cov_tril=cov_tril,
                           samples=samples, flags=flags)
