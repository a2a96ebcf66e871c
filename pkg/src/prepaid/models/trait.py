"""Trait-based community dynamics: death/replacement process with environmental filtering."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..domain import DomainError, Model, ParameterSpace, StatSchema

STAT_NAMES = ("richness", "entropy", "trait_mean", "trait_skew")

TRAIT_AXIS = (0.0, 100.0)


def filtering_value(u, theta_user) -> np.ndarray:
    """Competitive value F(u) = 1 + A * exp(-(u - h)^2 / (2 sigma^2))."""
    _, a, h, sigma = (float(x) for x in np.asarray(theta_user, dtype=float))
    if sigma <= 0:
        raise DomainError("filter width must be positive")
    u = np.asarray(u, dtype=float)
    return 1.0 + a * np.exp(-((u - h) ** 2) / (2.0 * sigma * sigma))


@njit(cache=True)
def _run_deaths(counts: np.ndarray, f: np.ndarray, imm: float, j_size: int,
                n_burn: int, n_frames: int, thin: int, u: np.ndarray) -> np.ndarray:
    s_count = counts.shape[0]
    frames = np.zeros((n_frames, s_count), np.int64)
    p_imm = imm / (imm + j_size + 1.0)
    idx = 0
    total = n_burn + n_frames * thin
    for d in range(total):
        # dying individual chosen uniformly, i.e. species weighted by abundance
        r0 = u[d, 0] * j_size
        acc = 0.0
        k = s_count - 1
        for s in range(s_count):
            acc += counts[s]
            if r0 < acc:
                k = s
                break
        counts[k] -= 1
        if u[d, 1] < p_imm:
            s_new = int(u[d, 2] * s_count)
            if s_new >= s_count:
                s_new = s_count - 1
        else:
            tot = 0.0
            for s in range(s_count):
                tot += counts[s] * f[s]
            r2 = u[d, 2] * tot
            acc = 0.0
            s_new = s_count - 1
            for s in range(s_count):
                acc += counts[s] * f[s]
                if r2 < acc:
                    s_new = s
                    break
        counts[s_new] += 1
        if d >= n_burn and (d - n_burn + 1) % thin == 0:
            frames[idx] = counts
            idx += 1
    return frames


def regional_traits(s_count: int) -> np.ndarray:
    return np.linspace(TRAIT_AXIS[0], TRAIT_AXIS[1], s_count)


def simulate_trait(theta_user: np.ndarray, j_size: int, s_count: int, steps: int,
                   thin: int, burn_in: int, seed) -> np.ndarray:
    """Species-count frames (one row per `thin` deaths after burn-in).

    With steps == 0 the single recorded frame is the initial community.
    """
    theta = np.asarray(theta_user, dtype=float)
    imm = float(theta[0])
    if j_size < 2 or s_count < 2:
        raise DomainError("need at least two individuals and two regional species")
    if imm <= 0:
        raise DomainError("immigration intensity must be positive")
    rng = np.random.default_rng(seed)
    counts = np.bincount(rng.integers(0, s_count, size=j_size), minlength=s_count).astype(np.int64)
    if steps == 0:
        return counts[None, :].copy()
    if steps < thin:
        raise DomainError("steps must cover at least one thinning interval")
    f = filtering_value(regional_traits(s_count), theta)
    n_frames = steps // thin
    u = rng.random((burn_in + n_frames * thin, 3))
    return _run_deaths(counts, f, imm, j_size, burn_in, n_frames, thin, u)


def trait_stats(frames: np.ndarray, traits: np.ndarray | None = None,
                with_flag: bool = False):
    """Per-frame [richness, Shannon entropy, trait mean, trait skewness], averaged
    across frames.  Skewness uses biased (1/n) central moments over individuals;
    single-species frames get skewness 0 and raise the degeneracy flag."""
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    n, s_count = frames.shape
    if traits is None:
        traits = regional_traits(s_count)
    j = frames.sum(axis=1)
    p = frames / j[:, None]
    richness = (frames > 0).sum(axis=1).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(frames > 0, p * np.log(p), 0.0)
    entropy = -plogp.sum(axis=1)
    mean = p @ traits
    dev = traits[None, :] - mean[:, None]
    m2 = np.einsum("ij,ij->i", p, dev ** 2)
    m3 = np.einsum("ij,ij->i", p, dev ** 3)
    degenerate = m2 <= 1e-12
    skew = np.where(degenerate, 0.0, m3 / np.where(degenerate, 1.0, m2) ** 1.5)
    per_frame = np.column_stack([richness, entropy, mean, skew])
    out = per_frame.mean(axis=0)
    return (out, bool(degenerate.any())) if with_flag else out


def trait_space() -> ParameterSpace:
    # theta = (I, A, h, sigma); grid scale is log for I, A and sigma
    return ParameterSpace(names=("I", "A", "h", "sigma"),
                          lower=np.array([math.exp(3.0), 0.1, -25.0, 0.5]),
                          upper=np.array([math.exp(5.0), 5.0, 125.0, 25.0]),
                          transforms=("log", "log", "identity", "log"))


def trait_schema(j_size: int, s_count: int) -> StatSchema:
    inf = math.inf
    max_rich = float(min(j_size, s_count))
    return StatSchema(names=STAT_NAMES,
                      feasible_low=np.array([1.0, 0.0, TRAIT_AXIS[0], -inf]),
                      feasible_high=np.array([max_rich, math.log(max_rich), TRAIT_AXIS[1], inf]))


class TraitModel(Model):
    t_min = 1

    def __init__(self, j_size: int = 500, s_count: int = 1000,
                 thin: int | None = None, burn_in: int | None = None):
        self.id = "trait"
        self.j_size = j_size
        self.s_count = s_count
        self.thin = thin if thin is not None else j_size
        self.burn_in = burn_in if burn_in is not None else 100 * j_size
        self.space = trait_space()
        self.schema = trait_schema(j_size, s_count)
        self.traits = regional_traits(s_count)

    def simulate(self, theta_user, t, seed):
        return simulate_trait(theta_user, self.j_size, self.s_count,
                              steps=t * self.thin, thin=self.thin,
                              burn_in=self.burn_in, seed=seed)

    def summarize(self, dataset):
        return trait_stats(dataset, self.traits)

    def summarize_segments(self, dataset, t_seg):
        frames = np.atleast_2d(np.asarray(dataset, dtype=float))
        per_frame = self._per_frame_stats(frames)
        n_seg = len(frames) // t_seg
        return per_frame[:n_seg * t_seg].reshape(n_seg, t_seg, -1).mean(axis=1)

    def _per_frame_stats(self, frames):
        return _per_frame_stats(frames, self.traits)

    def parse_dataset(self, text: str) -> np.ndarray:
        """One whitespace-separated species abundance vector per line."""
        rows = [[int(tok) for tok in line.split()] for line in text.splitlines() if line.strip()]
        if not rows:
            raise DomainError("empty trait dataset")
        frames = np.asarray(rows, dtype=np.int64)
        if frames.shape[1] != self.s_count:
            raise DomainError(f"expected {self.s_count} species columns, got {frames.shape[1]}")
        return frames

    def config(self):
        return {"j_size": self.j_size, "s_count": self.s_count,
                "thin": self.thin, "burn_in": self.burn_in}


def _per_frame_stats(frames: np.ndarray, traits: np.ndarray) -> np.ndarray:
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    out = np.empty((len(frames), 4))
    # trait_stats is already vectorized across frames before averaging
    j = frames.sum(axis=1)
    p = frames / j[:, None]
    out[:, 0] = (frames > 0).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(frames > 0, p * np.log(p), 0.0)
    out[:, 1] = -plogp.sum(axis=1)
    mean = p @ traits
    out[:, 2] = mean
    dev = traits[None, :] - mean[:, None]
    m2 = np.einsum("ij,ij->i", p, dev ** 2)
    m3 = np.einsum("ij,ij->i", p, dev ** 3)
    degenerate = m2 <= 1e-12
    out[:, 3] = np.where(degenerate, 0.0, m3 / np.where(degenerate, 1.0, m2) ** 1.5)
    return out
