"""Monte Carlo NBW sampler and central-limit diagnostics.

Sampling draws the first step uniformly from ``m`` directions and every later
step uniformly from the ``m - 1`` directions other than the reversal of the
previous one: draw ``c`` in ``{0..m-2}`` and take ``c + (c >= rev(prev))``.

Ensembles are generated in fixed chunks of :data:`CHUNK` paths, chunk ``i``
seeded by ``SeedSequence(seed).spawn(...)[i]`` on numpy's PCG64.  Output is
therefore identical for any number of worker threads.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import stats

from .lattice import StepSet
from .spectral import bn_ratio, fdd_char_function

CHUNK = 1 << 14
RNG_NAME = "numpy.random.PCG64"


def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("NBW_THREADS")
    return max(1, int(env)) if env else 1


def _chunk_sizes(count: int) -> list[int]:
    full, rest = divmod(count, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _generators(seed: int, chunks: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(chunks)]


def _walk_chunk(step_set: StepSet, n: int, size: int, rng: np.random.Generator, keep_paths: bool):
    """Return ``(directions or None, endpoints)`` for ``size`` independent walks."""
    m = step_set.degree
    rev = np.asarray(step_set.reversal)
    steps = step_set.array
    end = np.zeros((size, step_set.dim), dtype=np.int64)
    dirs = np.empty((size, n), dtype=np.int16) if keep_paths else None
    if n == 0:
        return dirs, end
    cur = rng.integers(0, m, size=size)
    end += steps[cur]
    if keep_paths:
        dirs[:, 0] = cur
    for i in range(1, n):
        c = rng.integers(0, m - 1, size=size)
        cur = c + (c >= rev[cur])
        end += steps[cur]
        if keep_paths:
            dirs[:, i] = cur
    return dirs, end


def _run(step_set, n, count, seed, keep_paths, workers):
    if count < 1:
        raise ValueError("count must be at least 1")
    if n < 0:
        raise ValueError("n must be non-negative")
    sizes = _chunk_sizes(count)
    gens = _generators(seed, len(sizes))
    jobs = [(step_set, n, size, g, keep_paths) for size, g in zip(sizes, gens)]
    w = _workers(workers)
    if w == 1:
        parts = [_walk_chunk(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=w) as pool:
            parts = list(pool.map(lambda job: _walk_chunk(*job), jobs))
    ends = np.concatenate([p[1] for p in parts])
    dirs = np.concatenate([p[0] for p in parts]) if keep_paths else None
    return dirs, ends


@dataclass(frozen=True)
class PathSample:
    steps: np.ndarray
    positions: np.ndarray
    rng_seed: tuple[int, int]   # (ensemble seed, index within ensemble)


@dataclass(frozen=True)
class Ensemble:
    """An i.i.d. ensemble of uniform ``n``-step NBWs.

    ``directions`` is ``None`` for endpoint-only ensembles.
    """

    step_set: StepSet
    n: int
    seed: int
    endpoints: np.ndarray
    directions: np.ndarray | None = None

    @property
    def count(self) -> int:
        return self.endpoints.shape[0]

    def positions(self) -> np.ndarray:
        if self.directions is None:
            raise ValueError("endpoint-only ensemble carries no paths")
        steps = self.step_set.array[self.directions]
        zero = np.zeros((self.count, 1, self.step_set.dim), dtype=np.int64)
        return np.concatenate([zero, np.cumsum(steps, axis=1)], axis=1)

    def __iter__(self) -> Iterator[PathSample]:
        pos = self.positions()
        for i in range(self.count):
            yield PathSample(self.directions[i], pos[i], (self.seed, i))

    def backtrack_free(self) -> bool:
        if self.directions is None or self.n < 2:
            return True
        rev = np.asarray(self.step_set.reversal)
        return bool(np.all(self.directions[:, 1:] != rev[self.directions[:, :-1]]))

    def statistics(self) -> dict:
        scaled = self.endpoints / math.sqrt(max(self.n, 1))
        sq = np.einsum("ij,ij->i", self.endpoints, self.endpoints).astype(float)
        return {
            "n": self.n,
            "count": self.count,
            "seed": self.seed,
            "rng": RNG_NAME,
            "numpy": np.__version__,
            "mean": scaled.mean(axis=0).tolist(),
            "covariance": empirical_covariance(self).matrix.tolist(),
            "mean_square_norm": float(sq.mean()),
        }

    def to_json(self) -> str:
        return json.dumps(self.statistics(), sort_keys=True)

    def dump_directions(self) -> str:
        """Newline-delimited direction indices, one path per line."""
        if self.directions is None:
            raise ValueError("endpoint-only ensemble carries no paths")
        return "".join(" ".join(map(str, row)) + "\n" for row in self.directions.tolist())


def sample_paths(step_set: StepSet, n: int, count: int, seed: int, workers: int | None = None) -> Ensemble:
    dirs, ends = _run(step_set, n, count, seed, True, workers)
    return Ensemble(step_set, n, seed, ends, dirs)


def sample_endpoints(step_set: StepSet, n: int, count: int, seed: int, workers: int | None = None) -> Ensemble:
    """Same draws as :func:`sample_paths`, keeping only the endpoints."""
    _, ends = _run(step_set, n, count, seed, False, workers)
    return Ensemble(step_set, n, seed, ends)


# -- covariance ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceTarget:
    """``H = sum_x x x^T D(x)`` and the NBW limit ``M = H m / (m - 2)``."""

    H: np.ndarray
    M: np.ndarray

    @classmethod
    def of(cls, step_set: StepSet) -> "CovarianceTarget":
        m = step_set.degree
        if m < 3:
            raise ValueError("limit covariance needs m >= 3")
        x = step_set.array.astype(float)
        H = x.T @ x / m
        return cls(H, H * m / (m - 2))


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    stderr: np.ndarray
    count: int

    def z_scores(self, target: np.ndarray) -> np.ndarray:
        return np.abs(self.matrix - target) / self.stderr

    def within(self, target: np.ndarray, sigmas: float = 3.0) -> bool:
        return bool(np.all(self.z_scores(target) <= sigmas))


def empirical_covariance(ensemble: Ensemble) -> CovarianceEstimate:
    """Sample covariance of ``omega_n / sqrt(n)`` with per-entry standard errors."""
    N = ensemble.count
    X = ensemble.endpoints / math.sqrt(max(ensemble.n, 1))
    Xc = X - X.mean(axis=0)
    prods = Xc[:, :, None] * Xc[:, None, :]
    cov = prods.sum(axis=0) / (N - 1)
    stderr = prods.std(axis=0, ddof=1) / math.sqrt(N)
    return CovarianceEstimate(cov, stderr, N)


# -- deterministic CLT ---------------------------------------------------------------------------

def gaussian_limit(step_set: StepSet, k) -> float:
    """``exp(-k^T M k / 2)``; for nearest-neighbour sets ``exp(-|k|^2 / (2d - 2))``."""
    k = np.asarray(k, dtype=float)
    M = CovarianceTarget.of(step_set).M
    return math.exp(-float(k @ M @ k) / 2)


def endpoint_char_function_exact(step_set: StepSet, n: int, k) -> complex:
    """``b^_n(k / sqrt n) / b^_n(0)``."""
    k = np.asarray(k, dtype=float)
    return bn_ratio(step_set, k / math.sqrt(n), n)


@dataclass(frozen=True)
class FddReport:
    n: int
    breakpoints: tuple[float, ...]
    value: complex
    limit: float
    deviation: float

    def to_dict(self) -> dict:
        return {"n": self.n, "breakpoints": list(self.breakpoints), "value": [self.value.real, self.value.imag],
                "limit": self.limit, "deviation": self.deviation}


def fdd_gaussian_check(step_set: StepSet, n: int, breakpoints, waves) -> FddReport:
    """Compare the joint increment characteristic function at ``waves / sqrt(n)`` with
    ``exp(-sum_r k_r^T M k_r (t_r - t_{r-1}) / 2)``."""
    waves = [np.asarray(w, dtype=float) for w in waves]
    ts = [float(t) for t in breakpoints]
    value = fdd_char_function(step_set, n, ts, [w / math.sqrt(n) for w in waves])
    M = CovarianceTarget.of(step_set).M
    expo = sum(float(w @ M @ w) * (b - a) for w, a, b in zip(waves, [0.0] + ts, ts))
    limit = math.exp(-expo / 2)
    return FddReport(n, tuple(ts), value, limit, abs(value - limit))


# -- exactness tests -----------------------------------------------------------------------------

def path_frequencies(ensemble: Ensemble) -> dict[tuple[int, ...], int]:
    if ensemble.directions is None:
        raise ValueError("need a path ensemble")
    uniq, counts = np.unique(ensemble.directions, axis=0, return_counts=True)
    return {tuple(int(v) for v in u): int(c) for u, c in zip(uniq, counts)}


def chi_square_uniform(ensemble: Ensemble, expected_paths: list[tuple[int, ...]]):
    """Chi-square goodness of fit of path frequencies against the uniform law on ``expected_paths``.

    Returns ``(statistic, p_value, unexpected)`` where ``unexpected`` counts sampled
    paths outside the support.
    """
    freq = path_frequencies(ensemble)
    support = set(expected_paths)
    unexpected = sum(c for p, c in freq.items() if p not in support)
    observed = np.array([freq.get(p, 0) for p in expected_paths], dtype=float)
    res = stats.chisquare(observed)
    return float(res.statistic), float(res.pvalue), unexpected
