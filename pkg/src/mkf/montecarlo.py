"""Monte Carlo estimates of expression expectations.

Sampling is chunked: chunk ``k`` of a run seeded with ``seed`` draws from
its own generator keyed by ``(seed, k)``, so totals are bit-reproducible
for a fixed chunk size no matter how chunks are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .expand import RandomVectorSpec
from .expr import as_expr, evaluate
from .linalg import eig_sym

__all__ = [
    "McEstimate",
    "chunk_rng",
    "sample_correlated_gaussian",
    "sample_random_vector",
    "mc_expectation",
    "DEFAULT_CHUNK",
]

DEFAULT_CHUNK = 1 << 18


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("need at least two samples")
        if not self.std_error >= 0:
            raise ValueError("std_error must be >= 0")

    def within(self, exact: float, k: float = 5.0) -> bool:
        return abs(self.value - exact) <= k * self.std_error


def chunk_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator fully determined by the pair ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def _gaussian_factor(cov) -> np.ndarray:
    dec = eig_sym(cov, psd=True)
    return dec.T * np.sqrt(dec.lambdas)


def sample_correlated_gaussian(mean, cov, n: int, seed: int = 0, stream: int = 0) -> np.ndarray:
    """``n`` draws (rows) from ``N(mean, cov)`` using an eigen square root."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    L = _gaussian_factor(cov)
    z = chunk_rng(seed, stream).standard_normal((n, mean.size))
    return mean + z @ L.T


def sample_random_vector(rv: RandomVectorSpec, n: int, rng: np.random.Generator, factor=None) -> dict:
    """Dictionary of name -> sample array for every variable in ``rv``."""
    out = {}
    if rv.gaussian_names:
        L = _gaussian_factor(rv.cov) if factor is None else factor
        z = rng.standard_normal((n, len(rv.gaussian_names)))
        x = rv.mean + z @ L.T
        for i, name in enumerate(rv.gaussian_names):
            out[name] = x[:, i]
    for name, law in rv.independent:
        out[name] = law.sample(rng, n)
    return out


def _chunk_stats(e, rv, factor, seed, k, size):
    rng = chunk_rng(seed, k)
    values = evaluate(e, sample_random_vector(rv, size, rng, factor))
    values = np.broadcast_to(np.asarray(values, dtype=float), (size,))
    mean = float(values.mean())
    m2 = float(np.sum((values - mean) ** 2))
    return size, mean, m2


def mc_expectation(
    e,
    rv: RandomVectorSpec,
    n: int = 10**6,
    seed: int = 0,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> McEstimate:
    """Sample mean of ``e`` under ``rv`` with its standard error.

    Per-chunk means and sums of squared deviations are merged in chunk order
    (Chan's pairwise update), so the result depends only on ``seed``, ``n``
    and ``chunk``.
    """
    if n < 1000:
        raise ValueError("use at least 1000 samples")
    e = as_expr(e)
    factor = _gaussian_factor(rv.cov) if rv.gaussian_names else None
    sizes = [chunk] * (n // chunk) + ([n % chunk] if n % chunk else [])
    jobs = [(e, rv, factor, seed, k, size) for k, size in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            stats = list(pool.map(lambda a: _chunk_stats(*a), jobs))
    else:
        stats = [_chunk_stats(*a) for a in jobs]
    count, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in stats:
        total = count + nb
        delta = mb - mean
        mean += delta * nb / total
        m2 += m2b + delta * delta * count * nb / total
        count = total
    var = m2 / (count - 1)
    return McEstimate(mean, math.sqrt(var / count), count)
