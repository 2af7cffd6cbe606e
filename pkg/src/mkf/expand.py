"""Exact expectations of mixed trigonometric-polynomial expressions.

The random vector is block structured: at most one jointly Gaussian block
with an arbitrary covariance plus any number of mutually independent scalar
variables.  The Gaussian block is rotated onto the eigenbasis of its
covariance,

    x = mu + T z,    z_j ~ N(0, lambda_j) independent,

after which every expanded term factorizes into one-dimensional moments
that are evaluated in closed form from characteristic functions.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .distributions import (
    IMAG_TOL,
    Distribution1D,
    Gaussian,
    MomentConsistencyError,
    _frequency_weights,
    trig_poly_moment,
)
from .expr import DEFAULT_TERM_LIMIT, Expr, Mul, as_expr, evaluate, flatten
from .linalg import NEG_EIG_TOL, NotPSDError, as_symmetric, eig_sym

__all__ = [
    "UnknownVariableError",
    "RandomVectorSpec",
    "WhitenedGaussian",
    "whiten",
    "expectation",
    "expectation_vector",
    "second_moment_matrix",
    "cross_moment_matrix",
    "MomentEngine",
]


class UnknownVariableError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class RandomVectorSpec:
    """Joint law of a correlated Gaussian block and independent scalars.

    Parameters
    ----------
    gaussian_names : sequence of str
        Names of the jointly Gaussian variables (may be empty).
    mean, cov : array_like
        Mean vector and covariance of the Gaussian block.
    independent : mapping or sequence of (name, Distribution1D)
        Scalar variables independent of everything else.
    """

    gaussian_names: tuple = ()
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cov: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    independent: tuple = ()

    def __post_init__(self):
        names = tuple(self.gaussian_names)
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float).reshape(len(names), len(names))
        indep = self.independent
        if isinstance(indep, Mapping):
            indep = tuple(indep.items())
        indep = tuple((str(n), d) for n, d in indep)
        if mean.shape != (len(names),):
            raise ValueError("mean length must match the number of Gaussian names")
        all_names = list(names) + [n for n, _ in indep]
        if len(set(all_names)) != len(all_names):
            raise ValueError(f"duplicate variable names in {all_names}")
        if names:
            cov = as_symmetric(cov)
            tol = NEG_EIG_TOL * max(1.0, float(np.max(np.abs(cov))))
            if np.linalg.eigvalsh(cov).min() < -tol:
                raise NotPSDError("Gaussian block covariance is not positive semidefinite")
        for n, d in indep:
            if not isinstance(d, Distribution1D):
                raise TypeError(f"law for {n!r} is not a Distribution1D")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "gaussian_names", names)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "independent", indep)

    @classmethod
    def gaussian(cls, names, mean, cov, independent=()):
        return cls(tuple(names), mean, cov, independent)

    @classmethod
    def from_laws(cls, laws):
        return cls(independent=laws)

    @property
    def names(self) -> tuple:
        return self.gaussian_names + tuple(n for n, _ in self.independent)

    def with_independent(self, laws) -> "RandomVectorSpec":
        if isinstance(laws, Mapping):
            laws = tuple(laws.items())
        return RandomVectorSpec(
            self.gaussian_names, self.mean, self.cov, self.independent + tuple(laws)
        )

    def decorrelated(self) -> "RandomVectorSpec":
        """Same marginals with the Gaussian correlations dropped."""
        laws = tuple(
            (n, Gaussian(float(m), float(v)))
            for n, m, v in zip(self.gaussian_names, self.mean, np.diag(self.cov))
        )
        return RandomVectorSpec(independent=laws + self.independent)

    def means(self) -> dict:
        out = dict(zip(self.gaussian_names, map(float, self.mean)))
        out.update((n, d.mean) for n, d in self.independent)
        return out

    def moment_matched(self) -> tuple[tuple, np.ndarray, np.ndarray]:
        """Names, mean and covariance of the matching joint Gaussian."""
        k = len(self.gaussian_names)
        n = k + len(self.independent)
        mean = np.zeros(n)
        cov = np.zeros((n, n))
        mean[:k] = self.mean
        cov[:k, :k] = self.cov
        for i, (_, d) in enumerate(self.independent, start=k):
            mean[i] = d.mean
            cov[i, i] = d.variance
        return self.names, mean, cov


@dataclass(frozen=True, eq=False)
class WhitenedGaussian:
    """Eigenbasis view of a Gaussian block: ``x = T y``, ``y ~ N(means, diag(variances))``."""

    names: tuple
    T: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    mu: np.ndarray

    def pushback(self) -> np.ndarray:
        return (self.T * self.variances) @ self.T.T


def whiten(rv: RandomVectorSpec) -> WhitenedGaussian:
    dec = eig_sym(rv.cov, psd=True)
    return WhitenedGaussian(
        rv.gaussian_names, dec.T, dec.T.T @ rv.mean, dec.lambdas, rv.mean
    )


def _gaussian_tilted_table(var: float, t: np.ndarray, deg: int) -> np.ndarray:
    """``E[z^b exp(i t z)]`` for ``z ~ N(0, var)``, rows over ``t``, columns ``b = 0..deg``.

    Uses ``E[z^b e^{itz}] = phi(t) M_b`` with ``M_b = m M_{b-1} + (b-1) var M_{b-2}``
    and the complex shift ``m = i var t``.
    """
    m = 1j * var * t
    out = np.empty((t.size, deg + 1), dtype=complex)
    out[:, 0] = np.exp(-0.5 * var * t * t)
    if deg >= 1:
        out[:, 1] = m * out[:, 0]
    for b in range(2, deg + 1):
        out[:, b] = m * out[:, b - 1] + (b - 1) * var * out[:, b - 2]
    return out


class MomentEngine:
    """Evaluates flattened terms against one random vector.

    One-dimensional moments and expanded Gaussian factors are memoized for
    the lifetime of the engine, so batching related expectations through a
    single engine shares the whitening and most of the work.
    """

    def __init__(self, rv: RandomVectorSpec, limit: int = DEFAULT_TERM_LIMIT):
        self.rv = rv
        self.limit = limit
        self.laws = dict(rv.independent)
        self.gindex = {n: i for i, n in enumerate(rv.gaussian_names)}
        self.whitened = whiten(rv) if rv.gaussian_names else None
        if self.whitened is not None:
            lam = self.whitened.variances
            self.active = [j for j in range(len(lam)) if lam[j] > 0.0]
        self._lock = threading.Lock()
        self._indep: dict = {}
        self._gauss: dict = {}
        self._poly_parts: dict = {}
        self._tables: dict = {}

    # -- independent scalars -------------------------------------------
    def _indep_moment(self, name, factor):
        key = (name, factor)
        v = self._indep.get(key)
        if v is None:
            p, c, s, a = factor
            v = trig_poly_moment(self.laws[name], p, c, s, a)
            self._indep[key] = v
        return v

    # -- Gaussian block ---------------------------------------------------
    def _poly_part(self, powers: tuple) -> np.ndarray:
        """Dense coefficients of prod_i (mu_i + sum_j T_ij z_j)^p_i over active z."""
        out = self._poly_parts.get(powers)
        if out is not None:
            return out
        k = len(self.active)
        deg = sum(powers)
        out = np.zeros((deg + 1,) * k) if k else np.zeros(())
        out[(0,) * k] = 1.0
        T, mu = self.whitened.T, self.whitened.mu
        for i, p in enumerate(powers):
            for _ in range(p):
                nxt = mu[i] * out
                for axis, j in enumerate(self.active):
                    src = [slice(None)] * k
                    dst = [slice(None)] * k
                    src[axis] = slice(0, deg)
                    dst[axis] = slice(1, deg + 1)
                    nxt[tuple(dst)] += T[i, j] * out[tuple(src)]
                out = nxt
        self._poly_parts[powers] = out
        return out

    def _trig_tables(self, trig: tuple, deg: int):
        """Complex-exponential form of the trig part with per-z moment tables.

        ``prod_i cos^c(a x_i) sin^s(a x_i)`` is a finite sum of weighted
        ``exp(i w . x)``; with ``x = mu + T z`` each exponential factorizes
        over the independent ``z_j``.  Returns the weights (with the
        ``exp(i w . mu)`` phase folded in) and, for each active ``z_j``, the
        table ``E[z_j^b exp(i t z_j)]`` over frequencies and ``b = 0..deg``.
        """
        key = (trig, deg)
        out = self._tables.get(key)
        if out is not None:
            return out
        T, mu = self.whitened.T, self.whitened.mu
        n = T.shape[0]
        weights = np.ones(1, dtype=complex)
        omegas = np.zeros((1, n))
        for i, c, s, a in trig:
            fw = _frequency_weights(c, s)
            ws = np.array([w for _, w in fw], dtype=float) / (2 ** (c + s) * (1j) ** s)
            step = np.zeros((len(fw), n))
            step[:, i] = [m * a for m, _ in fw]
            weights = (weights[:, None] * ws[None, :]).reshape(-1)
            omegas = (omegas[:, None, :] + step[None, :, :]).reshape(-1, n)
        weights = weights * np.exp(1j * (omegas @ mu))
        tz = omegas @ T
        lam = self.whitened.variances
        tables = [_gaussian_tilted_table(float(lam[j]), tz[:, j], deg) for j in self.active]
        out = (weights, tables)
        self._tables[key] = out
        return out

    def gaussian_moment(self, gkey: tuple) -> float:
        """``E[prod_i x_i^p cos^c(a x_i) sin^s(a x_i)]`` over the Gaussian block."""
        v = self._gauss.get(gkey)
        if v is not None:
            return v
        powers = [0] * len(self.gindex)
        trig = []
        for name, (p, c, s, a) in gkey:
            i = self.gindex[name]
            powers[i] = p
            if c or s:
                trig.append((i, c, s, a))
        poly = self._poly_part(tuple(powers))
        weights, tables = self._trig_tables(tuple(trig), sum(powers))
        k = len(self.active)
        if k == 0:
            terms = complex(poly) * weights
        else:
            operands = [poly, list(range(k))]
            for axis in range(k):
                operands += [tables[axis], [k, axis]]
            terms = np.einsum(*operands, [k]) * weights
        total = complex(terms.sum())
        if abs(total.imag) > IMAG_TOL * max(1.0, float(np.abs(terms).sum())):
            raise MomentConsistencyError(f"imaginary residue {total.imag:.3e} in Gaussian moment {gkey}")
        v = total.real
        with self._lock:
            self._gauss[gkey] = v
        return v

    # -- public ---------------------------------------------------------
    def expect_terms(self, terms) -> float:
        total = 0.0
        gindex, laws = self.gindex, self.laws
        for coef, factors in terms:
            val = coef
            gkey = []
            for name, factor in factors:
                if name in gindex:
                    gkey.append((name, factor))
                elif name in laws:
                    val *= self._indep_moment(name, factor)
                else:
                    raise UnknownVariableError(f"variable {name!r} has no declared law")
            if gkey and val != 0.0:
                val *= self.gaussian_moment(tuple(gkey))
            total += val
        return total

    def expectation(self, e) -> float:
        return self.expect_terms(flatten(as_expr(e), self.limit))

    def product_expectation(self, a, b) -> float:
        return self.expect_terms(_product_terms(as_expr(a), as_expr(b), self.limit))


def _product_terms(a: Expr, b: Expr, limit: int):
    return flatten(Mul((a, b)), limit)


def expectation(e, rv: RandomVectorSpec, limit: int = DEFAULT_TERM_LIMIT) -> float:
    """Exact ``E[e]`` under ``rv``.

    >>> import math
    >>> rv = RandomVectorSpec.gaussian(["th"], [0.0], [[1.0]])
    >>> round(expectation("cos(th)", rv), 12) == round(math.exp(-0.5), 12)
    True
    """
    return MomentEngine(rv, limit).expectation(e)


def expectation_vector(es: Sequence, rv: RandomVectorSpec, engine: MomentEngine | None = None) -> np.ndarray:
    engine = engine or MomentEngine(rv)
    return np.array([engine.expectation(e) for e in es], dtype=float)


def second_moment_matrix(es: Sequence, rv: RandomVectorSpec, engine: MomentEngine | None = None) -> np.ndarray:
    """Raw second moments ``E[e_i e_j]`` as a symmetric matrix."""
    engine = engine or MomentEngine(rv)
    es = [as_expr(e) for e in es]
    n = len(es)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = engine.product_expectation(es[i], es[j])
    return out


def cross_moment_matrix(
    left: Sequence, right: Sequence, rv: RandomVectorSpec, engine: MomentEngine | None = None
) -> np.ndarray:
    """Raw cross moments ``E[a_i b_j]``."""
    engine = engine or MomentEngine(rv)
    left = [as_expr(e) for e in left]
    right = [as_expr(e) for e in right]
    out = np.empty((len(left), len(right)))
    for i, a in enumerate(left):
        for j, b in enumerate(right):
            out[i, j] = engine.product_expectation(a, b)
    return out


def mean_substitution(e, rv: RandomVectorSpec) -> float:
    """``e`` evaluated at the mean of every variable (first-order estimate)."""
    return float(evaluate(as_expr(e), rv.means()))
