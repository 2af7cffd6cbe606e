"""Scalar distributions and exact mixed trigonometric-polynomial moments.

Every distribution exposes closed-form derivatives of its characteristic
function ``phi(t) = E[exp(i t theta)]``.  Moments of the form

    E[theta^p cos^c(s theta) sin^q(s theta)]

follow by writing the trigonometric powers as binomial sums of complex
exponentials and evaluating ``d^p phi / dt^p`` at integer multiples of ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

__all__ = [
    "MAX_ORDER",
    "IMAG_TOL",
    "MomentOrderError",
    "MomentConsistencyError",
    "Distribution1D",
    "Gaussian",
    "Exponential",
    "Uniform",
    "MomentSpec1D",
    "cf_derivative",
    "mixed_moment_1d",
    "trig_poly_moment",
    "distribution_from_dict",
]

#: Largest characteristic-function derivative order supported.
MAX_ORDER = 16

#: Largest tolerated imaginary residue (relative to the summed magnitudes).
IMAG_TOL = 1e-9

# Below this value of |t| * max(|a|, |b|) the uniform law uses its power series.
_UNIFORM_SERIES_RADIUS = 4.0


class MomentOrderError(ValueError):
    """Requested derivative order exceeds :data:`MAX_ORDER`."""


class MomentConsistencyError(ArithmeticError):
    """A moment that must be real came out with a large imaginary part."""


def _check_order(p: int) -> None:
    if p < 0:
        raise ValueError(f"derivative order must be nonnegative, got {p}")
    if p > MAX_ORDER:
        raise MomentOrderError(
            f"derivative order {p} exceeds the supported maximum {MAX_ORDER}"
        )


class Distribution1D:
    """Base class for scalar laws with closed-form characteristic functions."""

    kind: str = ""

    def cf_derivative(self, p: int, t: float) -> complex:
        """Return ``d^p/dt^p phi(t)``."""
        _check_order(p)
        return (1j) ** p * self._tilted_moment(p, float(t))

    def _tilted_moment(self, p: int, t: float) -> complex:
        # E[theta^p exp(i t theta)]
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    def raw_moment(self, n: int) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(Distribution1D):
    """Normal law ``N(mean, variance)``; zero variance is a point mass."""

    mu: float
    var: float
    kind = "gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.var)):
            raise ValueError("Gaussian parameters must be finite")
        if self.var < 0:
            raise ValueError(f"variance must be >= 0, got {self.var}")

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def variance(self) -> float:
        return self.var

    def _tilted_moment(self, p, t):
        # Under the exponential tilt the law stays Gaussian with the complex
        # mean mu + i var t, so the raw-moment recurrence applies unchanged.
        phi = complex(math.cos(self.mu * t), math.sin(self.mu * t)) * math.exp(
            -0.5 * self.var * t * t
        )
        m = complex(self.mu, self.var * t)
        prev, cur = 0j, 1 + 0j
        for k in range(1, p + 1):
            prev, cur = cur, m * cur + (k - 1) * self.var * prev
        return phi * cur

    def raw_moment(self, n):
        prev, cur = 0.0, 1.0
        for k in range(1, n + 1):
            prev, cur = cur, self.mu * cur + (k - 1) * self.var * prev
        return cur

    def sample(self, rng, size):
        return self.mu + math.sqrt(self.var) * rng.standard_normal(size)

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mu, "variance": self.var}


@dataclass(frozen=True)
class Exponential(Distribution1D):
    """Exponential law with density ``rate * exp(-rate * x)`` on x >= 0."""

    rate: float
    kind = "exponential"

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError(f"rate must be finite and > 0, got {self.rate}")

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def variance(self):
        return 1.0 / self.rate**2

    def _tilted_moment(self, p, t):
        return math.factorial(p) * self.rate / complex(self.rate, -t) ** (p + 1)

    def raw_moment(self, n):
        return math.factorial(n) / self.rate**n

    def sample(self, rng, size):
        # inverse CDF
        u = rng.random(size)
        return -np.log1p(-u) / self.rate

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Uniform(Distribution1D):
    """Continuous uniform law on ``[lower, upper]``."""

    lower: float
    upper: float
    kind = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("Uniform bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(
                f"need lower < upper, got [{self.lower}, {self.upper}]"
            )

    @property
    def mean(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def variance(self):
        return (self.upper - self.lower) ** 2 / 12.0

    def raw_moment(self, n):
        a, b = self.lower, self.upper
        return (b ** (n + 1) - a ** (n + 1)) / ((n + 1) * (b - a))

    def _tilted_moment(self, p, t):
        a, b = self.lower, self.upper
        radius = max(abs(a), abs(b))
        if abs(t) * radius <= _UNIFORM_SERIES_RADIUS:
            # t = 0 lands here and reduces to the exact raw moment.
            return self._series(p, t)
        width = b - a
        ea = complex(math.cos(t * a), math.sin(t * a))
        eb = complex(math.cos(t * b), math.sin(t * b))
        it = 1j * t
        acc = (eb - ea) / (it * width)
        for k in range(1, p + 1):
            acc = (b**k * eb - a**k * ea) / (it * width) - (k / it) * acc
        return acc

    def _series(self, p, t):
        total = 0j
        term_scale = 1 + 0j  # (i t)^k / k!
        k = 0
        while True:
            term = term_scale * self.raw_moment(p + k)
            total += term
            k += 1
            if t == 0.0:
                break
            if k > 4 and abs(term) <= 1e-18 * max(abs(total), 1e-300):
                break
            if k > 200:
                break
            term_scale *= 1j * t / k
        return total

    def sample(self, rng, size):
        return self.lower + (self.upper - self.lower) * rng.random(size)

    def to_dict(self):
        return {"kind": self.kind, "lower": self.lower, "upper": self.upper}


class MomentSpec1D(NamedTuple):
    """Request for ``E[(c theta)^poly cos^cos(c theta) sin^sin(c theta)]``."""

    poly_power: int
    cos_power: int
    sin_power: int
    arg_scale: float = 1.0

    @property
    def order(self) -> int:
        return self.poly_power + self.cos_power + self.sin_power


def cf_derivative(d: Distribution1D, p: int, t: float) -> complex:
    """``p``-th derivative of the characteristic function of ``d`` at ``t``."""
    return d.cf_derivative(p, t)


@lru_cache(maxsize=None)
def _frequency_weights(c: int, s: int) -> tuple[tuple[int, int], ...]:
    """Integer weights w_m on exp(i m theta) for 2^(c+s) i^s cos^c sin^s.

    Returns pairs ``(m, w_m)`` with nonzero weight.
    """
    weights: dict[int, int] = {}
    for k1 in range(c + 1):
        b1 = math.comb(c, k1)
        for k2 in range(s + 1):
            w = b1 * math.comb(s, k2) * (-1) ** (s - k2)
            m = 2 * (k1 + k2) - c - s
            weights[m] = weights.get(m, 0) + w
    return tuple(sorted((m, w) for m, w in weights.items() if w != 0))


def trig_poly_moment(
    d: Distribution1D, poly: int, cos: int, sin: int, scale: float = 1.0
) -> float:
    """Exact ``E[theta^poly cos^cos(scale theta) sin^sin(scale theta)]``.

    The polynomial factor acts on the unscaled variable.
    """
    if min(poly, cos, sin) < 0:
        raise ValueError("powers must be nonnegative")
    _check_order(poly)
    if cos == 0 and sin == 0:
        scale = 0.0
    total = 0j
    magnitude = 0.0
    for m, w in _frequency_weights(cos, sin):
        term = w * d.cf_derivative(poly, m * scale)
        total += term
        magnitude += abs(term)
    total /= (1j) ** (poly + sin) * 2 ** (cos + sin)
    magnitude /= 2 ** (cos + sin)
    if abs(total.imag) > IMAG_TOL * max(1.0, magnitude):
        raise MomentConsistencyError(
            f"imaginary residue {total.imag:.3e} for moment "
            f"({poly}, {cos}, {sin}, scale={scale}) of {d!r}"
        )
    return total.real


def mixed_moment_1d(d: Distribution1D, spec: MomentSpec1D) -> float:
    """Exact ``E[(c theta)^a1 cos^a2(c theta) sin^a3(c theta)]`` for ``d``.

    ``spec`` is a :class:`MomentSpec1D` (or any ``(a1, a2, a3[, c])`` tuple).
    """
    spec = MomentSpec1D(*spec)
    c = float(spec.arg_scale)
    value = trig_poly_moment(d, spec.poly_power, spec.cos_power, spec.sin_power, c)
    return c**spec.poly_power * value


def distribution_from_dict(data: dict) -> Distribution1D:
    """Build a distribution from ``{"kind": ..., <params>}``."""
    kind = str(data.get("kind", "")).lower()
    if kind in ("gaussian", "normal"):
        return Gaussian(float(data.get("mean", 0.0)), float(data["variance"]))
    if kind == "exponential":
        return Exponential(float(data.get("rate", 1.0)))
    if kind == "uniform":
        return Uniform(float(data["lower"]), float(data["upper"]))
    raise ValueError(f"unknown distribution kind {data.get('kind')!r}")
