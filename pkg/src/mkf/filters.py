"""Gaussian filters: moment-based (MKF), extended, unscented and linear Kalman.

All nonlinear filters consume the same :class:`StateSpaceModel`, whose
dynamics and measurement maps are mixed trigonometric-polynomial
expressions.  The MKF propagates the exact first two moments of those maps
under the current Gaussian belief and the declared noise laws; the EKF and
UKF replace non-Gaussian noise by a Gaussian with matching mean and variance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .distributions import Gaussian
from .expand import MomentEngine, RandomVectorSpec
from .expr import as_expr, diff, evaluate, variables
from .linalg import (
    NotPSDError,
    clamp_psd,
    eig_sym,
    solve_spd,
    symmetrize,
)

__all__ = [
    "FilterDivergence",
    "GaussianBelief",
    "StepRecord",
    "Jacobians",
    "StateSpaceModel",
    "UKFParams",
    "mkf_predict",
    "mkf_update",
    "mkf_step",
    "ekf_predict",
    "ekf_update",
    "ekf_step",
    "ukf_predict",
    "ukf_update",
    "ukf_step",
    "kf_predict",
    "kf_update",
    "kf_step",
    "sigma_points",
    "unscented_transform",
    "MomentKalmanFilter",
    "ExtendedKalmanFilter",
    "UnscentedKalmanFilter",
    "make_filter",
]


class FilterDivergence(RuntimeError):
    """A filter produced a non-finite or invalid belief."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float).reshape(mean.size, mean.size)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov)))


@dataclass(frozen=True, eq=False)
class StepRecord:
    predicted: GaussianBelief
    y_pred: np.ndarray
    S_yy: np.ndarray
    S_xy: np.ndarray
    innovation: np.ndarray
    gain: np.ndarray
    updated: GaussianBelief


@dataclass(frozen=True)
class Jacobians:
    """Callables ``(x, u, w) -> df/dx, df/dw`` and ``(x, v) -> dh/dx, dh/dv``."""

    f_x: Callable | None = None
    f_w: Callable | None = None
    h_x: Callable | None = None
    h_v: Callable | None = None


def _laws(laws) -> tuple:
    if isinstance(laws, dict):
        laws = tuple(laws.items())
    return tuple((str(n), d) for n, d in laws)


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """``x' = f(x, u, w)`` and ``y = h(x, v)`` as expression lists.

    Inputs are deterministic and substituted per step.  Disturbance and
    noise variables carry scalar laws and are independent of the state and
    of each other.  When ``jacobians`` is omitted, the EKF differentiates
    the expressions symbolically.
    """

    state_names: tuple
    dynamics: tuple = ()
    measurement: tuple = ()
    input_names: tuple = ()
    disturbance_laws: tuple = ()
    noise_laws: tuple = ()
    jacobians: Jacobians | None = None

    def __post_init__(self):
        object.__setattr__(self, "state_names", tuple(self.state_names))
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "dynamics", tuple(as_expr(e) for e in self.dynamics))
        object.__setattr__(self, "measurement", tuple(as_expr(e) for e in self.measurement))
        object.__setattr__(self, "disturbance_laws", _laws(self.disturbance_laws))
        object.__setattr__(self, "noise_laws", _laws(self.noise_laws))
        n = len(self.state_names)
        if self.dynamics and len(self.dynamics) != n:
            raise ValueError(f"{len(self.dynamics)} dynamics expressions for {n} states")
        known_f = set(self.state_names) | set(self.input_names) | set(self.disturbance_names)
        for e in self.dynamics:
            missing = variables(e) - known_f
            if missing:
                raise ValueError(f"dynamics reference undeclared symbols {sorted(missing)}")
        known_h = set(self.state_names) | set(self.noise_names)
        for e in self.measurement:
            missing = variables(e) - known_h
            if missing:
                raise ValueError(f"measurement references undeclared symbols {sorted(missing)}")

    @property
    def n(self) -> int:
        return len(self.state_names)

    @property
    def disturbance_names(self) -> tuple:
        return tuple(n for n, _ in self.disturbance_laws)

    @property
    def noise_names(self) -> tuple:
        return tuple(n for n, _ in self.noise_laws)

    def with_measurement(self, measurement, noise_laws) -> "StateSpaceModel":
        return replace(self, measurement=tuple(measurement), noise_laws=_laws(noise_laws))

    # numeric maps; arrays broadcast over trailing axes
    def f(self, x, u=(), w=None):
        env = dict(zip(self.state_names, x))
        env.update(zip(self.input_names, u))
        if w is None:
            w = [d.mean for _, d in self.disturbance_laws]
        env.update(zip(self.disturbance_names, w))
        return np.array([np.broadcast_to(evaluate(e, env), np.shape(x[0])) for e in self.dynamics], dtype=float)

    def h(self, x, v=None):
        env = dict(zip(self.state_names, x))
        if v is None:
            v = [d.mean for _, d in self.noise_laws]
        env.update(zip(self.noise_names, v))
        return np.array([np.broadcast_to(evaluate(e, env), np.shape(x[0])) for e in self.measurement], dtype=float)


def symbolic_jacobians(model: StateSpaceModel) -> Jacobians:
    """Analytic Jacobians from symbolic differentiation of the model expressions."""
    fx = [[diff(e, s) for s in model.state_names] for e in model.dynamics]
    fw = [[diff(e, s) for s in model.disturbance_names] for e in model.dynamics]
    hx = [[diff(e, s) for s in model.state_names] for e in model.measurement]
    hv = [[diff(e, s) for s in model.noise_names] for e in model.measurement]

    def build(rows, names_a, names_b):
        def jac(a, b=(), c=None):
            env = dict(zip(names_a[0], a))
            env.update(zip(names_a[1], b))
            if c is not None:
                env.update(zip(names_a[2], c))
            out = np.zeros((len(rows), len(names_b)))
            for i, row in enumerate(rows):
                for j, e in enumerate(row):
                    out[i, j] = float(evaluate(e, env))
            return out

        return jac

    f_names = (model.state_names, model.input_names, model.disturbance_names)
    h_names = (model.state_names, model.noise_names)
    return Jacobians(
        f_x=build(fx, f_names, model.state_names),
        f_w=build(fw, f_names, model.disturbance_names),
        h_x=build(hx, h_names, model.state_names),
        h_v=build(hv, h_names, model.noise_names),
    )


_JACOBIAN_CACHE: dict = {}


def _jacobians(model: StateSpaceModel) -> Jacobians:
    if model.jacobians is not None:
        return model.jacobians
    jac = _JACOBIAN_CACHE.get(id(model))
    if jac is None or jac[0] is not model:
        jac = (model, symbolic_jacobians(model))
        _JACOBIAN_CACHE[id(model)] = jac
    return jac[1]


def _finalize(mean, cov) -> GaussianBelief:
    belief = GaussianBelief(mean, symmetrize(cov))
    if not belief.is_finite():
        raise FilterDivergence("non-finite belief")
    return GaussianBelief(belief.mean, clamp_psd(belief.cov))


def _gain(S_xy, S_yy):
    return solve_spd(S_yy, S_xy.T).T


def _law_moments(laws):
    mean = np.array([d.mean for _, d in laws], dtype=float)
    var = np.array([d.variance for _, d in laws], dtype=float)
    return mean, np.diag(var)


# ---------------------------------------------------------------------------
# Moment-based Kalman filter


def _state_rv(model, belief, extra_laws):
    return RandomVectorSpec(model.state_names, belief.mean, belief.cov, extra_laws)


def mkf_predict(model: StateSpaceModel, belief: GaussianBelief, u=()) -> GaussianBelief:
    """Exact mean and covariance of ``f(x, u, w)`` with ``x ~ N(belief)``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != len(model.input_names):
        raise ValueError(f"expected {len(model.input_names)} inputs, got {u.size}")
    inputs = tuple((n, Gaussian(float(v), 0.0)) for n, v in zip(model.input_names, u))
    engine = MomentEngine(_state_rv(model, belief, model.disturbance_laws + inputs))
    fs = model.dynamics
    mean = np.array([engine.expectation(e) for e in fs])
    n = len(fs)
    second = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            second[i, j] = second[j, i] = engine.product_expectation(fs[i], fs[j])
    return _finalize(mean, second - np.outer(mean, mean))


def mkf_update(model: StateSpaceModel, predicted: GaussianBelief, z):
    """Kalman correction with exact measurement moments.

    Returns the updated belief and a :class:`StepRecord`.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    hs = model.measurement
    if z.size != len(hs):
        raise ValueError(f"expected {len(hs)} measurement components, got {z.size}")
    engine = MomentEngine(_state_rv(model, predicted, model.noise_laws))
    y_pred = np.array([engine.expectation(e) for e in hs])
    m = len(hs)
    second = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            second[i, j] = second[j, i] = engine.product_expectation(hs[i], hs[j])
    S_yy = symmetrize(second - np.outer(y_pred, y_pred))
    xs = [as_expr(s) for s in model.state_names]
    cross = np.array([[engine.product_expectation(x, h) for h in hs] for x in xs])
    S_xy = cross - np.outer(predicted.mean, y_pred)
    return _correct(predicted, z, y_pred, S_yy, S_xy)


def _correct(predicted, z, y_pred, S_yy, S_xy):
    K = _gain(S_xy, S_yy)
    innovation = z - y_pred
    mean = predicted.mean + K @ innovation
    cov = predicted.cov - K @ S_yy @ K.T
    updated = _finalize(mean, cov)
    return updated, StepRecord(predicted, y_pred, S_yy, S_xy, innovation, K, updated)


def mkf_step(model, belief, u, z):
    return mkf_update(model, mkf_predict(model, belief, u), z)


# ---------------------------------------------------------------------------
# Extended Kalman filter


def ekf_predict(model: StateSpaceModel, belief: GaussianBelief, u=()) -> GaussianBelief:
    jac = _jacobians(model)
    w_mean, Q = _law_moments(model.disturbance_laws)
    u = np.asarray(u, dtype=float).reshape(-1)
    mean = model.f(belief.mean, u, w_mean)
    F = jac.f_x(belief.mean, u, w_mean)
    cov = F @ belief.cov @ F.T
    if model.disturbance_laws:
        G = jac.f_w(belief.mean, u, w_mean)
        cov = cov + G @ Q @ G.T
    return _finalize(mean, cov)


def ekf_update(model: StateSpaceModel, predicted: GaussianBelief, z):
    jac = _jacobians(model)
    v_mean, R = _law_moments(model.noise_laws)
    z = np.asarray(z, dtype=float).reshape(-1)
    y_pred = model.h(predicted.mean, v_mean)
    H = jac.h_x(predicted.mean, v_mean)
    S_yy = H @ predicted.cov @ H.T
    if model.noise_laws:
        V = jac.h_v(predicted.mean, v_mean)
        S_yy = S_yy + V @ R @ V.T
    S_xy = predicted.cov @ H.T
    return _correct(predicted, z, y_pred, symmetrize(S_yy), S_xy)


def ekf_step(model, belief, u, z):
    return ekf_update(model, ekf_predict(model, belief, u), z)


# ---------------------------------------------------------------------------
# Unscented Kalman filter


@dataclass(frozen=True)
class UKFParams:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0


def _sqrt_psd(P):
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        dec = eig_sym(P, psd=True)
        return dec.T * np.sqrt(dec.lambdas)


def sigma_points(mean, cov, params: UKFParams = UKFParams()):
    """Scaled sigma points (one per column) with mean and covariance weights."""
    mean = np.asarray(mean, dtype=float)
    n = mean.size
    lam = params.alpha**2 * (n + params.kappa) - n
    if n + lam <= 0:
        raise ValueError("UKF parameters give a non-positive spread n + lambda")
    try:
        L = _sqrt_psd((n + lam) * symmetrize(cov))
    except NotPSDError as exc:
        raise NotPSDError(f"augmented covariance has no real square root: {exc}") from None
    pts = np.empty((n, 2 * n + 1))
    pts[:, 0] = mean
    pts[:, 1 : n + 1] = mean[:, None] + L
    pts[:, n + 1 :] = mean[:, None] - L
    wm = np.full(2 * n + 1, 0.5 / (n + lam))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + 1.0 - params.alpha**2 + params.beta
    return pts, wm, wc


def unscented_transform(fn, mean, cov, params: UKFParams = UKFParams()):
    """Mean, covariance and input cross-covariance of ``fn`` via sigma points.

    ``fn`` maps an ``(n, k)`` array of column points to ``(m, k)``.
    """
    pts, wm, wc = sigma_points(mean, cov, params)
    ys = np.atleast_2d(fn(pts))
    y_mean = ys @ wm
    dy = ys - y_mean[:, None]
    dx = pts - np.asarray(mean, dtype=float)[:, None]
    return y_mean, (dy * wc) @ dy.T, (dx * wc) @ dy.T


def _augment(belief, laws):
    n = belief.dim
    lm, lc = _law_moments(laws)
    k = lm.size
    mean = np.concatenate([belief.mean, lm])
    cov = np.zeros((n + k, n + k))
    cov[:n, :n] = belief.cov
    cov[n:, n:] = lc
    return mean, cov


def ukf_predict(model, belief, u=(), params: UKFParams = UKFParams()) -> GaussianBelief:
    n = belief.dim
    u = np.asarray(u, dtype=float).reshape(-1)
    mean_a, cov_a = _augment(belief, model.disturbance_laws)
    uu = [np.full(2 * mean_a.size + 1, v) for v in u]
    y_mean, y_cov, _ = unscented_transform(
        lambda p: model.f(p[:n], uu, p[n:]), mean_a, cov_a, params
    )
    return _finalize(y_mean, y_cov)


def ukf_update(model, predicted, z, params: UKFParams = UKFParams()):
    n = predicted.dim
    z = np.asarray(z, dtype=float).reshape(-1)
    mean_a, cov_a = _augment(predicted, model.noise_laws)
    y_pred, S_yy, cross = unscented_transform(
        lambda p: model.h(p[:n], p[n:]), mean_a, cov_a, params
    )
    return _correct(predicted, z, y_pred, symmetrize(S_yy), cross[:n])


def ukf_step(model, belief, u, z, params: UKFParams = UKFParams()):
    return ukf_update(model, ukf_predict(model, belief, u, params), z, params)


# ---------------------------------------------------------------------------
# Linear Kalman filter


def kf_predict(A, B, Q, belief: GaussianBelief, u=()) -> GaussianBelief:
    A = np.atleast_2d(A)
    mean = A @ belief.mean
    if B is not None and np.size(u):
        mean = mean + np.atleast_2d(B) @ np.asarray(u, dtype=float)
    return GaussianBelief(mean, symmetrize(A @ belief.cov @ A.T + np.atleast_2d(Q)))


def kf_update(H, R, predicted: GaussianBelief, z) -> GaussianBelief:
    H = np.atleast_2d(H)
    S = symmetrize(H @ predicted.cov @ H.T + np.atleast_2d(R))
    K = _gain(predicted.cov @ H.T, S)
    mean = predicted.mean + K @ (np.asarray(z, dtype=float) - H @ predicted.mean)
    return GaussianBelief(mean, symmetrize(predicted.cov - K @ S @ K.T))


def kf_step(A, B, H, Q, R, belief, u, z) -> GaussianBelief:
    return kf_update(H, R, kf_predict(A, B, Q, belief, u), z)


# ---------------------------------------------------------------------------
# Stateful wrappers


class _Filter:
    name = ""

    def __init__(self, belief: GaussianBelief | None = None):
        self.belief = belief
        self.last_record: StepRecord | None = None

    def predict(self, model, u=()):
        self.belief = self._predict(model, self.belief, u)
        return self.belief

    def update(self, model, z):
        self.belief, self.last_record = self._update(model, self.belief, z)
        return self.belief


class MomentKalmanFilter(_Filter):
    name = "mkf"

    def _predict(self, model, belief, u):
        return mkf_predict(model, belief, u)

    def _update(self, model, belief, z):
        return mkf_update(model, belief, z)


class ExtendedKalmanFilter(_Filter):
    name = "ekf"

    def _predict(self, model, belief, u):
        return ekf_predict(model, belief, u)

    def _update(self, model, belief, z):
        return ekf_update(model, belief, z)


class UnscentedKalmanFilter(_Filter):
    name = "ukf"

    def __init__(self, belief=None, params: UKFParams = UKFParams()):
        super().__init__(belief)
        self.params = params

    def _predict(self, model, belief, u):
        return ukf_predict(model, belief, u, self.params)

    def _update(self, model, belief, z):
        return ukf_update(model, belief, z, self.params)


_FILTERS = {
    "mkf": MomentKalmanFilter,
    "ekf": ExtendedKalmanFilter,
    "ukf": UnscentedKalmanFilter,
}


def make_filter(name: str, belief: GaussianBelief | None = None, **kwargs) -> _Filter:
    try:
        cls = _FILTERS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown filter {name!r}; choose from {sorted(_FILTERS)}") from None
    return cls(belief, **kwargs)
