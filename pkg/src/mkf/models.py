"""Differential-drive robot with range-bearing landmark observations.

State ``(x, y, th)`` in metres and radians.  Dynamics::

    x'  = x  + (v + wv) cos(th) dt
    y'  = y  + (v + wv) sin(th) dt
    th' = th + (u + wu) dt

Range ``r`` and bearing ``phi`` to a landmark are observed with
multiplicative range noise ``vr`` and additive bearing noise ``vphi``.  The
filters consume the Cartesian form ``(r cos phi, r sin phi)``, which is a
mixed trigonometric polynomial in the state and the noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .distributions import Distribution1D, Gaussian
from .expr import Const, Cos, Sin, Var
from .filters import StateSpaceModel

__all__ = [
    "STATE_NAMES",
    "DiffDriveConfig",
    "LandmarkMap",
    "RangeBearingNoise",
    "diff_drive_model",
    "range_bearing_model",
    "RobotModel",
    "linear_model",
    "range_bearing",
    "cartesian_measurement",
    "simulate",
    "wrap_angle",
    "error_metrics",
]

STATE_NAMES = ("x", "y", "th")


@dataclass(frozen=True)
class DiffDriveConfig:
    dt: float
    wv: Distribution1D = Gaussian(0.0, 0.01)
    wu: Distribution1D = Gaussian(0.0, 1.0)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")


@dataclass(frozen=True)
class LandmarkMap:
    """Landmark id -> (x, y) position in metres."""

    positions: Mapping[int, tuple]

    def __post_init__(self):
        items = self.positions.items() if isinstance(self.positions, Mapping) else self.positions
        pos: dict[int, tuple] = {}
        for lid, xy in items:
            lid = int(lid)
            if lid in pos:
                raise ValueError(f"duplicate landmark id {lid}")
            pos[lid] = (float(xy[0]), float(xy[1]))
        object.__setattr__(self, "positions", dict(sorted(pos.items())))

    @classmethod
    def from_rows(cls, rows):
        return cls([(r[0], (r[1], r[2])) for r in rows])

    def __getitem__(self, lid) -> tuple:
        return self.positions[int(lid)]

    def __contains__(self, lid) -> bool:
        return int(lid) in self.positions

    def __iter__(self):
        return iter(self.positions)

    def __len__(self):
        return len(self.positions)


@dataclass(frozen=True)
class RangeBearingNoise:
    vr: Distribution1D = Gaussian(1.0, 0.01)
    vphi: Distribution1D = Gaussian(0.0, 0.0007)

    def __post_init__(self):
        if not (math.isfinite(self.vr.mean) and self.vr.mean > 0):
            raise ValueError("multiplicative range noise must have a positive mean")


def diff_drive_model(cfg: DiffDriveConfig) -> StateSpaceModel:
    x, y, th = Var("x"), Var("y"), Var("th")
    v, u, wv, wu = Var("v"), Var("u"), Var("wv"), Var("wu")
    dt = Const(cfg.dt)
    dynamics = (
        x + (v + wv) * Cos(th) * dt,
        y + (v + wv) * Sin(th) * dt,
        th + (u + wu) * dt,
    )
    return StateSpaceModel(
        STATE_NAMES,
        dynamics,
        input_names=("v", "u"),
        disturbance_laws=(("wv", cfg.wv), ("wu", cfg.wu)),
    )


def _measurement_exprs(xl: float, yl: float):
    x, y, th = Var("x"), Var("y"), Var("th")
    vr, vphi = Var("vr"), Var("vphi")
    dx = Const(xl) - x
    dy = Const(yl) - y
    ha = dx * Cos(th) + dy * Sin(th)
    hb = dy * Cos(th) - dx * Sin(th)
    y1 = ha * vr * Cos(vphi) - hb * vr * Sin(vphi)
    y2 = hb * vr * Cos(vphi) + ha * vr * Sin(vphi)
    return (y1, y2)


def range_bearing_model(landmarks: LandmarkMap, landmark_id, noise: RangeBearingNoise) -> StateSpaceModel:
    """Measurement part for one landmark, ``(r cos phi, r sin phi)`` with noise."""
    xl, yl = landmarks[landmark_id]
    return StateSpaceModel(
        STATE_NAMES,
        measurement=_measurement_exprs(xl, yl),
        noise_laws=(("vr", noise.vr), ("vphi", noise.vphi)),
    )


class RobotModel:
    """Dynamics plus one cached measurement model per landmark."""

    def __init__(self, cfg: DiffDriveConfig, landmarks: LandmarkMap, noise: RangeBearingNoise):
        self.cfg = cfg
        self.landmarks = landmarks
        self.noise = noise
        self.dynamics = diff_drive_model(cfg)
        self._measurement: dict[int, StateSpaceModel] = {}

    def measurement(self, landmark_id) -> StateSpaceModel:
        lid = int(landmark_id)
        m = self._measurement.get(lid)
        if m is None:
            m = range_bearing_model(self.landmarks, lid, self.noise)
            self._measurement[lid] = m
        return m


def linear_model(A, B, H, q, r) -> StateSpaceModel:
    """``x' = A x + B u + w``, ``z = H x + v`` with independent Gaussian ``w``, ``v``.

    ``q`` and ``r`` are the diagonal noise variances.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = A.shape[0]
    B = np.zeros((n, 0)) if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    xs = [Var(f"x{i}") for i in range(n)]
    us = [Var(f"u{k}") for k in range(B.shape[1])]
    dyn = []
    for i in range(n):
        terms = [Const(A[i, j]) * xs[j] for j in range(n) if A[i, j] != 0.0]
        terms += [Const(B[i, k]) * us[k] for k in range(B.shape[1]) if B[i, k] != 0.0]
        terms.append(Var(f"w{i}"))
        dyn.append(sum(terms[1:], terms[0]))
    meas = []
    for i in range(H.shape[0]):
        terms = [Const(H[i, j]) * xs[j] for j in range(n) if H[i, j] != 0.0]
        terms.append(Var(f"v{i}"))
        meas.append(sum(terms[1:], terms[0]))
    return StateSpaceModel(
        tuple(x.name for x in xs),
        tuple(dyn),
        tuple(meas),
        input_names=tuple(u.name for u in us),
        disturbance_laws=tuple((f"w{i}", Gaussian(0.0, float(q[i]))) for i in range(n)),
        noise_laws=tuple((f"v{i}", Gaussian(0.0, float(r[i]))) for i in range(H.shape[0])),
    )


def range_bearing(state, landmark) -> tuple[float, float]:
    """Noiseless range and bearing (two-argument arctangent) to a landmark."""
    dx = landmark[0] - state[0]
    dy = landmark[1] - state[1]
    return math.hypot(dx, dy), wrap_angle(math.atan2(dy, dx) - state[2])


def cartesian_measurement(r, phi):
    return np.array([r * np.cos(phi), r * np.sin(phi)])


def wrap_angle(a):
    """Wrap to the half-open interval (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def simulate(dynamics: StateSpaceModel, x0, inputs, measurement_models: Sequence[StateSpaceModel] = (), seed=0, noiseless=False):
    """Roll the dynamics forward, sampling every declared law.

    Returns ``(states, measurements)`` where ``states`` has one row per step
    (including ``x0``) and ``measurements[k][j]`` is the sample of the j-th
    measurement model at ``states[k + 1]``.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float)
    states = [x]
    measurements = []
    for u in inputs:
        if noiseless:
            w = [d.mean for _, d in dynamics.disturbance_laws]
        else:
            w = [float(d.sample(rng, None)) for _, d in dynamics.disturbance_laws]
        x = dynamics.f(x, u, w)
        states.append(x)
        row = []
        for m in measurement_models:
            if noiseless:
                v = [d.mean for _, d in m.noise_laws]
            else:
                v = [float(d.sample(rng, None)) for _, d in m.noise_laws]
            row.append(m.h(x, v))
        measurements.append(row)
    return np.array(states), measurements


def error_metrics(estimates, truth) -> tuple[float, float]:
    """Mean Euclidean position error and mean absolute wrapped yaw error."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {tru.shape}")
    pos = float(np.mean(np.hypot(est[:, 0] - tru[:, 0], est[:, 1] - tru[:, 1])))
    if est.shape[1] < 3:
        return pos, 0.0
    yaw = float(np.mean(np.abs(wrap_angle(est[:, 2] - tru[:, 2]))))
    return pos, yaw
