"""Filter runs over stepped data: robot localization and a linear sanity case."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .dataio import DatasetBundle, NoiseInjectionConfig, Step, SyntheticScenario, resample
from .filters import FilterDivergence, GaussianBelief, StateSpaceModel, make_filter
from .models import DiffDriveConfig, RangeBearingNoise, RobotModel, cartesian_measurement, error_metrics, linear_model

__all__ = [
    "FILTER_NAMES",
    "RunResult",
    "Frame",
    "run_filters",
    "robot_frames",
    "run_robot",
    "linear_scenario",
    "summarize",
    "SCENARIOS",
]

FILTER_NAMES = ("ekf", "ukf", "mkf")


@dataclass(frozen=True, eq=False)
class Frame:
    """One step: the input applied since the previous frame, observations and truth."""

    t: float
    u: np.ndarray
    observations: tuple  # of (StateSpaceModel, z)
    truth: np.ndarray


@dataclass(frozen=True, eq=False)
class RunResult:
    name: str
    times: np.ndarray
    truth: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def errors(self) -> tuple[float, float]:
        return error_metrics(self.means, self.truth)


def run_filters(
    dynamics: StateSpaceModel,
    frames: Sequence[Frame],
    initial: GaussianBelief,
    filters: Iterable[str] = FILTER_NAMES,
) -> dict[str, RunResult]:
    """Run each filter over ``frames``; frame 0 only supplies the initial time.

    Raises :class:`FilterDivergence` carrying the failing frame index.
    """
    out = {}
    times = np.array([f.t for f in frames[1:]])
    truth = np.array([f.truth for f in frames[1:]]).reshape(len(frames) - 1, -1)
    for name in filters:
        flt = make_filter(name, initial)
        means, variances = [], []
        for k in range(1, len(frames)):
            frame = frames[k]
            try:
                flt.predict(dynamics, frames[k - 1].u)
                for model, z in frame.observations:
                    flt.update(model, z)
            except (FilterDivergence, np.linalg.LinAlgError) as exc:
                raise FilterDivergence(f"{name}: {exc}", k) from None
            means.append(flt.belief.mean.copy())
            variances.append(np.diag(flt.belief.cov).copy())
        n = initial.dim
        out[name] = RunResult(
            name,
            times,
            truth,
            np.array(means).reshape(-1, n),
            np.array(variances).reshape(-1, n),
        )
    return out


def robot_frames(steps: Sequence[Step], robot: RobotModel) -> list[Frame]:
    return [
        Frame(
            s.t,
            s.u,
            tuple((robot.measurement(lid), cartesian_measurement(r, b)) for lid, r, b in s.measurements),
            s.truth,
        )
        for s in steps
    ]


def run_robot(
    bundle: DatasetBundle,
    dt: float,
    noise: RangeBearingNoise,
    filters: Iterable[str] = FILTER_NAMES,
    p0: Sequence[float] = (0.01, 0.01, 0.01),
    cfg: DiffDriveConfig | None = None,
) -> dict[str, RunResult]:
    """Localize with every filter, starting at the true initial pose with covariance ``diag(p0)``."""
    steps = resample(bundle, dt)
    robot = RobotModel(cfg or DiffDriveConfig(dt), bundle.landmarks, noise)
    frames = robot_frames(steps, robot)
    initial = GaussianBelief(frames[0].truth, np.diag(np.asarray(p0, dtype=float)))
    return run_filters(robot.dynamics, frames, initial, filters)


def linear_scenario(seed: int = 0, n_steps: int = 100, dt: float = 0.1):
    """Constant-velocity point in the plane observed in position.

    Returns ``(dynamics, frames, initial)``; the one measurement model is
    attached to every frame.
    """
    A = np.array([[1, 0, dt, 0], [0, 1, 0, dt], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    B = np.array([[0, 0], [0, 0], [dt, 0], [0, dt]], dtype=float)
    H = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)
    q = np.array([1e-4, 1e-4, 1e-2, 1e-2])
    r = np.array([0.04, 0.04])
    model = linear_model(A, B, H, q, r)
    rng = np.random.default_rng(seed)
    x = np.zeros(4)
    frames = []
    u_prev = np.zeros(2)
    for k in range(n_steps + 1):
        if k:
            x = A @ x + B @ u_prev + rng.normal(0.0, np.sqrt(q))
            z = H @ x + rng.normal(0.0, np.sqrt(r))
            obs = ((model, z),)
        else:
            obs = ()
        u = np.array([math.sin(0.1 * k), math.cos(0.1 * k)])
        frames.append(Frame(k * dt, u, obs, x.copy()))
        u_prev = u
    initial = GaussianBelief(np.zeros(4), np.eye(4) * 0.1)
    return model, frames, initial


def summarize(results: dict[str, RunResult]) -> dict:
    out = {}
    for name in sorted(results):
        pos, yaw = results[name].errors()
        out[name] = {
            "mean_position_error": pos,
            "mean_yaw_error": yaw,
            "steps": int(results[name].means.shape[0]),
        }
    return out


SCENARIOS = {
    "default": SyntheticScenario(measure_every=10),
    "short": SyntheticScenario(n_steps=100, dt=0.1),
}


def scenario_with_noise(scenario: SyntheticScenario, noise: NoiseInjectionConfig) -> SyntheticScenario:
    return replace(scenario, noise=noise)
