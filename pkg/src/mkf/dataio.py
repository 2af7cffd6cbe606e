"""Dataset files in the UTIAS MRCLAM column layout, resampling and noise re-injection.

A dataset directory holds five whitespace-delimited text files::

    odometry      time  v  u
    measurement   time  subject  range  bearing
    groundtruth   time  x  y  theta
    landmarks     subject  x  y  x_std  y_std
    barcodes      subject  barcode

Measurement subjects are barcode numbers when a barcode table is present
(as in the published dataset) and landmark ids otherwise.  Lines starting
with ``#`` are comments.  An optional ``dataset.json`` manifest maps the
roles above to file names; without it the MRCLAM names
``Robot<k>_Odometry.dat`` and friends are used.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .distributions import Distribution1D, Exponential, Gaussian, Uniform
from .models import (
    DiffDriveConfig,
    LandmarkMap,
    RangeBearingNoise,
    diff_drive_model,
    range_bearing,
    wrap_angle,
)

__all__ = [
    "DatasetFormatError",
    "DatasetBundle",
    "NoiseInjectionConfig",
    "Step",
    "SyntheticScenario",
    "load_dataset",
    "save_dataset",
    "resample",
    "reinject_noise",
    "generate_synthetic",
    "interpolate_truth",
    "crop",
    "native_dt",
    "MANIFEST_NAME",
    "RANGE_FLOOR",
]

log = logging.getLogger(__name__)

MANIFEST_NAME = "dataset.json"
RANGE_FLOOR = 1e-6
ROLES = ("odometry", "measurement", "groundtruth", "landmarks", "barcodes")


class DatasetFormatError(ValueError):
    pass


@dataclass(eq=False)
class DatasetBundle:
    """Time-sorted streams of one robot plus the landmark map.

    ``odometry`` rows are ``(t, v, u)``, ``measurements`` rows
    ``(t, landmark_id, range, bearing)`` and ``groundtruth`` rows
    ``(t, x, y, theta)``.
    """

    odometry: np.ndarray
    measurements: np.ndarray
    groundtruth: np.ndarray
    landmarks: LandmarkMap
    barcodes: dict = field(default_factory=dict)
    landmark_std: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.odometry = _sorted(np.asarray(self.odometry, dtype=float).reshape(-1, 3))
        self.measurements = _sorted(np.asarray(self.measurements, dtype=float).reshape(-1, 4))
        self.groundtruth = _sorted(np.asarray(self.groundtruth, dtype=float).reshape(-1, 4))
        unknown = {int(i) for i in self.measurements[:, 1]} - set(self.landmarks)
        if unknown:
            raise DatasetFormatError(f"measurements reference unknown landmarks {sorted(unknown)}")


def _sorted(rows: np.ndarray) -> np.ndarray:
    if rows.shape[0] == 0:
        return rows
    return rows[np.argsort(rows[:, 0], kind="stable")]


# ---------------------------------------------------------------------------
# Loading and saving


def _read_table(path: Path, ncols: int) -> list[list[float]]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) < ncols:
                raise DatasetFormatError(f"{path}:{lineno}: expected {ncols} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts[:ncols]])
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: malformed number in {text!r}") from None
    return rows


def _file_names(path: Path, robot: int) -> dict:
    manifest = path / MANIFEST_NAME
    if manifest.exists():
        names = json.loads(manifest.read_text())
        missing = [r for r in ROLES[:4] if r not in names]
        if missing:
            raise DatasetFormatError(f"{manifest}: missing entries {missing}")
        return names
    return {
        "odometry": f"Robot{robot}_Odometry.dat",
        "measurement": f"Robot{robot}_Measurement.dat",
        "groundtruth": f"Robot{robot}_Groundtruth.dat",
        "landmarks": "Landmark_Groundtruth.dat",
        "barcodes": "Barcodes.dat",
    }


def load_dataset(path, robot: int = 1) -> DatasetBundle:
    """Read one robot's streams from a dataset directory.

    Measurements whose subject does not resolve to a landmark (unknown
    barcodes, other robots) are dropped; the count is logged and stored in
    ``bundle.stats["dropped_measurements"]``.
    """
    path = Path(path)
    names = _file_names(path, robot)
    odom = _read_table(path / names["odometry"], 3)
    meas = _read_table(path / names["measurement"], 4)
    truth = _read_table(path / names["groundtruth"], 4)
    lm_rows = _read_table(path / names["landmarks"], 3)
    barcodes: dict[int, int] = {}
    if names.get("barcodes") and (path / names["barcodes"]).exists():
        for subject, code in _read_table(path / names["barcodes"], 2):
            barcodes[int(subject)] = int(code)
    landmarks = LandmarkMap.from_rows(lm_rows)
    std = {}
    with open(path / names["landmarks"]) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) >= 5 and not line.lstrip().startswith("#"):
                std[int(float(parts[0]))] = (float(parts[3]), float(parts[4]))
    by_code = {code: subject for subject, code in barcodes.items()}
    kept, dropped = [], 0
    for t, subject, r, b in meas:
        key = int(subject)
        lid = by_code.get(key) if barcodes else key
        if lid is None or lid not in landmarks:
            dropped += 1
            continue
        kept.append((t, lid, r, b))
    if dropped:
        log.warning("dropped %d measurements of non-landmark or unknown subjects", dropped)
    return DatasetBundle(
        np.array(odom).reshape(-1, 3),
        np.array(kept).reshape(-1, 4),
        np.array(truth).reshape(-1, 4),
        landmarks,
        barcodes,
        std,
        {"dropped_measurements": dropped},
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def save_dataset(bundle: DatasetBundle, path, robot: int = 1) -> None:
    """Write ``bundle`` in canonical form (tab-separated, shortest round-trip floats)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    names = _file_names(path, robot) if (path / MANIFEST_NAME).exists() else {
        "odometry": f"Robot{robot}_Odometry.dat",
        "measurement": f"Robot{robot}_Measurement.dat",
        "groundtruth": f"Robot{robot}_Groundtruth.dat",
        "landmarks": "Landmark_Groundtruth.dat",
        "barcodes": "Barcodes.dat",
    }
    (path / MANIFEST_NAME).write_text(json.dumps(names, indent=2, sort_keys=True) + "\n")

    def write(name, lines):
        (path / name).write_text("".join(line + "\n" for line in lines))

    write(names["odometry"], ("\t".join(_fmt(v) for v in row) for row in bundle.odometry))
    write(names["groundtruth"], ("\t".join(_fmt(v) for v in row) for row in bundle.groundtruth))
    write(
        names["measurement"],
        (
            f"{_fmt(t)}\t{bundle.barcodes.get(int(lid), int(lid))}\t{_fmt(r)}\t{_fmt(b)}"
            for t, lid, r, b in bundle.measurements
        ),
    )
    lm_lines = []
    for lid, (x, y) in bundle.landmarks.positions.items():
        sx, sy = bundle.landmark_std.get(lid, (0.0, 0.0))
        lm_lines.append(f"{lid}\t{_fmt(x)}\t{_fmt(y)}\t{_fmt(sx)}\t{_fmt(sy)}")
    write(names["landmarks"], lm_lines)
    if bundle.barcodes:
        write(names["barcodes"], (f"{s}\t{c}" for s, c in sorted(bundle.barcodes.items())))
    elif (path / names["barcodes"]).exists():
        (path / names["barcodes"]).unlink()


# ---------------------------------------------------------------------------
# Resampling


@dataclass(frozen=True, eq=False)
class Step:
    index: int
    t: float
    u: np.ndarray
    measurements: tuple  # of (landmark_id, range, bearing)
    truth: np.ndarray


def interpolate_truth(groundtruth: np.ndarray, t) -> np.ndarray:
    """Linear interpolation of ``(x, y)``; yaw interpolated along the shorter arc.

    Times outside the recorded span are clamped to the end points.
    """
    times = groundtruth[:, 0]
    t = np.atleast_1d(np.asarray(t, dtype=float))
    i = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1)
    j = np.minimum(i + 1, len(times) - 1)
    span = times[j] - times[i]
    frac = np.where(span > 0, (np.clip(t, times[0], times[-1]) - times[i]) / np.where(span > 0, span, 1.0), 0.0)
    a, b = groundtruth[i, 1:], groundtruth[j, 1:]
    xy = a[:, :2] + frac[:, None] * (b[:, :2] - a[:, :2])
    dth = wrap_angle(b[:, 2] - a[:, 2])
    th = wrap_angle(a[:, 2] + frac * dth)
    return np.column_stack([xy, th])


def native_dt(bundle: DatasetBundle) -> float:
    d = np.diff(bundle.odometry[:, 0])
    d = d[d > 0]
    if d.size == 0:
        raise DatasetFormatError("cannot infer a sampling time from odometry")
    return float(np.median(d))


def resample(bundle: DatasetBundle, dt: float | None = None) -> list[Step]:
    """Put all streams on a uniform time grid.

    Odometry is zero-order held, each measurement goes to the nearest grid
    step and ground truth is interpolated.
    """
    if dt is None:
        dt = native_dt(bundle)
    if not dt > 0:
        raise ValueError("dt must be > 0")
    odo, gt = bundle.odometry, bundle.groundtruth
    if len(odo) == 0 or len(gt) == 0:
        raise DatasetFormatError("odometry and ground truth must be non-empty")
    t0 = max(odo[0, 0], gt[0, 0])
    t1 = min(odo[-1, 0], gt[-1, 0])
    count = int(math.floor((t1 - t0) / dt + 1e-9)) + 1
    times = t0 + dt * np.arange(count)
    held = np.clip(np.searchsorted(odo[:, 0], times + 1e-9 * dt, side="right") - 1, 0, len(odo) - 1)
    truth = interpolate_truth(gt, times)
    bins: list[list] = [[] for _ in range(count)]
    for t, lid, r, b in bundle.measurements:
        k = int(round((t - t0) / dt))
        if 0 <= k < count:
            bins[k].append((int(lid), float(r), float(b)))
    return [
        Step(k, float(times[k]), odo[held[k], 1:].copy(), tuple(bins[k]), truth[k])
        for k in range(count)
    ]


# ---------------------------------------------------------------------------
# Noise re-injection


@dataclass(frozen=True)
class NoiseInjectionConfig:
    """Measurement-noise regime.

    ``gaussian``: ``vr ~ N(1, 0.01)``, ``vphi ~ N(0, 0.0007)``.
    ``nongaussian``: ``vr ~ Exponential(1)``, ``vphi ~ Uniform(-limit, limit)``.
    ``custom``: the given ``vr`` and ``vphi`` laws.
    """

    regime: str = "gaussian"
    vphi_limit: float = math.pi / 12
    vr: Distribution1D | None = None
    vphi: Distribution1D | None = None

    def __post_init__(self):
        if self.regime not in ("gaussian", "nongaussian", "custom"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.vphi_limit > 0:
            raise ValueError("vphi_limit must be > 0")
        if self.regime == "custom" and (self.vr is None or self.vphi is None):
            raise ValueError("custom regime needs both vr and vphi laws")

    def noise(self) -> RangeBearingNoise:
        if self.regime == "gaussian":
            return RangeBearingNoise(Gaussian(1.0, 0.01), Gaussian(0.0, 0.0007))
        if self.regime == "nongaussian":
            return RangeBearingNoise(Exponential(1.0), Uniform(-self.vphi_limit, self.vphi_limit))
        return RangeBearingNoise(self.vr, self.vphi)

    def to_dict(self) -> dict:
        out = {"regime": self.regime, "vphi_limit": self.vphi_limit}
        noise = self.noise()
        out["vr"] = noise.vr.to_dict()
        out["vphi"] = noise.vphi.to_dict()
        return out


def _apply_noise(r, phi, noise: RangeBearingNoise, rng):
    n = len(r)
    vr = noise.vr.sample(rng, n)
    vphi = noise.vphi.sample(rng, n)
    rn = r * vr
    clamped = int(np.sum(rn <= 0))
    rn = np.where(rn <= 0, RANGE_FLOOR, rn)
    return rn, wrap_angle(phi + vphi), clamped


def reinject_noise(bundle: DatasetBundle, cfg: NoiseInjectionConfig, seed: int = 0) -> DatasetBundle:
    """Recompute measurements from ground truth and corrupt them with ``cfg`` noise."""
    meas = bundle.measurements
    if len(meas) == 0:
        return replace(bundle, measurements=meas.copy(), stats=dict(bundle.stats))
    states = interpolate_truth(bundle.groundtruth, meas[:, 0])
    rb = np.array([range_bearing(s, bundle.landmarks[int(lid)]) for s, lid in zip(states, meas[:, 1])])
    rng = np.random.default_rng(seed)
    r, phi, clamped = _apply_noise(rb[:, 0], rb[:, 1], cfg.noise(), rng)
    if clamped:
        log.warning("clamped %d non-positive ranges to %g m", clamped, RANGE_FLOOR)
    stats = dict(bundle.stats)
    stats["clamped_ranges"] = clamped
    new = np.column_stack([meas[:, 0], meas[:, 1], r, phi])
    return replace(bundle, measurements=new, stats=stats)


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class SyntheticScenario:
    """Closed-loop-free drive among landmarks.

    The commanded turn rate is ``u0 + u_amp * sin(2 pi t / u_period)``.
    Landmarks beyond ``max_range`` are not observed and observations are
    taken every ``measure_every`` steps.
    """

    n_steps: int = 500
    dt: float = 0.02
    v: float = 0.5
    u0: float = 0.0
    u_amp: float = 0.3
    u_period: float = 20.0
    x0: tuple = (3.573, -3.333, 2.341)
    landmarks: tuple = ((1, (0.0, 0.0)), (2, (4.0, 0.0)), (3, (2.0, -4.0)), (4, (-2.0, -2.0)))
    max_range: float = math.inf
    measure_every: int = 1
    wv: Distribution1D = Gaussian(0.0, 0.01)
    wu: Distribution1D = Gaussian(0.0, 1.0)
    noise: NoiseInjectionConfig = NoiseInjectionConfig("nongaussian")
    t0: float = 0.0

    def __post_init__(self):
        if self.n_steps < 1 or self.measure_every < 1:
            raise ValueError("n_steps and measure_every must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")

    def to_dict(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "dt": self.dt,
            "v": self.v,
            "u0": self.u0,
            "u_amp": self.u_amp,
            "u_period": self.u_period,
            "x0": list(self.x0),
            "landmarks": [[lid, list(xy)] for lid, xy in self.landmarks],
            "max_range": None if math.isinf(self.max_range) else self.max_range,
            "measure_every": self.measure_every,
            "wv": self.wv.to_dict(),
            "wu": self.wu.to_dict(),
            "noise": self.noise.to_dict(),
            "t0": self.t0,
        }


def generate_synthetic(scenario: SyntheticScenario, seed: int = 0) -> DatasetBundle:
    """Simulate ground truth, commanded odometry and noisy landmark observations."""
    rng = np.random.default_rng(seed)
    dyn = diff_drive_model(DiffDriveConfig(scenario.dt, scenario.wv, scenario.wu))
    landmarks = LandmarkMap(scenario.landmarks)
    noise = scenario.noise.noise()
    times = scenario.t0 + scenario.dt * np.arange(scenario.n_steps + 1)
    x = np.asarray(scenario.x0, dtype=float)
    odom, truth, meas = [], [], []
    truth.append([times[0], *x])
    clamped = 0
    for k in range(scenario.n_steps):
        u = scenario.u0 + scenario.u_amp * math.sin(2 * math.pi * times[k] / scenario.u_period)
        odom.append([times[k], scenario.v, u])
        w = [float(scenario.wv.sample(rng, None)), float(scenario.wu.sample(rng, None))]
        x = dyn.f(x, (scenario.v, u), w)
        truth.append([times[k + 1], *x])
        if (k + 1) % scenario.measure_every:
            continue
        visible = [
            lid for lid in landmarks
            if range_bearing(x, landmarks[lid])[0] <= scenario.max_range
        ]
        if visible:
            rb = np.array([range_bearing(x, landmarks[lid]) for lid in visible])
            r, phi, c = _apply_noise(rb[:, 0], rb[:, 1], noise, rng)
            clamped += c
            meas.extend([times[k + 1], lid, ri, pi] for lid, ri, pi in zip(visible, r, phi))
    odom.append([times[-1], scenario.v, scenario.u0 + scenario.u_amp * math.sin(2 * math.pi * times[-1] / scenario.u_period)])
    return DatasetBundle(
        np.array(odom),
        np.array(meas).reshape(-1, 4),
        np.array(truth),
        landmarks,
        stats={"clamped_ranges": clamped},
    )


def crop(bundle: DatasetBundle, start: float = 0.0, end: float | None = None) -> DatasetBundle:
    """Keep the segment ``[t0 + start, t0 + end]`` where ``t0`` is the first odometry time."""
    if len(bundle.odometry) == 0:
        return bundle
    t0 = bundle.odometry[0, 0]
    lo = t0 + start
    hi = math.inf if end is None else t0 + end
    if not hi > lo:
        raise ValueError("empty segment")

    def keep(rows):
        return rows[(rows[:, 0] >= lo) & (rows[:, 0] <= hi)]

    return replace(
        bundle,
        odometry=keep(bundle.odometry),
        measurements=keep(bundle.measurements),
        groundtruth=keep(bundle.groundtruth),
        stats=dict(bundle.stats),
    )
