import filecmp
import logging
import math

import numpy as np
import pytest

from mkf.dataio import (
    DatasetBundle,
    DatasetFormatError,
    NoiseInjectionConfig,
    SyntheticScenario,
    crop,
    generate_synthetic,
    interpolate_truth,
    load_dataset,
    native_dt,
    reinject_noise,
    resample,
    save_dataset,
)
from mkf.distributions import Gaussian, Uniform
from mkf.models import DiffDriveConfig, LandmarkMap, diff_drive_model, range_bearing, simulate, wrap_angle


def write_mrclam(root, odometry, measurements, truth, landmarks, barcodes):
    root.mkdir(parents=True, exist_ok=True)
    header = "# Time [sec]   columns\n"
    (root / "Robot1_Odometry.dat").write_text(header + "".join(odometry))
    (root / "Robot1_Measurement.dat").write_text(header + "".join(measurements))
    (root / "Robot1_Groundtruth.dat").write_text(header + "".join(truth))
    (root / "Landmark_Groundtruth.dat").write_text(header + "".join(landmarks))
    (root / "Barcodes.dat").write_text(header + "".join(barcodes))
    return root


@pytest.fixture
def tiny(tmp_path):
    return write_mrclam(
        tmp_path / "mrclam",
        ["1248272272.841 0.1 0.05\n", "1248272272.861 0.2 0.0\n", "1248272272.881 0.2 -0.1\n"],
        [
            "1248272272.87 72 1.5 0.2\n",
            "1248272272.85 90 2.0 -0.1\n",
            "1248272272.85 5 3.0 0.0\n",  # another robot's barcode
            "1248272272.85 99 1.0 0.0\n",  # unknown barcode
        ],
        ["1248272272.84 0.0 0.0 0.0\n", "1248272272.88 0.01 0.0 0.02\n"],
        ["6 1.0 2.0 0.001 0.002\n", "7 -1.0 0.5 0.001 0.001\n"],
        ["1 5\n", "6 72\n", "7 90\n"],
    )


# -- loading ------------------------------------------------------------------


def test_odometry_line_echo(tiny):
    b = load_dataset(tiny)
    np.testing.assert_array_equal(b.odometry[0], [1248272272.841, 0.1, 0.05])


def test_barcodes_resolve_to_landmarks(tiny, caplog):
    with caplog.at_level(logging.WARNING, logger="mkf.dataio"):
        b = load_dataset(tiny)
    assert b.measurements[:, 1].tolist() == [7.0, 6.0]
    assert b.stats["dropped_measurements"] == 2
    assert "dropped 2" in caplog.text
    assert b.landmarks[6] == (1.0, 2.0)
    assert b.landmark_std[6] == (0.001, 0.002)


def test_streams_sorted_stably():
    odo = [[2.0, 0.1, 0.0], [1.0, 0.2, 0.0], [2.0, 0.3, 0.0], [1.0, 0.4, 0.0]]
    b = DatasetBundle(odo, np.empty((0, 4)), [[0.0, 0, 0, 0]], LandmarkMap({}))
    assert b.odometry[:, 1].tolist() == [0.2, 0.4, 0.1, 0.3]


def test_unknown_landmark_rejected():
    with pytest.raises(DatasetFormatError, match="unknown landmarks"):
        DatasetBundle([[0, 0, 0]], [[0, 3, 1.0, 0.0]], [[0, 0, 0, 0]], LandmarkMap({1: (0, 0)}))


@pytest.mark.parametrize("bad,msg", [("1.0 0.1\n", "expected 3 columns"), ("1.0 x 0.1\n", "malformed number")])
def test_malformed_line_reports_file_and_line(tiny, bad, msg):
    path = tiny / "Robot1_Odometry.dat"
    path.write_text(path.read_text() + bad)
    with pytest.raises(DatasetFormatError, match=msg) as info:
        load_dataset(tiny)
    assert "Robot1_Odometry.dat:5:" in str(info.value)


def test_manifest_names_files(tmp_path):
    b = generate_synthetic(SyntheticScenario(n_steps=5), seed=1)
    save_dataset(b, tmp_path / "d")
    names = sorted(p.name for p in (tmp_path / "d").iterdir())
    assert "dataset.json" in names
    (tmp_path / "d" / "dataset.json").write_text('{"odometry": "x"}')
    with pytest.raises(DatasetFormatError, match="missing entries"):
        load_dataset(tmp_path / "d")


def test_save_load_round_trip_is_lossless(tmp_path):
    b = generate_synthetic(SyntheticScenario(n_steps=40), seed=3)
    save_dataset(b, tmp_path / "a")
    back = load_dataset(tmp_path / "a")
    for name in ("odometry", "measurements", "groundtruth"):
        np.testing.assert_array_equal(getattr(back, name), getattr(b, name))
    assert back.landmarks.positions == b.landmarks.positions
    save_dataset(back, tmp_path / "b")
    for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False), f


def test_loaded_files_resave_canonically(tiny, tmp_path):
    b = load_dataset(tiny)
    save_dataset(b, tmp_path / "c")
    again = load_dataset(tmp_path / "c")
    np.testing.assert_array_equal(again.measurements, b.measurements)
    assert again.barcodes == b.barcodes


# -- resampling -----------------------------------------------------------------


def test_resample_native_rate_passes_through(tiny):
    b = load_dataset(tiny)
    assert native_dt(b) == pytest.approx(0.02)
    steps = resample(b)
    assert len(steps) == 2
    np.testing.assert_array_equal(steps[0].u, [0.1, 0.05])
    np.testing.assert_array_equal(steps[1].u, [0.2, 0.0])


def test_resample_holds_input_and_bins_measurements():
    odo = [[0.0, 1.0, 0.0], [0.35, 2.0, 0.5]]
    meas = [[0.26, 1, 1.0, 0.0]]
    gt = [[0.0, 0, 0, 0], [1.0, 1, 0, 0]]
    steps = resample(DatasetBundle(odo, meas, gt, LandmarkMap({1: (1, 1)})), 0.1)
    assert [s.u[0] for s in steps] == [1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0][: len(steps)]
    counts = [len(s.measurements) for s in steps]
    assert sum(counts) == 1 and counts[3] == 1
    np.testing.assert_allclose(steps[2].truth, [0.2, 0, 0], atol=1e-12)


def test_yaw_interpolates_across_seam():
    gt = np.array([[0.0, 0, 0, math.pi - 0.1], [1.0, 0, 0, -math.pi + 0.1]])
    th = interpolate_truth(gt, np.linspace(0.0, 1.0, 11))[:, 2]
    steps = np.abs(wrap_angle(np.diff(th)))
    np.testing.assert_allclose(steps, 0.02, atol=1e-12)
    assert abs(th[5]) == pytest.approx(math.pi, abs=1e-12)


def test_resample_rejects_bad_dt(tiny):
    with pytest.raises(ValueError, match="dt"):
        resample(load_dataset(tiny), 0.0)


def test_crop_keeps_segment():
    b = generate_synthetic(SyntheticScenario(n_steps=100, dt=0.1), seed=0)
    c = crop(b, 2.0, 5.0)
    assert c.odometry[0, 0] == pytest.approx(2.0) and c.odometry[-1, 0] == pytest.approx(5.0)
    assert np.all((c.measurements[:, 0] >= 2.0) & (c.measurements[:, 0] <= 5.0))
    with pytest.raises(ValueError, match="empty"):
        crop(b, 3.0, 1.0)


# -- noise re-injection -------------------------------------------------------------


def identity_config():
    return NoiseInjectionConfig("custom", vr=Gaussian(1.0, 0.0), vphi=Gaussian(0.0, 0.0))


def bundle_with_measurements(n, seed=0):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0.0, 10.0, n))
    lids = rng.integers(1, 3, n)
    meas = np.column_stack([t, lids, np.ones(n), np.zeros(n)])
    gt = np.column_stack([np.linspace(0, 10, 11), np.linspace(0, 1, 11), np.zeros(11), np.linspace(-1, 1, 11)])
    return DatasetBundle([[0.0, 0.0, 0.0]], meas, gt, LandmarkMap({1: (3.0, 1.0), 2: (-2.0, 2.0)}))


def test_identity_laws_give_truth_measurements():
    b = bundle_with_measurements(50)
    out = reinject_noise(b, identity_config(), seed=1)
    states = interpolate_truth(b.groundtruth, b.measurements[:, 0])
    for s, (t, lid, r, phi) in zip(states, out.measurements):
        r0, p0 = range_bearing(s, b.landmarks[int(lid)])
        assert r == pytest.approx(r0, abs=1e-12)
        assert abs(wrap_angle(phi - p0)) <= 1e-12
    assert out.stats["clamped_ranges"] == 0


def test_reinjection_seeded():
    b = bundle_with_measurements(20)
    cfg = NoiseInjectionConfig("nongaussian")
    a1 = reinject_noise(b, cfg, seed=4).measurements
    a2 = reinject_noise(b, cfg, seed=4).measurements
    a3 = reinject_noise(b, cfg, seed=5).measurements
    np.testing.assert_array_equal(a1, a2)
    assert not np.array_equal(a1, a3)


def injected_factors(cfg, n=10**5, seed=0):
    b = bundle_with_measurements(n, seed)
    clean = reinject_noise(b, identity_config()).measurements
    noisy = reinject_noise(b, cfg, seed=seed).measurements
    return noisy[:, 2] / clean[:, 2], wrap_angle(noisy[:, 3] - clean[:, 3])


def test_nongaussian_range_ratio_mean():
    cfg = NoiseInjectionConfig("nongaussian")
    ratio, bearing = injected_factors(cfg)
    law = cfg.noise().vr
    assert abs(ratio.mean() - law.mean) <= 5 * math.sqrt(law.variance / ratio.size)
    limit = math.pi / 12
    assert bearing.min() >= -limit - 1e-12 and bearing.max() <= limit + 1e-12


def test_gaussian_regime_statistics():
    ratio, bearing = injected_factors(NoiseInjectionConfig("gaussian"), seed=2)
    n = ratio.size
    assert abs(ratio.mean() - 1.0) <= 5 * math.sqrt(0.01 / n)
    assert abs(ratio.var(ddof=1) - 0.01) <= 5 * 0.01 * math.sqrt(2 / (n - 1))
    assert abs(bearing.mean()) <= 5 * math.sqrt(0.0007 / n)
    assert abs(bearing.var(ddof=1) - 0.0007) <= 5 * 0.0007 * math.sqrt(2 / (n - 1))


def test_nonpositive_ranges_clamped():
    cfg = NoiseInjectionConfig("custom", vr=Uniform(-1.0, 2.0), vphi=Gaussian(0.0, 0.0))
    b = bundle_with_measurements(200)
    out = reinject_noise(b, cfg, seed=0)
    negative = int(np.sum(out.measurements[:, 2] == 1e-6))
    assert negative > 0 and np.all(out.measurements[:, 2] > 0)
    assert out.stats["clamped_ranges"] == negative


def test_noise_config_validation():
    with pytest.raises(ValueError, match="regime"):
        NoiseInjectionConfig("laplace")
    with pytest.raises(ValueError, match="vphi_limit"):
        NoiseInjectionConfig("nongaussian", vphi_limit=0.0)
    with pytest.raises(ValueError, match="custom"):
        NoiseInjectionConfig("custom")
    laws = NoiseInjectionConfig("gaussian").noise()
    assert (laws.vr.mean, laws.vr.variance, laws.vphi.variance) == (1.0, 0.01, 0.0007)


# -- synthetic scenarios ----------------------------------------------------------


def quiet_scenario(**kw):
    zero = NoiseInjectionConfig("custom", vr=Gaussian(1.0, 0.0), vphi=Gaussian(0.0, 0.0))
    return SyntheticScenario(wv=Gaussian(0.0, 0.0), wu=Gaussian(0.0, 0.0), noise=zero, **kw)


def test_zero_noise_truth_is_rollout():
    sc = quiet_scenario(n_steps=50, dt=0.1)
    b = generate_synthetic(sc, seed=0)
    dyn = diff_drive_model(DiffDriveConfig(sc.dt, sc.wv, sc.wu))
    states, _ = simulate(dyn, sc.x0, b.odometry[:-1, 1:], noiseless=True)
    np.testing.assert_allclose(b.groundtruth[:, 1:], states, atol=1e-12)


@pytest.mark.parametrize("every,max_range", [(1, math.inf), (5, math.inf), (1, 4.0)])
def test_measurement_count(every, max_range):
    sc = quiet_scenario(n_steps=60, dt=0.1, measure_every=every, max_range=max_range)
    b = generate_synthetic(sc, seed=0)
    lm = LandmarkMap(sc.landmarks)
    expected = sum(
        sum(range_bearing(x, lm[lid])[0] <= max_range for lid in lm)
        for k, x in enumerate(b.groundtruth[1:, 1:], start=1)
        if k % every == 0
    )
    assert len(b.measurements) == expected
    if max_range == math.inf:
        assert expected == (60 // every) * 4


def test_synthetic_seeded():
    a = generate_synthetic(SyntheticScenario(n_steps=30), seed=7)
    b = generate_synthetic(SyntheticScenario(n_steps=30), seed=7)
    np.testing.assert_array_equal(a.measurements, b.measurements)
    np.testing.assert_array_equal(a.groundtruth, b.groundtruth)


def test_scenario_validation():
    with pytest.raises(ValueError):
        SyntheticScenario(n_steps=0)
    with pytest.raises(ValueError):
        SyntheticScenario(dt=-1.0)
    assert SyntheticScenario().to_dict()["max_range"] is None
