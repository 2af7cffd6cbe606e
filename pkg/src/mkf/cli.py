"""Command-line entry point: ``mkf moment``, ``mkf filter`` and ``mkf sweep``.

Settings come from built-in defaults, then an optional INI file given with
``--config`` (sections ``model``, ``noise``, ``filter``, ``synthetic``,
``dataset``, ``run``), then command-line flags.  Every output is a pure
function of the resolved settings, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    NoiseInjectionConfig,
    crop,
    generate_synthetic,
    load_dataset,
    native_dt,
    reinject_noise,
)
from .distributions import distribution_from_dict
from .expand import MomentEngine, RandomVectorSpec, mean_substitution
from .experiment import FILTER_NAMES, SCENARIOS, linear_scenario, run_filters, run_robot, summarize
from .expr import ExprSyntaxError, evaluate, parse
from .filters import FilterDivergence, UKFParams, unscented_transform
from .montecarlo import mc_expectation

__all__ = ["main", "build_parser", "load_rv_spec", "rv_from_dict", "parse_values", "RunSettings"]

log = logging.getLogger("mkf")

BUILTIN_RV = ("exp_uniform", "gaussian2", "gaussian3")


# ---------------------------------------------------------------------------
# Random-vector spec files


def _number(v) -> float:
    if isinstance(v, str):
        return float(evaluate(parse(v), {}))
    return float(v)


def _law(d: dict):
    return distribution_from_dict({k: (v if k == "kind" else _number(v)) for k, v in d.items()})


def rv_from_dict(data: dict) -> RandomVectorSpec:
    """Build a random vector from its JSON form.

    ``{"gaussian": {"names", "mean", "cov"}, "independent": [[name, law], ...]}``;
    numbers may be written as constant expressions such as ``"pi/3"``.
    """
    g = data.get("gaussian") or {}
    names = list(g.get("names", []))
    mean = [_number(v) for v in g.get("mean", [])]
    cov = [[_number(v) for v in row] for row in g.get("cov", [])]
    indep = data.get("independent", [])
    if isinstance(indep, dict):
        indep = list(indep.items())
    laws = tuple((str(n), _law(d)) for n, d in indep)
    return RandomVectorSpec(names, np.array(mean, dtype=float), np.array(cov, dtype=float).reshape(len(names), len(names)), laws)


def load_rv_spec(name_or_path: str) -> RandomVectorSpec:
    """Load a spec file, or one of the built-in names in ``BUILTIN_RV``."""
    if name_or_path in BUILTIN_RV:
        text = resources.files("mkf").joinpath("data", f"{name_or_path}.json").read_text()
    else:
        text = Path(name_or_path).read_text()
    return rv_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# moment


def unscented_estimate(e, rv: RandomVectorSpec, params: UKFParams = UKFParams()) -> float:
    names, mean, cov = rv.moment_matched()

    def fn(pts):
        return np.atleast_2d(np.broadcast_to(evaluate(e, dict(zip(names, pts))), pts.shape[1:]))

    return float(unscented_transform(fn, mean, cov, params)[0][0])


def _fmt(v: float) -> str:
    return format(v, ".10g")


def cmd_moment(args, out) -> int:
    rv = load_rv_spec(args.rv)
    extended = MomentEngine(rv)
    original = MomentEngine(rv.decorrelated())
    header = ["expr", "linear", "ut", "original_emp", "extended_emp"]
    if args.mc:
        header += ["mc", "mc_std_error"]
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for text in args.expr:
        e = parse(text)
        row = [
            text,
            _fmt(mean_substitution(e, rv)),
            _fmt(unscented_estimate(e, rv)),
            _fmt(original.expectation(e)),
            _fmt(extended.expectation(e)),
        ]
        if args.mc:
            est = mc_expectation(e, rv, n=args.mc, seed=args.seed)
            row += [_fmt(est.value), _fmt(est.std_error)]
        writer.writerow(row)
    return 0


# ---------------------------------------------------------------------------
# filter / sweep settings


@dataclass
class RunSettings:
    dataset: str | None = None
    robot: int = 1
    segment_start: float = 0.0
    segment_end: float | None = None
    synthetic: str | None = None
    n_steps: int | None = None
    measure_every: int | None = None
    dt: float | None = None
    p0: tuple = (0.01, 0.01, 0.01)
    regime: str = "gaussian"
    vphi_limit: float = math.pi / 12
    reinject: bool | None = None
    filters: tuple = FILTER_NAMES
    seed: int = 0

    def noise(self) -> NoiseInjectionConfig:
        return NoiseInjectionConfig(self.regime, self.vphi_limit)


_CONFIG_KEYS = {
    "model": {"dt": float, "p0": "floats"},
    "noise": {"regime": str, "vphi_limit": float, "reinject": bool},
    "filter": {"filters": "names"},
    "synthetic": {"scenario": str, "n_steps": int, "measure_every": int},
    "dataset": {"path": str, "robot": int, "segment_start": float, "segment_end": float},
    "run": {"seed": int},
}
_RENAME = {("synthetic", "scenario"): "synthetic", ("dataset", "path"): "dataset"}


def _convert(kind, text: str):
    if kind == "floats":
        return tuple(float(v) for v in text.split(","))
    if kind == "names":
        return tuple(v.strip().lower() for v in text.split(",") if v.strip())
    if kind is bool:
        return text.strip().lower() in ("1", "true", "yes", "on")
    return kind(text.strip())


def settings_from(args) -> RunSettings:
    s = RunSettings()
    if getattr(args, "config", None):
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise FileNotFoundError(args.config)
        for section, keys in _CONFIG_KEYS.items():
            if not cp.has_section(section):
                continue
            for key, value in cp.items(section):
                if key not in keys:
                    raise ValueError(f"unknown config key [{section}] {key}")
                setattr(s, _RENAME.get((section, key), key), _convert(keys[key], value))
    flags = {
        "dataset": args.dataset,
        "robot": args.robot,
        "synthetic": args.synthetic,
        "n_steps": args.n_steps,
        "measure_every": args.measure_every,
        "dt": args.dt,
        "regime": args.regime,
        "vphi_limit": args.vphi_limit,
        "seed": args.seed,
        "segment_start": args.segment_start,
        "segment_end": args.segment_end,
    }
    if args.filters is not None:
        flags["filters"] = _convert("names", args.filters)
    if args.reinject is not None:
        flags["reinject"] = args.reinject
    for k, v in flags.items():
        if v is not None:
            setattr(s, k, v)
    if s.dataset and s.synthetic:
        raise ValueError("choose either a dataset or a synthetic scenario")
    if not s.dataset and not s.synthetic:
        s.synthetic = "default"
    unknown = set(s.filters) - set(FILTER_NAMES)
    if unknown:
        raise ValueError(f"unknown filters {sorted(unknown)}")
    s.noise()
    return s


def _run(settings: RunSettings):
    """Returns ``(results, state_names, info)`` for one run."""
    filters = settings.filters
    if settings.synthetic == "linear":
        model, frames, initial = linear_scenario(settings.seed, settings.n_steps or 100)
        return run_filters(model, frames, initial, filters), model.state_names, {}
    noise_cfg = settings.noise()
    if settings.synthetic:
        if settings.synthetic not in SCENARIOS:
            raise ValueError(f"unknown scenario {settings.synthetic!r}; choose from {sorted(SCENARIOS) + ['linear']}")
        sc = replace(SCENARIOS[settings.synthetic], noise=noise_cfg)
        if settings.n_steps:
            sc = replace(sc, n_steps=settings.n_steps)
        if settings.measure_every:
            sc = replace(sc, measure_every=settings.measure_every)
        if settings.dt:
            sc = replace(sc, dt=settings.dt)
        bundle = generate_synthetic(sc, settings.seed)
        dt = sc.dt
        info = {"scenario": sc.to_dict()}
    else:
        bundle = crop(load_dataset(settings.dataset, settings.robot), settings.segment_start, settings.segment_end)
        reinject = settings.reinject if settings.reinject is not None else settings.regime != "gaussian"
        if reinject:
            bundle = reinject_noise(bundle, noise_cfg, settings.seed)
        dt = settings.dt or native_dt(bundle)
        info = {"dt": dt, "reinjected": reinject}
    info["stats"] = dict(sorted(bundle.stats.items()))
    results = run_robot(bundle, dt, noise_cfg.noise(), filters, settings.p0)
    return results, ("x", "y", "th"), info


def _manifest(command: str, settings: RunSettings, extra: dict) -> dict:
    cfg = asdict(settings)
    cfg["p0"] = list(settings.p0)
    cfg["filters"] = list(settings.filters)
    return {"command": command, "version": __version__, "settings": cfg, **extra}


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_trajectory(path: Path, result, names) -> None:
    header = ["t"] + [f"{n}_true" for n in names] + list(names) + [f"var_{n}" for n in names]
    lines = [",".join(header)]
    for k in range(len(result.times)):
        row = [result.times[k], *result.truth[k], *result.means[k], *result.variances[k]]
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def cmd_filter(args, out) -> int:
    settings = settings_from(args)
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    try:
        results, names, info = _run(settings)
    except FilterDivergence as exc:
        _write_json(dest / "manifest.json", _manifest("filter", settings, {"diverged_at_step": exc.step}))
        print(f"error: filter diverged at step {exc.step}: {exc}", file=sys.stderr)
        return 3
    _write_json(dest / "manifest.json", _manifest("filter", settings, info))
    summary = {"filters": summarize(results), "regime": settings.regime, "vphi_limit": settings.vphi_limit}
    _write_json(dest / "summary.json", summary)
    for name, res in results.items():
        _write_trajectory(dest / f"trajectory_{name}.csv", res, names)
    for name, metrics in summary["filters"].items():
        print(f"{name}\tposition {metrics['mean_position_error']:.6f} m\tyaw {metrics['mean_yaw_error']:.6f} rad", file=out)
    return 0


def parse_values(text: str) -> list[float]:
    """``a:b:step`` (inclusive of ``b``) or a comma-separated list; constants like ``pi/12`` allowed."""
    if ":" in text:
        parts = [_number(p) for p in text.split(":")]
        if len(parts) != 3 or not parts[2] > 0 or parts[1] < parts[0]:
            raise ValueError(f"bad range {text!r}; expected a:b:step with step > 0 and b >= a")
        a, b, step = parts
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return [a + i * step for i in range(count)]
    return [_number(p) for p in text.split(",") if p.strip()]


def _sweep_job(job):
    settings, = job
    try:
        results, _, _ = _run(settings)
    except FilterDivergence as exc:
        return ("diverged", exc.step, str(exc))
    return ("ok", summarize(results))


SWEEP_PARAMS = ("vphi_limit",)


def cmd_sweep(args, out) -> int:
    settings = settings_from(args)
    if args.param not in SWEEP_PARAMS:
        raise ValueError(f"unsupported sweep parameter {args.param!r}; choose from {SWEEP_PARAMS}")
    if args.trials < 1:
        raise ValueError("trials must be >= 1")
    values = parse_values(args.values)
    if settings.regime == "gaussian":
        settings.regime = "nongaussian"
    jobs = [
        (replace(settings, **{args.param: v}, seed=settings.seed + t),)
        for v in values
        for t in range(args.trials)
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            outcomes = list(pool.map(_sweep_job, jobs))
    else:
        outcomes = [_sweep_job(j) for j in jobs]
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    extra = {"param": args.param, "values": values, "trials": args.trials}
    for (job,), res in zip(jobs, outcomes):
        if res[0] == "diverged":
            extra["diverged"] = {"value": getattr(job, args.param), "seed": job.seed, "step": res[1]}
            _write_json(dest / "manifest.json", _manifest("sweep", settings, extra))
            print(f"error: filter diverged at step {res[1]} ({args.param}={getattr(job, args.param)!r}, seed {job.seed}): {res[2]}", file=sys.stderr)
            return 3
    _write_json(dest / "manifest.json", _manifest("sweep", settings, extra))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["param_value", "filter", "metric", "mean", "stddev", "trials"])
    for i, v in enumerate(values):
        chunk = [res[1] for res in outcomes[i * args.trials : (i + 1) * args.trials]]
        for name in sorted(chunk[0]):
            for metric, key in (("position_error", "mean_position_error"), ("yaw_error", "mean_yaw_error")):
                xs = np.array([c[name][key] for c in chunk])
                sd = float(np.std(xs, ddof=1)) if xs.size > 1 else 0.0
                writer.writerow([repr(float(v)), name, metric, repr(float(xs.mean())), repr(sd), args.trials])
    (dest / "sweep.csv").write_text(buf.getvalue())
    out.write(buf.getvalue())
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _run_options(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--dataset", help="dataset directory in the MRCLAM layout")
    src.add_argument("--synthetic", help=f"synthetic scenario: {', '.join(sorted(SCENARIOS))} or linear")
    p.add_argument("--config", help="INI file with default settings")
    p.add_argument("--robot", type=int, help="robot number for the dataset file names")
    p.add_argument("--segment-start", type=float, help="segment start, seconds after the first odometry sample")
    p.add_argument("--segment-end", type=float, help="segment end, seconds after the first odometry sample")
    p.add_argument("--filters", help="comma-separated subset of ekf,ukf,mkf")
    p.add_argument("--regime", choices=("gaussian", "nongaussian"))
    p.add_argument("--vphi-limit", type=_number, help="half-width of the uniform bearing noise [rad]")
    p.add_argument("--reinject", action=argparse.BooleanOptionalAction, default=None,
                   help="recompute dataset measurements from ground truth and add noise")
    p.add_argument("--dt", type=float, help="sampling time [s]")
    p.add_argument("--n-steps", type=int, help="synthetic run length")
    p.add_argument("--measure-every", type=int, help="synthetic observation period in steps")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mkf", description="Moment-based Kalman filtering experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("moment", help="compare moment estimates of expressions")
    m.add_argument("--expr", action="append", required=True, help="expression; may be repeated")
    m.add_argument("--rv", required=True, help=f"random-vector JSON file or one of {', '.join(BUILTIN_RV)}")
    m.add_argument("--mc", type=int, default=0, help="add a Monte Carlo column with this many samples")
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_moment)

    f = sub.add_parser("filter", help="run filters over a dataset or synthetic scenario")
    _run_options(f)
    f.set_defaults(func=cmd_filter)

    s = sub.add_parser("sweep", help="repeat filter runs over a parameter grid")
    _run_options(s)
    s.add_argument("--param", default="vphi_limit")
    s.add_argument("--values", required=True, help="a:b:step or comma-separated list")
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None, out=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    out = out or sys.stdout
    try:
        return args.func(args, out)
    except (ValueError, FileNotFoundError, ExprSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
