"""Command-line interface: ``simulate``, ``correlate``, ``fit``, ``report``, ``selftest``.

Exit status: 0 success, 1 failed self-test, 2 configuration error,
3 data error (unreadable or inconsistent input, fit failure).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, pipeline
from .correlator import normalize
from .config import RunConfig, dump_config, load_config
from .errors import (
    ArchiveError,
    ConfigurationError,
    CorruptEventError,
    DomainError,
    EventFileError,
    FitError,
)
from .eventfile import export_csv, parse_events

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("drive", {})["seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        overrides.setdefault("drive", {})["duration_s"] = args.duration
    if getattr(args, "trajectories", None) is not None:
        overrides.setdefault("drive", {})["trajectories"] = args.trajectories
    return cfg.replace(**overrides) if overrides else cfg


def _log(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    events, summary = pipeline.simulate_events(cfg, workers=args.threads)
    data = pipeline.events_to_bytes(events)
    Path(args.out).write_bytes(data)
    if args.csv:
        export_csv(events, args.csv)
    _log(args, f"simulated {summary.duration_s:.6g} s: {summary.emissions} emissions, "
               f"{summary.events_camera1} + {summary.events_camera2} events "
               f"({summary.mean_rate:.4g} /s) in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def cmd_correlate(args) -> int:
    cfg = _config(args)
    data = Path(args.events).read_bytes()
    events, _ = parse_events(data)
    hist = pipeline.correlate_events(events, cfg, workers=args.threads)
    meta = pipeline.archive_meta(cfg, pipeline.sha256(data))
    Path(args.out).write_bytes(pipeline.archive_bytes(hist, meta))
    cells = hist.g2_counts.size
    msg = f"{len(events)} events -> {hist.total_pairs} pairs, {hist.total_pairs / cells:.3g} per cell"
    if hist.total_pairs:
        msg += f", normalization scale {normalize(hist).scale:.4g}"
    _log(args, msg)
    return EXIT_OK


def _selected_bin(args, hist) -> int:
    if args.bin is not None:
        return args.bin
    delta = args.delta1 if args.delta1 is not None else args.delta1_pi * math.pi
    lo, span = hist.settings.phase_low, hist.settings.phase_span
    if not lo <= delta <= lo + span:
        raise DomainError(f"phase {delta:.4f} outside the measured window")
    return pipeline.bin_for_delta(hist, delta)


def cmd_fit(args) -> int:
    cfg = _config(args)
    data = Path(args.archive).read_bytes()
    hist, meta = pipeline.load_archive_bytes(data)
    if hist.total_pairs == 0:
        raise FitError("archive holds no pairs")
    report = pipeline.fit_report(hist, meta, cfg, _selected_bin(args, hist), pipeline.sha256(data))
    text = pipeline.report_json(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    _log(args, f"delta1 = {report['delta1_pi']:.4f} pi +- {report['uncertainty'] / math.pi:.4f} pi "
               f"(chi2/dof {report['chi2_reduced']:.3f})")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args)
    data = Path(args.archive).read_bytes()
    hist, meta = pipeline.load_archive_bytes(data)
    manifest = pipeline.write_report(hist, meta, cfg, args.out, pipeline.sha256(data),
                                     plot_script=args.plot_script)
    _log(args, f"wrote {len(manifest['datasets'])} datasets to {args.out}")
    return EXIT_OK


def _selftest_checks():
    from .geometry import calibrate_laser_angle, experiment_geometry
    from .model import ModelParams, fit_delta1, g2_ideal
    from .states import ANTISYMMETRIC, SYMMETRIC, emission_density
    from .trajectory import DriveParams, simulate_emissions

    def dicke_patterns():
        d = np.linspace(0, 2 * np.pi, 9)
        sym = emission_density(SYMMETRIC, d)
        anti = emission_density(ANTISYMMETRIC, d)
        return (np.allclose(sym, (1 + np.cos(d)) / (2 * np.pi))
                and np.allclose(anti, (1 - np.cos(d)) / (2 * np.pi)))

    def model_values():
        return (abs(g2_ideal(0, 0, 0.65) - 1.65**2 / 2.65**2) < 1e-12
                and abs(g2_ideal(0, math.pi, 0.65)) < 1e-15)

    def fit_recovers():
        p = ModelParams(0.65, 0.51, 0.51, 0.2)
        from .model import g2_extended

        x = np.linspace(-2 * np.pi, 2 * np.pi, 96, endpoint=False)
        y = g2_extended(1.0, x, p)
        r = fit_delta1(x, y, np.full_like(x, 0.01), p)
        return abs(r.delta1 - 1.0) < 1e-3

    def emission_rate():
        p = DriveParams.from_saturation(0.65)
        arr = simulate_emissions(p, 2e-4, np.random.default_rng(1))
        rate = arr.times.size / 2e-4
        return abs(rate / p.emission_rate() - 1) < 0.05

    def dwf_calibration():
        angle = calibrate_laser_angle(0.51)
        return 0 < angle < math.pi / 2 and np.linalg.norm(experiment_geometry(angle).separation) > 0

    return [
        ("dicke emission patterns", dicke_patterns),
        ("closed-form g2 values", model_values),
        ("phase fit on noiseless data", fit_recovers),
        ("steady-state emission rate", emission_rate),
        ("Debye-Waller calibration", dwf_calibration),
    ]


def cmd_selftest(args) -> int:
    failed = 0
    for name, check in _selftest_checks():
        try:
            ok = bool(check())
        except Exception as exc:  # report and continue
            ok = False
            name = f"{name} ({exc})"
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if failed == 0 else EXIT_SELFTEST


def cmd_config(args) -> int:
    sys.stdout.write(dump_config(_config(args)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration (defaults reproduce the experiment)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int, help="override drive.seed")
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="dicke-emission", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="quantum-jump simulation to an event file")
    s.add_argument("--duration", type=float, help="seconds per trajectory")
    s.add_argument("--trajectories", type=int)
    s.add_argument("--out", required=True, help="event file to write")
    s.add_argument("--csv", help="also export events as CSV")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("correlate", parents=[common], help="event file to correlation archive")
    c.add_argument("events")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_correlate)

    f = sub.add_parser("fit", parents=[common], help="fit the first-photon phase of one slice")
    f.add_argument("archive")
    g = f.add_mutually_exclusive_group(required=True)
    g.add_argument("--bin", type=int, help="first-photon spatial bin")
    g.add_argument("--delta1", type=float, help="first-photon phase, rad")
    g.add_argument("--delta1-pi", type=float, help="first-photon phase in units of pi")
    f.add_argument("--out", help="JSON report (default stdout)")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("report", parents=[common], help="plot-ready CSV files and a manifest")
    r.add_argument("archive")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--plot-script", action="store_true", help="also write a matplotlib script")
    r.set_defaults(func=cmd_report)

    t = sub.add_parser("selftest", help="fast internal consistency checks")
    t.set_defaults(func=cmd_selftest)

    k = sub.add_parser("config", parents=[common], help="print the effective configuration")
    k.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EventFileError, CorruptEventError, ArchiveError, DomainError, FitError,
            OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
