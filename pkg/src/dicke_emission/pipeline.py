"""End-to-end runs: simulate, correlate, fit and report.

Every function is deterministic given the configuration (including its
seed) and its inputs; worker counts only change wall-clock time.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, dump_config
from .correlator import (
    CorrelationHistogram,
    CorrelatorSettings,
    accumulate_pairs,
    autocorrelation_curve,
    equivalent_bins,
    normalize,
    slice_tau0,
)
from .detector import EVENT_DTYPE, synthesize_clicks
from .errors import ArchiveError, DomainError
from .eventfile import HEADER, MAGIC, VERSION, parse_events
from .model import FitResult, ModelParams, fit_delta1, g2_extended
from .trajectory import simulate_emissions

PS_PER_S = 10**12
ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


@dataclass
class SimulationSummary:
    emissions: int
    events_camera1: int
    events_camera2: int
    duration_s: float

    @property
    def mean_rate(self) -> float:
        if self.duration_s <= 0:
            return 0.0
        return (self.events_camera1 + self.events_camera2) / self.duration_s


def _seed_streams(cfg: RunConfig):
    root = np.random.SeedSequence(cfg.drive.seed)
    children = root.spawn(cfg.drive.trajectories + 1)
    return children[:-1], children[-1]


def simulate_emission_stream(cfg: RunConfig, workers: int = 1):
    """Concatenate independent trajectories back to back on one time axis.

    Trajectory ``i`` occupies ``[i * duration, (i + 1) * duration)``;
    times are integer picoseconds.
    """
    params = cfg.drive.build()
    duration = cfg.drive.duration_s
    duration_ps = int(round(duration * PS_PER_S))
    traj_seeds, _ = _seed_streams(cfg)
    if duration_ps == 0:
        return np.empty(0, np.int64), np.empty(0), 0

    def one(i):
        rng = np.random.Generator(np.random.PCG64(traj_seeds[i]))
        arr = simulate_emissions(params, duration, rng)
        t = np.rint(arr.times * PS_PER_S).astype(np.int64) + i * duration_ps
        return t, arr.deltas

    idx = range(cfg.drive.trajectories)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, idx))
    else:
        parts = [one(i) for i in idx]
    times = np.concatenate([p[0] for p in parts])
    for p in parts:
        p[0].resize(0, refcheck=False)
    deltas = np.concatenate([p[1] for p in parts])
    del parts
    return times, deltas, duration_ps * cfg.drive.trajectories


def simulate_events(cfg: RunConfig, workers: int = 1):
    """Emission stream through the detector model; returns ``(events, summary)``."""
    times, deltas, total_ps = simulate_emission_stream(cfg, workers)
    _, det_seed = _seed_streams(cfg)
    rng = np.random.Generator(np.random.PCG64(det_seed))
    n_emitted = int(times.size)
    events = synthesize_clicks(times, deltas, cfg.detector.build(), rng, duration_ps=total_ps)
    del times, deltas
    summary = SimulationSummary(
        emissions=n_emitted,
        events_camera1=int(np.count_nonzero(events["camera"] == 1)),
        events_camera2=int(np.count_nonzero(events["camera"] == 2)),
        duration_s=total_ps / PS_PER_S,
    )
    return events, summary


def events_to_bytes(events: np.ndarray, run_start_ns: int = 0) -> bytes:
    events = np.ascontiguousarray(events, dtype=EVENT_DTYPE)
    return HEADER.pack(MAGIC, VERSION, len(events), run_start_ns) + events.tobytes()


# ---------------------------------------------------------------------------
# correlate
# ---------------------------------------------------------------------------


def correlator_settings(cfg: RunConfig) -> CorrelatorSettings:
    return cfg.correlator.build(cfg.detector.build())


def correlate_events(events: np.ndarray, cfg: RunConfig, workers: int = 1) -> CorrelationHistogram:
    return accumulate_pairs(events, correlator_settings(cfg), shards=cfg.correlator.shards,
                            workers=workers)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def archive_bytes(hist: CorrelationHistogram, meta: dict) -> bytes:
    """Zip archive with fixed member timestamps so identical inputs give identical bytes."""
    meta = dict(meta)
    meta["settings"] = asdict(hist.settings)
    meta["total_pairs"] = hist.total_pairs
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, data in (
            ("g2_counts.npy", _npy_bytes(hist.g2_counts)),
            ("intensity.npy", _npy_bytes(hist.intensity)),
            ("meta.json", json.dumps(meta, sort_keys=True, indent=1).encode()),
        ):
            info = zipfile.ZipInfo(name, date_time=ZIP_DATE)
            info.external_attr = 0o644 << 16
            zf.writestr(info, data)
    return buf.getvalue()


def archive_meta(cfg: RunConfig, input_hash: str) -> dict:
    return {
        "format": "dicke-emission-histogram",
        "version": __version__,
        "config_hash": cfg.hash(),
        "config": dump_config(cfg),
        "seed": cfg.drive.seed,
        "trajectories": cfg.drive.trajectories,
        "input_sha256": input_hash,
    }


def load_archive_bytes(data: bytes):
    try:
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            counts = np.load(io.BytesIO(zf.read("g2_counts.npy")), allow_pickle=False)
            intensity = np.load(io.BytesIO(zf.read("intensity.npy")), allow_pickle=False)
            meta = json.loads(zf.read("meta.json"))
    except (zipfile.BadZipFile, KeyError, ValueError, OSError) as exc:
        raise ArchiveError(f"cannot read histogram archive: {exc}") from exc
    try:
        settings = CorrelatorSettings(**meta["settings"])
    except (KeyError, TypeError) as exc:
        raise ArchiveError(f"archive metadata lacks binning settings: {exc}") from exc
    shape = (settings.spatial_bins, settings.spatial_bins, settings.tau_bins)
    if counts.shape != shape or intensity.shape != (2, settings.spatial_bins):
        raise ArchiveError("archive arrays do not match their binning metadata")
    return CorrelationHistogram(counts.astype(np.int64), intensity.astype(np.int64), settings), meta


def load_archive(path):
    return load_archive_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# fit and report
# ---------------------------------------------------------------------------


def fit_bin(hist: CorrelationHistogram, delta1_bin: int, params: ModelParams,
            fit_offset: bool = False, statistic: str = "poisson",
            pool_periods: bool = False) -> FitResult:
    """Fit the zero-delay slice of one first-photon bin.

    With ``pool_periods`` the pair counts of all first-photon bins sharing
    the selected bin's phase modulo ``2 pi`` are summed before fitting.
    """
    st = hist.settings
    if not 0 <= delta1_bin < st.spatial_bins:
        raise DomainError(f"bin {delta1_bin} outside [0, {st.spatial_bins})")
    n = normalize(hist)
    bins = pooled_bins(st, delta1_bin) if pool_periods else np.array([delta1_bin])
    k = st.zero_tau_bin()
    counts = hist.g2_counts[bins, :, k].sum(axis=0).astype(float)
    denom = hist.intensity[0, bins].sum() * hist.intensity[1].astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        # normalized value of a single pair count in each cell of the slice
        per_count = np.where(denom > 0, n.scale / denom, np.nan)
    values = counts * per_count
    errors = np.sqrt(np.maximum(counts, 1.0)) * per_count
    return fit_delta1(n.delta_axis, values, errors, params, fit_offset=fit_offset,
                      statistic=statistic, value_per_count=per_count)


def pooled_bins(st: CorrelatorSettings, delta1_bin: int) -> np.ndarray:
    """Spatial bins at the same phase as ``delta1_bin`` modulo ``2 pi``."""
    axis = st.delta_axis()
    width = st.phase_span / st.spatial_bins
    return equivalent_bins(st, float(axis[delta1_bin]), 0.25 * width)


def bin_for_delta(hist: CorrelationHistogram, delta1: float) -> int:
    axis = hist.settings.delta_axis()
    return int(np.argmin(np.abs(axis - delta1)))


def fit_report(hist: CorrelationHistogram, meta: dict, cfg: RunConfig, delta1_bin: int,
               archive_hash: str) -> dict:
    res = fit_bin(hist, delta1_bin, cfg.fit.build(), cfg.fit.fit_offset, cfg.fit.statistic,
                  cfg.fit.pool_periods)
    axis = hist.settings.delta_axis()
    return {
        "delta1": res.delta1,
        "delta1_pi": res.delta1 / math.pi,
        "uncertainty": res.uncertainty,
        "chi2_reduced": res.chi2_reduced,
        "offset": res.offset,
        "offset_fitted": cfg.fit.fit_offset,
        "statistic": res.statistic,
        "n_points": res.n_points,
        "delta1_bin": delta1_bin,
        "pooled_bins": (pooled_bins(hist.settings, delta1_bin).tolist()
                        if cfg.fit.pool_periods else [delta1_bin]),
        "bin_center_delta": float(axis[delta1_bin]),
        "fixed": asdict(res.fixed),
        "provenance": {
            "archive_sha256": archive_hash,
            "archive_config_hash": meta.get("config_hash"),
            "fit_config_hash": cfg.hash(),
        },
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and not math.isfinite(v)) else repr(float(v))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


PLOT_SCRIPT = '''"""Plot the CSV files listed in manifest.json (requires matplotlib)."""
import csv, json, sys
from pathlib import Path
import matplotlib.pyplot as plt

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
manifest = json.loads((root / "manifest.json").read_text())

def load(name):
    with open(root / name) as fh:
        rows = list(csv.DictReader(fh))
    return rows

for ds in manifest["datasets"]:
    if ds["kind"] not in ("slice", "autocorrelation"):
        continue
    rows = [r for r in load(ds["file"]) if r["value"]]
    xkey = "delta2_pi" if ds["kind"] == "slice" else "tau_ns"
    x = [float(r[xkey]) for r in rows]
    plt.figure()
    plt.errorbar(x, [float(r["value"]) for r in rows],
                 yerr=[float(r["error"]) for r in rows], fmt="o", ms=3)
    if ds["kind"] == "slice":
        plt.plot([float(r[xkey]) for r in load(ds["file"])],
                 [float(r["model"]) for r in load(ds["file"])], "-")
    plt.xlabel(xkey)
    plt.ylabel("g2")
    plt.title(ds["file"])
    plt.savefig(root / (ds["file"].rsplit(".", 1)[0] + ".png"), dpi=120)
'''


def write_report(hist: CorrelationHistogram, meta: dict, cfg: RunConfig, out_dir,
                 archive_hash: str = "", plot_script: bool = False) -> dict:
    """Plot-ready CSV files plus a JSON manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets = []
    manifest = {
        "archive_sha256": archive_hash,
        "archive_config_hash": meta.get("config_hash"),
        "report_config_hash": cfg.hash(),
        "total_pairs": hist.total_pairs,
        "datasets": datasets,
    }
    if hist.total_pairs > 0:
        n = normalize(hist)
        params = cfg.fit.build()
        for d1_pi in cfg.fit.report_deltas_pi:
            d1 = d1_pi * math.pi
            prof = slice_tau0(n, d1)
            model = g2_extended(d1, prof.x, params)
            name = f"slice_delta1_{d1_pi:.2f}pi.csv"
            _write_csv(out / name, ["delta2", "delta2_pi", "value", "error", "model"],
                       zip(prof.x, prof.x / math.pi, prof.value, prof.error, model))
            datasets.append({"kind": "slice", "file": name, "delta1": d1,
                             "delta1_bin": prof.bin})
            name = f"map_delta1_{d1_pi:.2f}pi.csv"
            b1 = prof.bin
            rows = (
                (n.delta_axis[b2], n.tau_axis[k], n.values[b1, b2, k], n.std_errors[b1, b2, k])
                for b2 in range(n.delta_axis.size) for k in range(n.tau_axis.size)
            )
            _write_csv(out / name, ["delta2", "tau_ns", "value", "error"], rows)
            datasets.append({"kind": "map", "file": name, "delta1": d1, "delta1_bin": b1})
        for d_pi in cfg.fit.autocorr_deltas_pi:
            prof = autocorrelation_curve(n, d_pi * math.pi)
            name = f"autocorr_delta_{d_pi:.2f}pi.csv"
            _write_csv(out / name, ["tau_ns", "value", "error"], zip(prof.x, prof.value, prof.error))
            datasets.append({"kind": "autocorrelation", "file": name, "delta": d_pi * math.pi,
                             "bin": prof.bin})
    for ds in datasets:
        ds["sha256"] = sha256((out / ds["file"]).read_bytes())
    if plot_script:
        (out / "plot_report.py").write_text(PLOT_SCRIPT)
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# in-process composition
# ---------------------------------------------------------------------------


@dataclass
class EndToEnd:
    event_bytes: bytes
    archive_bytes: bytes
    fit_reports: dict  # delta1 bin -> JSON text


def run_end_to_end(cfg: RunConfig, fit_bins=(), workers: int = 1) -> EndToEnd:
    """Everything the ``simulate | correlate | fit`` chain produces, without files."""
    events, _ = simulate_events(cfg, workers)
    ev_bytes = events_to_bytes(events)
    events, _ = parse_events(ev_bytes)
    hist = correlate_events(events, cfg, workers)
    meta = archive_meta(cfg, sha256(ev_bytes))
    arc = archive_bytes(hist, meta)
    hist, meta = load_archive_bytes(arc)
    reports = {b: report_json(fit_report(hist, meta, cfg, b, sha256(arc))) for b in fit_bins}
    return EndToEnd(ev_bytes, arc, reports)
