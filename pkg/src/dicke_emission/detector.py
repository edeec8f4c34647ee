"""Camera click synthesis: collection, beam splitter, jitter, dark counts, dead time."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigurationError, DomainError

TWO_PI = 2.0 * math.pi
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

EVENT_DTYPE = np.dtype(
    [
        ("camera", "<u1"),
        ("reserved0", "<u1"),
        ("x", "<u2"),
        ("y", "<u2"),
        ("reserved1", "<u2"),
        ("timestamp", "<u8"),
    ]
)
assert EVENT_DTYPE.itemsize == 16


@dataclass(frozen=True)
class DetectorConfig:
    dead_time_ns: float = 600.0
    timing_jitter_fwhm_ps: float = 50.0
    collection_efficiency: float = 0.025
    dark_count_rate: float = 0.0  # per camera, 1/s
    fov_phase_span: float = 4.0 * math.pi
    fov_phase_center: float = 0.0
    splitter_ratio: float = 0.5  # probability of routing to camera 1
    columns: int = 1000
    rows: int = 1000

    def __post_init__(self):
        if not 0 < self.collection_efficiency <= 1:
            raise ConfigurationError("collection efficiency must be in (0, 1]",
                                     field="collection_efficiency")
        if not self.dead_time_ns >= 0:
            raise ConfigurationError("dead time must be >= 0", field="dead_time_ns")
        if not self.timing_jitter_fwhm_ps >= 0:
            raise ConfigurationError("jitter must be >= 0", field="timing_jitter_fwhm_ps")
        if not self.dark_count_rate >= 0:
            raise ConfigurationError("dark count rate must be >= 0", field="dark_count_rate")
        if not 0 < self.splitter_ratio < 1:
            raise ConfigurationError("splitter ratio must be in (0, 1)", field="splitter_ratio")
        if not self.fov_phase_span > 0:
            raise ConfigurationError("field-of-view phase span must be positive",
                                     field="fov_phase_span")
        if not (0 < self.columns <= 65535 and 0 < self.rows <= 65535):
            raise ConfigurationError("columns and rows must fit in 16 bits", field="columns")

    @property
    def phase_low(self) -> float:
        return self.fov_phase_center - 0.5 * self.fov_phase_span

    @property
    def dead_time_ps(self) -> int:
        return int(round(self.dead_time_ns * 1000.0))


def delta_to_column(delta, cfg: DetectorConfig):
    """Column hit by a photon of window phase ``delta``; -1 outside the field of view."""
    delta = np.asarray(delta, dtype=float)
    pos = (delta - cfg.phase_low) / cfg.fov_phase_span * cfg.columns
    col = np.floor(pos)
    inside = (col >= 0) & (col < cfg.columns) & np.isfinite(pos)
    out = np.where(inside, col, -1).astype(np.int64)
    return out if out.ndim else int(out)


def column_to_delta(column, cfg: DetectorConfig):
    """Window phase at the center of ``column``."""
    column = np.asarray(column, dtype=float)
    out = cfg.phase_low + (column + 0.5) * cfg.fov_phase_span / cfg.columns
    return out if out.ndim else float(out)


def max_preimages(cfg: DetectorConfig) -> int:
    """Largest number of window phases sharing one value modulo ``2 pi``."""
    periods = cfg.fov_phase_span / TWO_PI
    whole = math.floor(periods)
    return whole if math.isclose(periods, whole, rel_tol=0, abs_tol=1e-12) else whole + 1


def lift_to_window(delta, u, cfg: DetectorConfig):
    """Map emission phases in ``[0, 2 pi)`` onto window phases.

    A photon direction is uniform along the unwrapped phase axis, so a
    phase with ``n`` preimages in the window is seen ``n / max_preimages``
    of the time; ``u`` (uniform on ``[0, 1)``) selects the preimage and
    decides acceptance in one draw. Rejected photons get NaN.
    """
    delta = np.asarray(delta, dtype=float)
    lo = cfg.phase_low
    hi = lo + cfg.fov_phase_span
    k_min = np.ceil((lo - delta) / TWO_PI)
    k_max = np.ceil((hi - delta) / TWO_PI) - 1.0
    n_pre = k_max - k_min + 1.0
    j = np.floor(np.asarray(u) * max_preimages(cfg))
    lifted = delta + TWO_PI * (k_min + j)
    ok = (j < n_pre) & (lifted >= lo) & (lifted < hi)
    return np.where(ok, lifted, np.nan)


@numba.njit(cache=True)
def _dead_time_mask(timestamps, dead_ps):
    keep = np.zeros(timestamps.shape[0], dtype=np.bool_)
    last = 0
    have = False
    for i in range(timestamps.shape[0]):
        t = timestamps[i]
        if not have or t - last >= dead_ps:
            keep[i] = True
            last = t
            have = True
    return keep


def apply_dead_time(timestamps, dead_time_ps: int) -> np.ndarray:
    """Boolean mask of clicks a non-paralyzable detector records.

    ``timestamps`` must belong to one camera and be sorted.
    """
    ts = np.ascontiguousarray(timestamps, dtype=np.int64)
    if ts.size and np.any(np.diff(ts) < 0):
        raise DomainError("timestamps must be sorted for dead-time filtering")
    return _dead_time_mask(ts, np.int64(dead_time_ps))


def make_events(camera, timestamp, x, y) -> np.ndarray:
    ev = np.zeros(len(timestamp), dtype=EVENT_DTYPE)
    ev["camera"] = camera
    ev["x"] = x
    ev["y"] = y
    ev["timestamp"] = timestamp
    return ev


def sort_events(events: np.ndarray) -> np.ndarray:
    """Order by timestamp, then camera, then position (fully deterministic)."""
    order = np.lexsort((events["y"], events["x"], events["camera"], events["timestamp"]))
    return events[order]


CHUNK = 1 << 22


def synthesize_clicks(times_ps, deltas, cfg: DetectorConfig, rng: np.random.Generator,
                      duration_ps: int | None = None) -> np.ndarray:
    """Turn an emission stream into recorded camera events.

    ``times_ps`` are integer emission times in picoseconds (sorted) and
    ``deltas`` the emission phases in ``[0, 2 pi)``. Dark counts are drawn
    over ``[0, duration_ps)``, defaulting to just past the last emission.
    Emissions are processed in fixed-size chunks to bound memory; the
    random draws per chunk follow a fixed order, so output is reproducible.
    """
    times_ps = np.asarray(times_ps, dtype=np.int64)
    deltas = np.asarray(deltas, dtype=float)
    if times_ps.shape != deltas.shape:
        raise DomainError("times and phases must have equal length")
    if times_ps.size and np.any(np.diff(times_ps) < 0):
        raise DomainError("emission times must be sorted ascending")
    n = times_ps.size
    if duration_ps is None:
        duration_ps = int(times_ps[-1]) + 1 if n else 0
    sigma = cfg.timing_jitter_fwhm_ps / FWHM_PER_SIGMA

    kept = {1: [], 2: []}
    for start in range(0, n, CHUNK):
        t = times_ps[start:start + CHUNK]
        m = t.size
        u_keep = rng.random(m)
        u_lift = rng.random(m)
        u_route = rng.random(m)
        jitter = rng.standard_normal(m)
        rows = rng.integers(0, cfg.rows, m)

        lifted = lift_to_window(deltas[start:start + CHUNK], u_lift, cfg)
        keep = (u_keep < cfg.collection_efficiency) & np.isfinite(lifted)
        stamps = t + np.rint(jitter * sigma).astype(np.int64)
        np.maximum(stamps, 0, out=stamps)
        cols = delta_to_column(np.where(keep, lifted, cfg.phase_low), cfg)
        to_first = u_route < cfg.splitter_ratio
        for cam, sel in ((1, keep & to_first), (2, keep & ~to_first)):
            kept[cam].append((stamps[sel], cols[sel].astype(np.uint16), rows[sel].astype(np.uint16)))

    parts = []
    for cam in (1, 2):
        n_dark = rng.poisson(cfg.dark_count_rate * duration_ps * 1e-12) if duration_ps > 0 else 0
        dark_t = rng.integers(0, max(duration_ps, 1), n_dark)
        dark_x = rng.integers(0, cfg.columns, n_dark).astype(np.uint16)
        dark_y = rng.integers(0, cfg.rows, n_dark).astype(np.uint16)
        t = np.concatenate([k[0] for k in kept[cam]] + [dark_t])
        x = np.concatenate([k[1] for k in kept[cam]] + [dark_x])
        y = np.concatenate([k[2] for k in kept[cam]] + [dark_y])
        kept[cam] = None
        order = np.lexsort((y, x, t))
        t, x, y = t[order], x[order], y[order]
        del order
        alive = apply_dead_time(t, cfg.dead_time_ps)
        parts.append(make_events(cam, t[alive], x[alive], y[alive]))
        del t, x, y, alive
    events = np.concatenate(parts)
    del parts
    # each camera is already sorted by (time, x, y): a stable sort on time
    # yields the (time, camera, x, y) order of sort_events
    return events[np.argsort(events["timestamp"], kind="stable")]
