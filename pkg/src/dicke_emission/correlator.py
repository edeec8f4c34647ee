"""Spatio-temporal photon correlation between the two cameras.

Pairs are ordered: the first photon is a camera-1 event at ``t1``, the
second a camera-2 event at ``t2``, ``tau = t2 - t1``. In one-sided mode
the delay axis covers ``[0, n_tau * width)``; in symmetric mode it is
centered on zero.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptEventError, DomainError

TWO_PI = 2.0 * math.pi

SPATIAL_BINS = 96
TAU_BIN_PS = 2500
TAU_BINS = 38


@dataclass(frozen=True)
class CorrelatorSettings:
    spatial_bins: int = SPATIAL_BINS
    tau_bin_ps: int = TAU_BIN_PS
    tau_bins: int = TAU_BINS
    symmetric: bool = False
    columns: int = 1000
    phase_low: float = -2.0 * math.pi
    phase_span: float = 4.0 * math.pi

    def __post_init__(self):
        if self.spatial_bins < 1 or self.tau_bins < 1 or self.tau_bin_ps < 1:
            raise DomainError("bin counts and widths must be positive")
        if self.symmetric and self.tau_bins % 2:
            raise DomainError("symmetric mode needs an even number of delay bins")

    @property
    def tau_origin_ps(self) -> int:
        return -(self.tau_bins // 2) * self.tau_bin_ps if self.symmetric else 0

    @property
    def window_ps(self) -> int:
        return self.tau_bins * self.tau_bin_ps

    def tau_centers_ns(self) -> np.ndarray:
        return (self.tau_origin_ps + (np.arange(self.tau_bins) + 0.5) * self.tau_bin_ps) / 1000.0

    def zero_tau_bin(self) -> int:
        return self.tau_bins // 2 if self.symmetric else 0

    def delta_axis(self) -> np.ndarray:
        """Window phase at the center of each spatial bin (mean over its columns)."""
        cols = np.arange(self.columns)
        bins = cols * self.spatial_bins // self.columns
        mean_col = np.bincount(bins, weights=cols, minlength=self.spatial_bins) / np.bincount(
            bins, minlength=self.spatial_bins
        )
        return self.phase_low + (mean_col + 0.5) * self.phase_span / self.columns


@dataclass
class CorrelationHistogram:
    g2_counts: np.ndarray  # int64 [bin1, bin2, tau]
    intensity: np.ndarray  # int64 [camera-1, bin]
    settings: CorrelatorSettings = field(default_factory=CorrelatorSettings)

    @property
    def total_pairs(self) -> int:
        return int(self.g2_counts.sum())

    @classmethod
    def empty(cls, settings: CorrelatorSettings | None = None):
        st = settings or CorrelatorSettings()
        return cls(
            np.zeros((st.spatial_bins, st.spatial_bins, st.tau_bins), dtype=np.int64),
            np.zeros((2, st.spatial_bins), dtype=np.int64),
            st,
        )

    def __add__(self, other: "CorrelationHistogram") -> "CorrelationHistogram":
        if self.settings != other.settings:
            raise DomainError("cannot merge histograms with different binning")
        return CorrelationHistogram(self.g2_counts + other.g2_counts,
                                    self.intensity + other.intensity, self.settings)

    def __eq__(self, other):
        if not isinstance(other, CorrelationHistogram):
            return NotImplemented
        return (self.settings == other.settings
                and np.array_equal(self.g2_counts, other.g2_counts)
                and np.array_equal(self.intensity, other.intensity))


def rebin_columns(events, spatial_bins: int = SPATIAL_BINS, columns: int = 1000):
    """Collapse camera frames to ``1 x spatial_bins``; returns ``(camera, timestamp, bin)``."""
    x = np.asarray(events["x"], dtype=np.int64)
    if x.size and (x.min() < 0 or x.max() >= columns):
        bad = int(np.flatnonzero((x < 0) | (x >= columns))[0])
        raise CorruptEventError(f"event {bad} has column {x[bad]} outside [0, {columns})")
    bins = x * spatial_bins // columns
    return (np.asarray(events["camera"]), np.asarray(events["timestamp"], dtype=np.int64), bins)


def _pair_counts(t1, b1, t2, b2, st: CorrelatorSettings, chunk: int = 1 << 16) -> np.ndarray:
    """Histogram all (camera-1, camera-2) pairs inside the delay window.

    ``t2`` must be sorted. For each first photon the matching second
    photons form a contiguous run of ``t2`` found by binary search.
    """
    nb, nt, w = st.spatial_bins, st.tau_bins, st.tau_bin_ps
    flat = np.zeros(nb * nb * nt, dtype=np.int64)
    if t1.size == 0 or t2.size == 0:
        return flat.reshape(nb, nb, nt)
    origin = st.tau_origin_ps
    for s in range(0, t1.size, chunk):
        tt = t1[s:s + chunk]
        bb = b1[s:s + chunk]
        lo = np.searchsorted(t2, tt + origin, side="left")
        hi = np.searchsorted(t2, tt + origin + st.window_ps, side="left")
        cnt = hi - lo
        total = int(cnt.sum())
        if total == 0:
            continue
        first = np.repeat(np.arange(tt.size), cnt)
        # index of each second photon: lo of its run plus its offset within the run
        offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        j = np.repeat(lo, cnt) + offs
        tau_bin = (t2[j] - tt[first] - origin) // w
        idx = (bb[first] * nb + b2[j]) * nt + tau_bin
        flat += np.bincount(idx, minlength=flat.size)
    return flat.reshape(nb, nb, nt)


def _split_cameras(events, st: CorrelatorSettings, check_sorted: bool = True):
    cam, ts, bins = rebin_columns(events, st.spatial_bins, st.columns)
    if check_sorted and ts.size and np.any(np.diff(ts) < 0):
        raise DomainError("event stream must be sorted by timestamp")
    m1 = cam == 1
    m2 = cam == 2
    return ts[m1], bins[m1], ts[m2], bins[m2]


def _intensity(b1, b2, st):
    return np.stack([
        np.bincount(b1, minlength=st.spatial_bins),
        np.bincount(b2, minlength=st.spatial_bins),
    ]).astype(np.int64)


def accumulate_pairs(events, settings: CorrelatorSettings | None = None,
                     shards: int = 1, workers: int = 1) -> CorrelationHistogram:
    """Single pass over a time-sorted stream into a correlation histogram.

    With ``shards > 1`` the first-photon range is split into contiguous
    pieces whose partner search still spans the whole camera-2 stream, so
    cross-shard pairs are kept and the sum equals the sequential result.
    """
    st = settings or CorrelatorSettings()
    t1, b1, t2, b2 = _split_cameras(events, st)
    edges = np.linspace(0, t1.size, max(1, shards) + 1).astype(np.int64)
    pieces = [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]

    def work(piece):
        a, b = piece
        return _pair_counts(t1[a:b], b1[a:b], t2, b2, st)

    if workers > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, pieces))
    else:
        parts = [work(p) for p in pieces]
    counts = np.zeros((st.spatial_bins, st.spatial_bins, st.tau_bins), dtype=np.int64)
    for p in parts:
        counts += p
    return CorrelationHistogram(counts, _intensity(b1, b2, st), st)


def cross_pairs(events_a, events_b, settings: CorrelatorSettings | None = None) -> CorrelationHistogram:
    """Pairs with one photon from each stream (intensities left at zero)."""
    st = settings or CorrelatorSettings()
    a1, ab1, a2, ab2 = _split_cameras(events_a, st)
    c1, cb1, c2, cb2 = _split_cameras(events_b, st)
    counts = _pair_counts(a1, ab1, c2, cb2, st) + _pair_counts(c1, cb1, a2, ab2, st)
    return CorrelationHistogram(counts, np.zeros((2, st.spatial_bins), dtype=np.int64), st)


@dataclass
class NormalizedG2:
    values: np.ndarray  # NaN marks undefined bins
    std_errors: np.ndarray
    delta_axis: np.ndarray
    tau_axis: np.ndarray  # bin centers, ns
    scale: float
    settings: CorrelatorSettings

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)

    def nearest_bin(self, delta: float) -> int:
        lo = self.settings.phase_low
        if not lo <= delta <= lo + self.settings.phase_span:
            raise DomainError(f"phase {delta:.4f} outside the measured window")
        return int(np.argmin(np.abs(self.delta_axis - delta)))


def large_tau_bins(st: CorrelatorSettings) -> np.ndarray:
    """Indices of the quarter of delay bins farthest from zero delay."""
    n = max(1, st.tau_bins // 4)
    dist = np.abs(st.tau_centers_ns())
    return np.sort(np.argsort(-dist, kind="stable")[:n])


def normalize(h: CorrelationHistogram) -> NormalizedG2:
    """Divide by the singles product, then fix the large-delay level to one."""
    st = h.settings
    if h.total_pairs <= 0:
        raise DomainError("histogram holds no pairs")
    i1 = h.intensity[0].astype(float)
    i2 = h.intensity[1].astype(float)
    denom = np.outer(i1, i2)[:, :, None] * np.ones(st.tau_bins)
    g = h.g2_counts.astype(float)
    ok = denom > 0
    raw = np.full(g.shape, np.nan)
    raw[ok] = g[ok] / denom[ok]
    tail = raw[:, :, large_tau_bins(st)]
    tail_mean = np.nanmean(tail) if np.isfinite(tail).any() else np.nan
    if not tail_mean > 0:
        raise DomainError("no counts at large delay to normalize against")
    scale = 1.0 / tail_mean
    values = raw * scale
    inv1 = np.where(i1 > 0, 1.0 / np.where(i1 > 0, i1, 1.0), 0.0)
    inv2 = np.where(i2 > 0, 1.0 / np.where(i2 > 0, i2, 1.0), 0.0)
    rel_int = (inv1[:, None] + inv2[None, :])[:, :, None]
    err = np.full(g.shape, np.nan)
    per_count = np.zeros(g.shape)
    per_count[ok] = scale / denom[ok]
    var = per_count**2 * (np.maximum(g, 1.0) + g**2 * rel_int)
    err[ok] = np.sqrt(var[ok])
    return NormalizedG2(values, err, st.delta_axis(), st.tau_centers_ns(), scale, st)


@dataclass
class Profile:
    x: np.ndarray
    value: np.ndarray
    error: np.ndarray
    bin: int

    def defined(self):
        m = np.isfinite(self.value)
        return Profile(self.x[m], self.value[m], self.error[m], self.bin)


def slice_tau0(n: NormalizedG2, delta1: float) -> Profile:
    """Zero-delay cut versus the second-photon phase for the first-photon bin nearest ``delta1``."""
    b1 = n.nearest_bin(delta1)
    k = n.settings.zero_tau_bin()
    return Profile(n.delta_axis.copy(), n.values[b1, :, k].copy(), n.std_errors[b1, :, k].copy(), b1)


def autocorrelation_curve(n: NormalizedG2, delta: float) -> Profile:
    """``g2(delta, delta, tau)`` versus delay (ns)."""
    b = n.nearest_bin(delta)
    return Profile(n.tau_axis.copy(), n.values[b, b, :].copy(), n.std_errors[b, b, :].copy(), b)


def equivalent_bins(st: CorrelatorSettings, delta: float, tol: float | None = None) -> np.ndarray:
    """Spatial bins whose center phase equals ``delta`` modulo ``2 pi`` (nearest per period)."""
    axis = st.delta_axis()
    width = st.phase_span / st.spatial_bins
    tol = 0.5 * width if tol is None else tol
    diff = np.angle(np.exp(1j * (axis - delta)))
    return np.flatnonzero(np.abs(diff) <= tol + 1e-12)


def pooled_g2(h: CorrelationHistogram, n: NormalizedG2, bins1, bins2, tau_bins) -> tuple:
    """Combine counts of equivalent cells into one normalized value and error."""
    bins1 = np.atleast_1d(bins1)
    bins2 = np.atleast_1d(bins2)
    tau_bins = np.atleast_1d(tau_bins)
    g = h.g2_counts[np.ix_(bins1, bins2, tau_bins)].sum()
    denom = (np.outer(h.intensity[0, bins1], h.intensity[1, bins2]).sum()) * tau_bins.size
    if denom == 0:
        return math.nan, math.nan
    value = n.scale * g / denom
    return float(value), float(n.scale * math.sqrt(max(g, 1)) / denom)
