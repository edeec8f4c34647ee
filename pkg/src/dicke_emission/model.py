"""Closed-form zero-delay correlation of two driven atoms and the phase fit."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, FitError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ModelParams:
    s: float = 0.65
    f1: float = 0.51
    f2: float = 0.51
    offset: float = 0.2

    def __post_init__(self):
        if not self.s > 0:
            raise DomainError("saturation must be positive")
        for name in ("f1", "f2"):
            f = getattr(self, name)
            if not 0 < f <= 1:
                raise DomainError(f"{name} must lie in (0, 1]")
            if not 1 + self.s - f > 0:
                raise DomainError(f"1 + s - {name} must be positive")
        if not self.offset >= 0:
            raise DomainError("offset must be >= 0")


def g2_ideal(delta1, delta2, s):
    """Zero-delay ``g2`` of two laser-driven two-level atoms."""
    d1 = np.asarray(delta1, dtype=float)
    d2 = np.asarray(delta2, dtype=float)
    den1 = 1.0 + s + np.cos(d1)
    den2 = 1.0 + s + np.cos(d2)
    for d, den in ((d1, den1), (d2, den2)):
        bad = den <= 0
        if np.any(bad):
            where = float(np.broadcast_to(d, bad.shape)[bad].flat[0])
            raise DomainError(f"singular denominator at delta = {where!r} for s = {s!r}")
    out = (1.0 + s) ** 2 * np.cos(0.5 * (d1 - d2)) ** 2 / (den1 * den2)
    return float(out) if out.ndim == 0 else out


def g2_extended(delta1, delta2, p: ModelParams):
    """Zero-delay ``g2`` with Debye-Waller contrast reduction and a constant offset."""
    d1 = np.asarray(delta1, dtype=float)
    d2 = np.asarray(delta2, dtype=float)
    s = p.s
    num = (1.0 + s) ** 2 * np.cos(0.5 * (d1 - d2)) ** 2 * p.f1 * p.f2
    out = num / ((1.0 + s + np.cos(d1) * p.f1) * (1.0 + s + np.cos(d2) * p.f2)) + p.offset
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FitResult:
    delta1: float
    uncertainty: float
    chi2_reduced: float
    offset: float
    n_points: int
    fixed: ModelParams
    statistic: str = "chi2"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fixed"] = asdict(self.fixed)
        return d


GRID_STEP = 0.005
STATISTICS = ("chi2", "poisson")


def _bare_model(grid, x, p: ModelParams):
    return g2_extended(grid[:, None], x[None, :], ModelParams(p.s, p.f1, p.f2, 0.0))


def _chi2_scan(model, y, sigma, p: ModelParams, fit_offset: bool):
    w = 1.0 / sigma**2
    if fit_offset:
        # best offset for each trial phase is a weighted mean residual
        offsets = ((y - model) * w).sum(axis=1) / w.sum()
    else:
        offsets = np.full(model.shape[0], p.offset)
    resid = y - model - offsets[:, None]
    return (resid**2 * w).sum(axis=1), offsets


def _deviance(mu, k):
    """Poisson deviance of counts ``k`` against expectations ``mu`` (row-wise)."""
    mu = np.maximum(mu, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(k > 0, k * np.log(np.where(k > 0, k, 1.0) / mu), 0.0)
    return 2.0 * (mu - k + log_term).sum(axis=-1)


def _poisson_scan(model, y, per_count, p: ModelParams, fit_offset: bool):
    k = y / per_count
    if fit_offset:
        # Newton iterations on d(deviance)/d(offset) = 0, one offset per trial phase
        floor = -model.min(axis=1) + 1e-9
        off = np.maximum(np.full(model.shape[0], max(p.offset, 0.0)), floor)
        inv_c = (1.0 / per_count).sum()
        for _ in range(50):
            m = model + off[:, None]
            grad = inv_c - (k / m).sum(axis=1)
            hess = (k / m**2).sum(axis=1)
            step = np.where(hess > 0, grad / np.where(hess > 0, hess, 1.0), 0.0)
            new = np.maximum(off - step, 0.5 * (off + floor))
            if np.max(np.abs(new - off)) < 1e-12:
                off = new
                break
            off = new
        offsets = off
    else:
        offsets = np.full(model.shape[0], p.offset)
    mu = (model + offsets[:, None]) / per_count
    return _deviance(mu, k), offsets


def fit_delta1(delta2, values, sigma, fixed: ModelParams, fit_offset: bool = False,
               statistic: str = "chi2", value_per_count=None) -> FitResult:
    """Fit the first-photon phase to a zero-delay profile.

    Dense grid scan over ``[0, 2 pi)`` with parabolic refinement; the
    uncertainty is half the width of the ``objective_min + 1`` interval.

    ``statistic="chi2"`` minimizes the weighted least-squares sum with the
    given ``sigma``. ``statistic="poisson"`` minimizes the Poisson deviance
    of the underlying pair counts, ``value / value_per_count``; it avoids
    the downward bias of data-weighted least squares at a few counts per
    point. ``sigma`` is still used for ``chi2_reduced``.
    """
    if statistic not in STATISTICS:
        raise DomainError(f"unknown fit statistic {statistic!r}")
    x = np.asarray(delta2, dtype=float)
    y = np.asarray(values, dtype=float)
    sig = np.asarray(sigma, dtype=float)
    per_count = (np.ones_like(y) if value_per_count is None
                 else np.broadcast_to(np.asarray(value_per_count, dtype=float), y.shape))
    if statistic == "poisson" and value_per_count is None:
        raise DomainError("the Poisson statistic needs the value of one count per point")
    ok = np.isfinite(x) & np.isfinite(y) & np.isfinite(sig) & np.isfinite(per_count)
    x, y, sig, per_count = x[ok], y[ok], sig[ok], per_count[ok]
    if x.size < 8:
        raise DomainError(f"need at least 8 defined points, got {x.size}")
    if np.any(sig <= 0):
        raise DomainError("all uncertainties must be positive")
    if statistic == "poisson" and (np.any(per_count <= 0) or np.any(y < 0)):
        raise DomainError("Poisson fit needs positive count scales and non-negative values")
    if np.ptp(y) == 0:
        raise FitError("profile is flat; phase is undetermined")

    def scan(grid):
        model = _bare_model(grid, x, fixed)
        if statistic == "poisson":
            return _poisson_scan(model, y, per_count, fixed, fit_offset)
        return _chi2_scan(model, y, sig, fixed, fit_offset)

    n_grid = int(math.ceil(TWO_PI / GRID_STEP))
    grid = np.arange(n_grid) * (TWO_PI / n_grid)
    obj, _ = scan(grid)
    if np.ptp(obj) < 1e-9 * max(1.0, obj.min()):
        raise FitError("objective is flat in the phase")
    i = int(np.argmin(obj))
    c_m, c_0, c_p = obj[(i - 1) % n_grid], obj[i], obj[(i + 1) % n_grid]
    h = grid[1] - grid[0]
    curv = c_m - 2 * c_0 + c_p
    shift = 0.5 * (c_m - c_p) / curv if curv > 0 else 0.0
    shift = float(np.clip(shift, -1.0, 1.0))
    best = (grid[i] + shift * h) % TWO_PI
    obj_best, off_best = scan(np.array([best]))
    obj_min = min(float(obj_best[0]), float(c_0))

    # walk outward from the minimum to the objective_min + 1 crossings
    level = obj_min + 1.0
    widths = []
    for direction in (1, -1):
        prev_t, prev_c = 0.0, obj_min
        width = math.pi
        for k in range(1, n_grid // 2 + 1):
            c = obj[(i + direction * k) % n_grid]
            t = k * h - direction * shift * h
            if c >= level:
                width = prev_t + (t - prev_t) * (level - prev_c) / (c - prev_c)
                break
            prev_t, prev_c = t, c
        widths.append(width)
    unc = 0.5 * (widths[0] + widths[1])
    dof = x.size - (2 if fit_offset else 1)
    resid = y - _bare_model(np.array([best]), x, fixed)[0] - off_best[0]
    chi2 = float(((resid / sig) ** 2).sum())
    return FitResult(
        delta1=float(best),
        uncertainty=float(unc),
        chi2_reduced=chi2 / max(dof, 1),
        offset=float(off_best[0]),
        n_points=int(x.size),
        fixed=fixed,
        statistic=statistic,
    )
