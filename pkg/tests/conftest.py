import numpy as np
import pytest

from dicke_emission.detector import make_events, sort_events


def brute_force_pairs(events, st):
    """All-pairs reference correlator: O(n1 * n2) over the full outer difference."""
    cam = events["camera"]
    t = events["timestamp"].astype(np.int64)
    b = events["x"].astype(np.int64) * st.spatial_bins // st.columns
    t1, b1 = t[cam == 1], b[cam == 1]
    t2, b2 = t[cam == 2], b[cam == 2]
    counts = np.zeros((st.spatial_bins, st.spatial_bins, st.tau_bins), dtype=np.int64)
    for s in range(0, t1.size, 512):
        tau = t2[None, :] - t1[s:s + 512, None]
        rel = tau - st.tau_origin_ps
        inside = (rel >= 0) & (rel < st.window_ps)
        i, j = np.nonzero(inside)
        np.add.at(counts, (b1[s + i], b2[j], rel[i, j] // st.tau_bin_ps), 1)
    return counts


def poisson_events(rate_per_camera, duration_ps, seed, columns=1000):
    """Independent uniform-column Poisson clicks on both cameras, time sorted."""
    rng = np.random.default_rng(seed)
    parts = []
    for cam in (1, 2):
        n = rng.poisson(rate_per_camera * duration_ps * 1e-12)
        parts.append(make_events(np.full(n, cam), np.sort(rng.integers(0, duration_ps, n)),
                                 rng.integers(0, columns, n), np.zeros(n)))
    return sort_events(np.concatenate(parts))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(criterion: int, ok: bool, detail: str):
        line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        return ok

    return record
