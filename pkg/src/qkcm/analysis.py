"""Time series containers, relaxation times and classical-vs-quantum comparisons."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotConvergedError, QKCMError


@dataclass
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.values.shape:
                raise ValueError("stderr must match values in shape")
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    def __len__(self):
        return self.times.shape[0]


def log_interp(t_new, times, values):
    """Linear interpolation in ``log t`` (plain linear where a time is 0)."""
    t_new = np.asarray(t_new, dtype=float)
    times = np.asarray(times, dtype=float)
    if times[0] > 0 and np.all(t_new > 0):
        return np.interp(np.log(t_new), np.log(times), values)
    out = np.interp(t_new, times, values)
    pos = times > 0
    if pos.sum() >= 2:
        sel = t_new >= times[pos][0]
        out[sel] = np.interp(np.log(t_new[sel]), np.log(times[pos]), np.asarray(values)[pos])
    return out


def relaxation_time(series: TimeSeries, stationary_value: float, band: float = 0.05) -> float:
    """Time after which the series stays within ``band * |v(0) - v_ss|`` of ``v_ss``.

    The exit point between the last out-of-band sample and its successor is
    located by linear interpolation of the deviation in log-time. A series that
    never leaves the band has relaxation time 0.
    """
    dev = np.abs(series.values - stationary_value)
    threshold = band * dev[0]
    if dev[-1] > threshold:
        raise NotConvergedError(float(dev[-1]), float(threshold))
    outside = np.nonzero(dev > threshold)[0]
    if outside.size == 0:
        return 0.0
    i = outside[-1]
    t0, t1 = series.times[i], series.times[i + 1]
    d0, d1 = dev[i], dev[i + 1]
    frac = (d0 - threshold) / (d0 - d1)
    if t0 > 0:
        return float(np.exp(np.log(t0) + frac * (np.log(t1) - np.log(t0))))
    return float(t0 + frac * (t1 - t0))


def log_slope(times, values, window_decades: float = 0.5) -> np.ndarray:
    """``|dv / d log10 t|`` by a least-squares line over ``+-window/2`` decades.

    Averaging over a window keeps Monte Carlo noise in ensemble means from
    dominating the derivative; with fewer than three points in a window the
    centred difference of :func:`numpy.gradient` is used.
    """
    logt = np.log10(np.asarray(times, dtype=float))
    v = np.asarray(values, dtype=float)
    if window_decades <= 0:
        return np.abs(np.gradient(v, logt))
    out = np.abs(np.gradient(v, logt))
    for i in range(logt.size):
        sel = np.abs(logt - logt[i]) <= 0.5 * window_decades
        if sel.sum() >= 3:
            x = logt[sel] - logt[sel].mean()
            out[i] = abs(float(x @ (v[sel] - v[sel].mean()) / (x @ x)))
    return out


def plateau_intervals(
    series: TimeSeries,
    ratio: float = 0.1,
    min_decades: float = 1.0,
    until: float | None = None,
    window_decades: float = 0.0,
) -> list[tuple[float, float]]:
    """Log-time windows where the series is nearly flat during its decay.

    The local slope ``|dv / d log10 t|`` (centred differences, or a windowed
    fit when ``window_decades > 0``, see :func:`log_slope`) is compared with
    its running maximum; maximal runs where it stays below ``ratio`` times that
    maximum and that span at least ``min_decades`` decades are returned as
    ``(t_start, t_end)``. Only times up to ``until`` are scanned (use the
    relaxation time to exclude the final stationary stretch).
    """
    t, v = series.times, series.values
    keep = t > 0
    t, v = t[keep], v[keep]
    if t.size < 3:
        return []
    slope = log_slope(t, v, window_decades)
    scan = np.ones(t.size, bool) if until is None else t <= until
    t, slope = t[scan], slope[scan]
    if t.size < 3:
        return []
    logt = np.log10(t)
    running = np.maximum.accumulate(slope)
    flat = slope < ratio * running
    out = []
    start = None
    for i, f in enumerate(flat):
        if f and start is None:
            start = i
        if (not f or i == len(flat) - 1) and start is not None:
            end = i if f else i - 1
            if logt[end] - logt[start] >= min_decades:
                out.append((float(t[start]), float(t[end])))
            start = None
    return out


def fit_exponential_rates(times, values, n_rates: int) -> np.ndarray:
    """Decay rates of ``v(t) = c0 + sum_i a_i exp(-r_i t)`` from a uniform grid.

    Uses the linear-prediction (Prony) construction: the sampled signal obeys a
    recurrence whose characteristic roots are ``exp(-r_i dt)`` together with the
    root 1 of the constant offset. Degenerate rates (``t exp(-r t)`` terms) are
    handled since they only produce a repeated root.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("exponential fit needs a uniform time grid")
    order = n_rates + 1
    rows = len(values) - order
    if rows < order:
        raise ValueError("not enough samples for the requested number of rates")
    a = np.column_stack([values[i : i + rows] for i in range(order)])
    b = values[order : order + rows]
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    # z^order - sum_i coef_i z^i
    roots = np.roots(np.concatenate([[1.0], -coef[::-1]]))
    # drop the root closest to 1 (constant offset)
    roots = np.delete(roots, np.argmin(np.abs(roots - 1.0)))
    rates = -np.log(roots.astype(complex)).real / dt[0]
    return np.sort(rates)


@dataclass
class ComparisonReport:
    """Deviation metrics of a quantum series relative to a classical one.

    All signed quantities are ``quantum - classical``.
    """

    stationary_deviation: float
    max_transient_deviation: float
    time_of_max_deviation: float
    decade_profile: list[tuple[float, float, float]] = field(default_factory=list)
    label: str = ""

    def as_dict(self):
        return {
            "label": self.label,
            "stationary_deviation": self.stationary_deviation,
            "max_transient_deviation": self.max_transient_deviation,
            "time_of_max_deviation": self.time_of_max_deviation,
            "decade_profile": [
                {"t_start": a, "t_end": b, "max_abs_deviation": c} for a, b, c in self.decade_profile
            ],
        }


def compare_models(
    classical: TimeSeries,
    quantum: TimeSeries,
    v_ss_classical: float,
    v_ss_quantum: float,
    label: str = "",
) -> ComparisonReport:
    """Compare two relaxation curves on the classical grid (overlapping range only)."""
    lo = max(classical.times[0], quantum.times[0])
    hi = min(classical.times[-1], quantum.times[-1])
    if hi < lo:
        raise QKCMError("time grids do not overlap")
    sel = (classical.times >= lo) & (classical.times <= hi)
    t = classical.times[sel]
    c = classical.values[sel]
    q = log_interp(t, quantum.times, quantum.values)
    diff = q - c
    imax = int(np.argmax(np.abs(diff)))
    profile = []
    pos = t > 0
    if pos.any():
        for d in range(int(np.floor(np.log10(t[pos][0]))), int(np.ceil(np.log10(t[-1])))):
            win = pos & (t >= 10.0**d) & (t < 10.0 ** (d + 1))
            if win.any():
                profile.append((10.0**d, 10.0 ** (d + 1), float(np.max(np.abs(diff[win])))))
    return ComparisonReport(
        stationary_deviation=float(v_ss_quantum - v_ss_classical),
        max_transient_deviation=float(np.abs(diff[imax])),
        time_of_max_deviation=float(t[imax]),
        decade_profile=profile,
        label=label,
    )


def site_profile_heatmap(trajectory, grid=None) -> np.ndarray:
    """``N x T`` matrix of ``<n_k(t)>`` along one trajectory.

    ``trajectory`` is anything exposing ``sample_times`` and ``site_density``
    (quantum or classical). Off-grid requests are filled with the last sample at
    or before each time, which is exact for classical paths and a step
    approximation otherwise.
    """
    times = np.asarray(trajectory.sample_times)
    data = np.asarray(trajectory.site_density)
    if grid is None:
        return np.clip(data.copy(), 0.0, 1.0)
    grid = np.asarray(grid, dtype=float)
    idx = np.clip(np.searchsorted(times, grid, side="right") - 1, 0, len(times) - 1)
    return np.clip(data[:, idx], 0.0, 1.0)
