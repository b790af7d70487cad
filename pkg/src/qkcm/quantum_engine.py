"""Quantum-jump Monte Carlo for purely dissipative Lindblad dynamics.

Between jumps a trajectory evolves as ``exp(-G t / 2)|psi>`` with
``G = sum_k J_k^dag J_k`` (there is no Hamiltonian part). A jump fires when the
squared norm falls to a uniform draw ``r``; the channel is picked with
probability ``||J_k psi||^2 / sum_j ||J_j psi||^2``.

Two no-jump propagators are provided. :class:`EigenPropagator` diagonalizes a
dense ``G`` once and solves the norm crossing exactly; it is the default up to
``EIGEN_CAP`` basis states. :class:`SteppingPropagator` applies ``G`` as two
passes of the jump operators and advances with fixed-size Taylor steps,
refining the crossing by bisection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from ._random import open_unit, substream
from .analysis import TimeSeries
from .ensemble import EnsembleResult, mean_stderr, run_parallel
from .errors import DimensionError, NormalizationError, NumericalError
from .spin_space import PureState, site_coherences, site_populations

logger = logging.getLogger(__name__)

EIGEN_CAP = 4096
CROSSING_RTOL = 1e-10
ZERO_MODE_RTOL = 1e-12


def log_time_grid(t_min: float, t_max: float, n_points: int, include_zero: bool = True) -> np.ndarray:
    grid = np.logspace(np.log10(t_min), np.log10(t_max), n_points)
    return np.concatenate([[0.0], grid]) if include_zero else grid


def linear_time_grid(t_max: float, n_points: int) -> np.ndarray:
    return np.linspace(0.0, t_max, n_points)


def _apply_generator(jump_ops, amps, n_sites):
    out = np.zeros_like(amps)
    for op in jump_ops:
        out += op.adjoint().apply(op.apply(amps, n_sites), n_sites)
    return out


class EigenPropagator:
    """Exact no-jump evolution from the eigendecomposition of a dense ``G``."""

    def __init__(self, jump_ops, n_sites: int, cap: int = EIGEN_CAP):
        dim = jump_ops[0].local_dim**n_sites
        if dim > cap:
            raise DimensionError(f"basis size {dim} exceeds eigen-propagator cap {cap}")
        self.n_sites = n_sites
        g = _apply_generator(jump_ops, np.eye(dim, dtype=complex), n_sites)
        g = 0.5 * (g + g.conj().T)
        if not np.any(g.imag):
            g = g.real  # real symmetric G: real eigenvectors halve the per-jump work
        w, v = eigh(g)
        if w[0] < -1e-10 * max(1.0, w[-1]):
            raise NumericalError(f"jump generator is not positive semidefinite (min eigenvalue {w[0]:.3e})")
        zero = w <= ZERO_MODE_RTOL * max(1.0, w[-1])
        w = np.where(zero, 0.0, w)
        self.rates = w
        self.vectors = v
        self.adjoint = np.ascontiguousarray(v.conj().T)
        self.zero_modes = zero

    def start(self, psi: np.ndarray):
        return self._matvec(self.adjoint, psi)

    @staticmethod
    def _matvec(m, x):
        if np.isrealobj(m) and np.iscomplexobj(x):
            # interleaved (re, im) columns: one real product
            xc = np.ascontiguousarray(x.reshape(x.shape[0], -1))
            out = (m @ xc.view(np.float64)).view(np.complex128)
            return out.reshape((m.shape[0],) + x.shape[1:])
        return m @ x

    def norm2(self, coeffs, tau: float) -> float:
        return float(np.dot(np.abs(coeffs) ** 2, np.exp(-self.rates * tau)))

    def asymptotic_norm2(self, coeffs) -> float:
        return float(np.sum(np.abs(coeffs[self.zero_modes]) ** 2))

    def states(self, coeffs, taus) -> np.ndarray:
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        return self._matvec(self.vectors, np.exp(-0.5 * np.outer(self.rates, taus)) * coeffs[:, None])

    def limit_state(self, coeffs) -> np.ndarray:
        return self._matvec(self.vectors[:, self.zero_modes], coeffs[self.zero_modes])

    def crossing(self, coeffs, r: float) -> float | None:
        """Time at which the squared norm reaches ``r``, or ``None`` if it never does."""
        weights = np.abs(coeffs) ** 2
        if self.asymptotic_norm2(coeffs) >= r:
            return None

        def f(tau):
            return float(np.dot(weights, np.exp(-self.rates * tau))) - r

        hi = 1.0 / max(self.rates[-1], 1e-300)
        while f(hi) > 0:
            hi *= 2.0
            if hi > 1e300:
                raise NumericalError("norm crossing not bracketed")
        tau = brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        if abs(f(tau)) > CROSSING_RTOL * r:
            raise NumericalError(f"norm crossing unresolved: residual {f(tau):.3e} at r={r:.3e}")
        return tau

    def propagate(self, psi, r, horizon, offsets):
        """Advance from ``psi`` until the norm hits ``r`` or ``horizon`` elapses.

        Returns ``(tau, psi_end, samples, dark)`` where ``tau`` is the jump delay
        (``None`` if no jump before the horizon), ``samples`` holds the
        unnormalized states at the ``offsets`` preceding the jump, and ``dark``
        flags a state whose norm will never reach ``r``.
        """
        coeffs = self.start(psi)
        tau = self.crossing(coeffs, r)
        dark = tau is None
        if tau is not None and tau > horizon:
            tau = None
        stop = horizon if tau is None else tau
        offsets = np.asarray(offsets, dtype=float)
        take = offsets <= stop if tau is None else offsets < tau
        samples = self.states(coeffs, offsets[take]) if take.any() else np.empty((psi.shape[0], 0), complex)
        psi_end = self.states(coeffs, [stop])[:, 0]
        return tau, psi_end, samples, dark


class SteppingPropagator:
    """No-jump evolution by fixed-size Taylor steps of ``exp(-G h / 2)``.

    ``G`` is never formed: each application is ``sum_k J_k^dag (J_k psi)``. The
    step keeps ``h ||G|| / 2 <= 1/2`` using the bound
    ``||G|| <= sum_k ||J_k||^2``, and the series is summed until its terms drop
    below double precision.
    """

    def __init__(self, jump_ops, n_sites: int, max_steps: int = 10_000_000):
        self.jump_ops = list(jump_ops)
        self.adjoints = [op.adjoint() for op in self.jump_ops]
        self.n_sites = n_sites
        bound = sum(op.norm_bound() ** 2 for op in self.jump_ops)
        self.step = 1.0 / max(bound, 1e-300)
        self.max_steps = max_steps

    def generator(self, psi):
        out = np.zeros_like(psi)
        for op, adj in zip(self.jump_ops, self.adjoints):
            out += adj.apply(op.apply(psi, self.n_sites), self.n_sites)
        return out

    def evolve(self, psi, tau):
        out = psi.copy()
        term = psi
        scale = np.linalg.norm(psi)
        for m in range(1, 60):
            term = (-0.5 * tau / m) * self.generator(term)
            out += term
            if np.linalg.norm(term) <= 1e-17 * scale:
                break
        return out

    def propagate(self, psi, r, horizon, offsets):
        offsets = np.asarray(offsets, dtype=float)
        samples = []
        t = 0.0
        cur = psi
        cur_norm = float(np.vdot(cur, cur).real)
        i_off = 0
        for _ in range(self.max_steps):
            h = min(self.step, horizon - t)
            nxt = self.evolve(cur, h)
            nxt_norm = float(np.vdot(nxt, nxt).real)
            if nxt_norm > cur_norm * (1 + 1e-12):
                raise NumericalError(f"squared norm increased during no-jump step ({cur_norm:.17g} -> {nxt_norm:.17g})")
            if nxt_norm < r:
                lo, hi = 0.0, h
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    trial = self.evolve(cur, mid)
                    n_mid = float(np.vdot(trial, trial).real)
                    if abs(n_mid - r) < CROSSING_RTOL * r:
                        break
                    if n_mid > r:
                        lo = mid
                    else:
                        hi = mid
                else:
                    raise NumericalError("step-size underflow while bisecting the norm crossing")
                tau = t + mid
                while i_off < len(offsets) and offsets[i_off] < tau:
                    samples.append(self.evolve(cur, offsets[i_off] - t))
                    i_off += 1
                return tau, trial, _stack(samples, psi), False
            while i_off < len(offsets) and offsets[i_off] <= t + h:
                samples.append(self.evolve(cur, offsets[i_off] - t))
                i_off += 1
            t += h
            cur, cur_norm = nxt, nxt_norm
            decay = float(np.vdot(cur, self.generator(cur)).real) / cur_norm
            if decay < 1e-14:
                while i_off < len(offsets):
                    samples.append(cur.copy())
                    i_off += 1
                return None, cur, _stack(samples, psi), True
            if t >= horizon:
                return None, cur, _stack(samples, psi), False
        raise NumericalError("maximum number of no-jump steps exceeded")


def _stack(samples, like):
    if not samples:
        return np.empty((like.shape[0], 0), complex)
    return np.column_stack(samples)


def make_propagator(jump_ops, n_sites: int, method: str = "auto"):
    dim = jump_ops[0].local_dim**n_sites
    if method == "eigen" or (method == "auto" and dim <= EIGEN_CAP):
        return EigenPropagator(jump_ops, n_sites)
    if method in ("auto", "stepping"):
        return SteppingPropagator(jump_ops, n_sites)
    raise ValueError(f"unknown propagation method {method!r}")


@dataclass
class QuantumTrajectory:
    seed: tuple[int, int]
    initial_state: PureState
    jump_times: np.ndarray
    jump_channels: np.ndarray
    sample_times: np.ndarray
    site_density: np.ndarray
    site_coherence: np.ndarray
    converged_dark: bool = False
    final_state: np.ndarray | None = None

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self.jump_times.tolist(), self.jump_channels.tolist()))

    @property
    def density(self) -> np.ndarray:
        return self.site_density.mean(axis=0)

    @property
    def sigma_x(self) -> np.ndarray:
        return self.site_coherence.mean(axis=0)


def _observables(samples, n_sites, local_dim, levels):
    norms = np.sqrt(np.sum(np.abs(samples) ** 2, axis=0))
    samples = samples / norms
    dens = site_populations(samples, n_sites, local_dim, level=levels[1])
    coh = site_coherences(samples, n_sites, local_dim, levels)
    return dens, coh


def qjmc_trajectory(
    jump_ops: Sequence,
    init: PureState,
    t_max: float,
    seed: int | tuple[int, int] = 0,
    sample_times=None,
    propagator=None,
    method: str = "auto",
    levels: tuple[int, int] = (0, 1),
    check_channels: bool = True,
) -> QuantumTrajectory:
    """Run one quantum-jump trajectory up to ``t_max``.

    ``seed`` is either a plain integer or ``(master_seed, index)``; the two are
    equivalent for ``(seed, 0)``. Observables (per-site occupation of
    ``levels[1]`` and the ``levels[0]``-``levels[1]`` coherence) are evaluated
    in the normalized state at every ``sample_times`` entry.
    """
    if not jump_ops:
        raise ValueError("need at least one jump operator")
    if not init.is_normalized():
        raise NormalizationError(f"initial state has squared norm {init.squared_norm:.12g}")
    master, index = seed if isinstance(seed, tuple) else (seed, 0)
    rng = substream(master, index)
    n = init.n_sites
    if propagator is None:
        propagator = make_propagator(jump_ops, n, method)
    if sample_times is None:
        sample_times = log_time_grid(1e-1, t_max, 60)
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) <= 0):
        raise ValueError("sample times must be strictly increasing")

    n_samples = sample_times.shape[0]
    site_density = np.empty((n, n_samples))
    site_coherence = np.empty((n, n_samples))
    filled = 0
    jump_times, jump_channels = [], []
    psi = init.amplitudes.copy()
    t = 0.0
    dark = False
    while True:
        r = open_unit(rng)
        offsets = sample_times[filled:] - t
        tau, psi_end, samples, dark = propagator.propagate(psi, r, t_max - t, offsets)
        m = samples.shape[1]
        if m:
            dens, coh = _observables(samples, n, init.local_dim, levels)
            site_density[:, filled : filled + m] = dens
            site_coherence[:, filled : filled + m] = coh
            filled += m
        if tau is None:
            psi = psi_end
            break
        t += tau
        branches = [op.apply(psi_end, n) for op in jump_ops]
        weights = np.array([np.vdot(b, b).real for b in branches])
        total = weights.sum()
        if total <= 1e-300:
            dark = True
            psi = psi_end
            logger.debug("numerically dark state at t=%g", t)
            break
        probs = weights / total
        if check_channels and abs(probs.sum() - 1.0) > 1e-12:
            raise NumericalError("jump channel probabilities do not sum to one")
        k = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        k = min(k, len(jump_ops) - 1)
        psi = branches[k] / math.sqrt(weights[k])
        jump_times.append(t)
        jump_channels.append(k)
    if filled < n_samples:
        # a dark state stops decaying; fill the rest of the grid from it
        rest = sample_times[filled:] - t
        if isinstance(propagator, EigenPropagator):
            tail = propagator.states(propagator.start(psi), rest)
        else:
            tail = np.repeat(psi[:, None], rest.shape[0], axis=1)
        dens, coh = _observables(tail, n, init.local_dim, levels)
        site_density[:, filled:] = dens
        site_coherence[:, filled:] = coh
    final = psi
    if dark and isinstance(propagator, EigenPropagator):
        final = propagator.limit_state(propagator.start(psi))
    final = final / np.linalg.norm(final)
    return QuantumTrajectory(
        seed=(int(master), int(index)),
        initial_state=init,
        jump_times=np.asarray(jump_times, dtype=float),
        jump_channels=np.asarray(jump_channels, dtype=int),
        sample_times=sample_times,
        site_density=site_density,
        site_coherence=site_coherence,
        converged_dark=bool(dark),
        final_state=final,
    )


def quantum_ensemble(
    jump_ops: Sequence,
    init: PureState,
    t_max: float,
    n_traj: int,
    master_seed: int = 0,
    sample_times=None,
    method: str = "auto",
    levels: tuple[int, int] = (0, 1),
    n_jobs: int = 1,
    keep_trajectories: bool = False,
) -> EnsembleResult:
    """Average ``n_traj`` trajectories seeded by ``(master_seed, i)``."""
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    if sample_times is None:
        sample_times = log_time_grid(1e-1, t_max, 60)
    sample_times = np.asarray(sample_times, dtype=float)
    prop = make_propagator(jump_ops, init.n_sites, method)

    def job(i):
        return qjmc_trajectory(
            jump_ops, init, t_max, (master_seed, i), sample_times, prop, levels=levels
        )

    trajs = run_parallel(job, n_traj, n_jobs)
    dens = np.stack([tr.site_density for tr in trajs])
    coh = np.stack([tr.site_coherence.mean(axis=0) for tr in trajs])
    site_mean, site_err = mean_stderr(dens)
    d_mean, d_err = mean_stderr(dens.mean(axis=1))
    x_mean, x_err = mean_stderr(coh)
    final_d = final_x = None
    if all(tr.converged_dark for tr in trajs):
        finals = np.column_stack([tr.final_state for tr in trajs])
        n = init.n_sites
        final_d = float(site_populations(finals, n, init.local_dim, levels[1]).mean())
        final_x = float(site_coherences(finals, n, init.local_dim, levels).mean())
    return EnsembleResult(
        times=sample_times,
        n_trajectories=n_traj,
        site_density=site_mean,
        site_density_stderr=site_err,
        density=TimeSeries(sample_times, d_mean, d_err, "density"),
        sigma_x=TimeSeries(sample_times, x_mean, x_err, "sigma_x"),
        trajectories=trajs if keep_trajectories else [],
        jump_times=[tr.jump_times for tr in trajs],
        final_density=final_d,
        final_sigma_x=final_x,
    )


@dataclass
class WaitingTimeHistogram:
    """Inter-jump intervals binned by the time of the jump that opens them.

    ``density`` normalizes each time window (row) to unit total count; empty
    windows stay zero.
    """

    time_edges: np.ndarray
    wait_edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray

    @property
    def wait_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def waiting_times(jump_time_lists) -> tuple[np.ndarray, np.ndarray]:
    """``(start_times, waits)`` pooled over trajectories; the first wait starts at t=0."""
    starts, waits = [], []
    for jt in jump_time_lists:
        jt = np.asarray(getattr(jt, "jump_times", jt), dtype=float)
        if jt.size == 0:
            continue
        s = np.concatenate([[0.0], jt[:-1]])
        starts.append(s)
        waits.append(jt - s)
    if not starts:
        return np.empty(0), np.empty(0)
    return np.concatenate(starts), np.concatenate(waits)


def waiting_time_distribution(trajectories, time_window_edges, wait_bin_edges) -> WaitingTimeHistogram:
    time_edges = np.asarray(time_window_edges, dtype=float)
    wait_edges = np.asarray(wait_bin_edges, dtype=float)
    starts, waits = waiting_times(trajectories)
    counts, _, _ = np.histogram2d(starts, waits, bins=[time_edges, wait_edges])
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        density = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 0.0)
    return WaitingTimeHistogram(time_edges, wait_edges, counts, density)
