"""Classical rate-equation dynamics: exact master-operator evolution and Gillespie sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh, expm

from ._random import open_unit, substream
from .analysis import TimeSeries
from .ensemble import EnsembleResult, mean_stderr, run_parallel
from .errors import DimensionError, NumericalError
from .model_zoo import ClassicalKCMSpec, Direction, classical_equilibrium, rate_matrix
from .spin_space import ORACLE_CAP, SpinConfiguration, site_levels

RTOL = 1e-8
ATOL = 1e-10
PROB_TOL = 1e-9


@dataclass
class ClassicalMasterOperator:
    """``matrix[c2, c] = W_{c -> c2}`` off the diagonal, ``-R_c`` on it."""

    matrix: np.ndarray
    n_sites: int
    p_eq: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def column_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


def build_master_operator(spec: ClassicalKCMSpec, cap: int = ORACLE_CAP) -> ClassicalMasterOperator:
    rates = rate_matrix(spec, cap)
    w = rates.T - np.diag(rates.sum(axis=1))
    if np.max(np.abs(w.sum(axis=0))) > 1e-13:
        raise NumericalError("master operator does not conserve probability")
    return ClassicalMasterOperator(w, spec.n_sites, classical_equilibrium(spec, cap, check=False))


def evolve_distribution(
    w: ClassicalMasterOperator, p0, times, method: str = "rk45"
) -> np.ndarray:
    """Probability vectors at ``times`` (shape ``(T, dim)``) starting from ``p0`` at t=0.

    ``method``:

    * ``"rk45"``: adaptive Dormand-Prince with rtol 1e-8, atol 1e-10.
    * ``"eigen"``: symmetrize with the equilibrium measure and diagonalize; exact
      for detailed-balance generators and fast on long, stiff horizons, but
      loses accuracy when ``p_eq`` spans many decades (small kappa, large N).
    * ``"expm"``: matrix exponential of each time increment by scaling and
      squaring with a stochastic small-step factor; slower, robust at any horizon.
    """
    p0 = np.asarray(p0, dtype=float)
    times = np.asarray(times, dtype=float)
    if p0.shape != (w.dim,):
        raise DimensionError(f"initial distribution has shape {p0.shape}, expected ({w.dim},)")
    if np.any(p0 < 0) or abs(p0.sum() - 1.0) > PROB_TOL:
        raise ValueError("initial distribution must be nonnegative and sum to 1")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be nonnegative and nondecreasing")

    if method == "rk45":
        out = np.empty((times.size, w.dim))
        start = times > 0
        out[~start] = p0
        if start.any():
            sol = solve_ivp(
                lambda _t, p: w.matrix @ p,
                (0.0, times[-1]),
                p0,
                method="RK45",
                t_eval=times[start],
                rtol=RTOL,
                atol=ATOL,
            )
            if not sol.success:
                raise NumericalError(f"classical integration failed: {sol.message}")
            out[start] = sol.y.T
    elif method == "eigen":
        if w.p_eq is None:
            raise ValueError("eigen path needs the equilibrium measure")
        sq = np.sqrt(w.p_eq)
        h = -(w.matrix * sq[None, :]) / sq[:, None]
        lam, v = eigh(0.5 * (h + h.T))
        lam = np.clip(lam, 0.0, None)
        c = v.T @ (p0 / sq)
        out = (sq[:, None] * (v @ (np.exp(-np.outer(lam, times)) * c[:, None]))).T
        out[times == 0] = p0
    elif method == "expm":
        out = np.empty((times.size, w.dim))
        p = p0.copy()
        prev = 0.0
        for i, t in enumerate(times):
            if t > prev:
                p = stochastic_propagator(w.matrix, t - prev) @ p
                prev = t
            out[i] = p
    else:
        raise ValueError(f"unknown method {method!r}")

    if np.min(out) < -PROB_TOL or np.max(np.abs(out.sum(axis=1) - 1.0)) > PROB_TOL:
        raise NumericalError(
            f"distribution left the simplex: min {np.min(out):.3e}, "
            f"sum error {np.max(np.abs(out.sum(axis=1) - 1.0)):.3e}"
        )
    return out


def stochastic_propagator(matrix: np.ndarray, dt: float) -> np.ndarray:
    """``exp(W dt)`` for a master operator ``W``.

    A step with ``||W h||_1 <= 1/2`` is exponentiated and projected back onto
    column-stochastic matrices (a rounding-level correction), then squared up to
    ``dt`` with the same correction after every squaring. Products of stochastic matrices stay stochastic, so the result is
    stable for horizons where plain scaling and squaring amplifies small
    negative entries.
    """
    norm = float(np.abs(matrix).sum(axis=0).max()) * dt
    squarings = int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0
    prop = expm(matrix * (dt / 2.0**squarings))
    np.clip(prop, 0.0, None, out=prop)
    prop /= prop.sum(axis=0, keepdims=True)
    for _ in range(squarings):
        prop = prop @ prop
        prop /= prop.sum(axis=0, keepdims=True)
    return prop


def distribution_density(probs: np.ndarray, n_sites: int) -> np.ndarray:
    """``<n(t)>`` (mean occupation) for each row of a distribution array."""
    occ = sum(site_levels(k, n_sites) for k in range(n_sites)) / n_sites
    return probs @ occ


def distribution_site_density(probs: np.ndarray, n_sites: int) -> np.ndarray:
    """Per-site ``<n_k(t)>``, shape ``(N, T)``."""
    return np.stack([probs @ site_levels(k, n_sites) for k in range(n_sites)])


@dataclass
class ClassicalTrajectory:
    seed: tuple[int, int]
    initial: SpinConfiguration
    event_times: np.ndarray
    event_sites: np.ndarray
    event_directions: list
    t_max: float
    halted: bool
    sample_times: np.ndarray
    site_density: np.ndarray

    @property
    def events(self) -> list[tuple[float, int, Direction]]:
        return list(zip(self.event_times.tolist(), self.event_sites.tolist(), self.event_directions))

    @property
    def density(self) -> np.ndarray:
        return self.site_density.mean(axis=0)


def _site_rates(spec, config, sites):
    out = np.empty(len(sites))
    up = spec.lam * spec.kappa
    down = spec.lam * (1.0 - spec.kappa)
    for i, k in enumerate(sites):
        if spec.constraint.evaluate(k, config):
            out[i] = down if config[k] else up
        else:
            out[i] = 0.0
    return out


def gillespie_trajectory(
    spec: ClassicalKCMSpec,
    init: SpinConfiguration,
    t_max: float,
    seed: int | tuple[int, int] = 0,
    sample_times=None,
) -> ClassicalTrajectory:
    """Kinetic Monte Carlo path with exponential waiting times.

    Rates are recomputed only for the flipped site and its neighbours. When the
    escape rate vanishes the configuration is absorbing and the path is marked
    ``halted``.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if init.n_sites != spec.n_sites or init.local_dim != 2:
        raise DimensionError("initial configuration does not match the model")
    master, index = seed if isinstance(seed, tuple) else (seed, 0)
    rng = substream(master, index)
    n = spec.n_sites
    if sample_times is None:
        sample_times = np.array([0.0, t_max])
    sample_times = np.asarray(sample_times, dtype=float)
    samples = np.empty((n, sample_times.size))
    filled = 0

    config = list(init.sites)
    rates = _site_rates(spec, config, range(n))
    t = 0.0
    times, sites, directions = [], [], []
    halted = False
    while True:
        total = rates.sum()
        if total <= 0.0:
            halted = True
            t_next = np.inf
        else:
            t_next = t - np.log(open_unit(rng)) / total
        while filled < sample_times.size and sample_times[filled] < min(t_next, np.inf) and sample_times[filled] <= t_max:
            samples[:, filled] = config
            filled += 1
        if t_next > t_max:
            break
        k = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        k = min(k, n - 1)
        directions.append(Direction.DOWN if config[k] else Direction.UP)
        config[k] = 1 - config[k]
        t = t_next
        times.append(t)
        sites.append(k)
        left, right = (k - 1) % n, (k + 1) % n
        touched = sorted({left, k, right})
        rates[touched] = _site_rates(spec, config, touched)
    samples[:, filled:] = np.array(config)[:, None]
    return ClassicalTrajectory(
        seed=(int(master), int(index)),
        initial=init,
        event_times=np.asarray(times),
        event_sites=np.asarray(sites, dtype=int),
        event_directions=directions,
        t_max=float(t_max),
        halted=halted,
        sample_times=sample_times,
        site_density=samples,
    )


def classical_ensemble(
    spec: ClassicalKCMSpec,
    init: SpinConfiguration,
    t_max: float,
    n_traj: int,
    master_seed: int = 0,
    sample_times=None,
    n_jobs: int = 1,
    keep_trajectories: bool = False,
) -> EnsembleResult:
    """Mean and standard error of ``<n(t)>`` and ``<n_k(t)>`` over Gillespie paths."""
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    if sample_times is None:
        sample_times = np.concatenate([[0.0], np.logspace(-1, np.log10(t_max), 60)])
    sample_times = np.asarray(sample_times, dtype=float)

    def job(i):
        return gillespie_trajectory(spec, init, t_max, (master_seed, i), sample_times)

    trajs = run_parallel(job, n_traj, n_jobs)
    dens = np.stack([tr.site_density for tr in trajs])
    site_mean, site_err = mean_stderr(dens)
    d_mean, d_err = mean_stderr(dens.mean(axis=1))
    return EnsembleResult(
        times=sample_times,
        n_trajectories=n_traj,
        site_density=site_mean,
        site_density_stderr=site_err,
        density=TimeSeries(sample_times, d_mean, d_err, "density"),
        trajectories=trajs if keep_trajectories else [],
        jump_times=[tr.event_times for tr in trajs],
    )
