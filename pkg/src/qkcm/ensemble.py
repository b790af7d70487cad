"""Shared ensemble bookkeeping for classical and quantum trajectory runs."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import TimeSeries


@dataclass
class EnsembleResult:
    """Equal-weight trajectory averages on a common time grid.

    ``stderr`` fields are ``None`` for single-trajectory ensembles.
    ``final_density``/``final_sigma_x`` are the ``t -> infinity`` ensemble values
    when every trajectory ended in a dark state, else ``None``.
    """

    times: np.ndarray
    n_trajectories: int
    site_density: np.ndarray
    site_density_stderr: np.ndarray | None
    density: TimeSeries
    sigma_x: TimeSeries | None = None
    trajectories: list = field(default_factory=list)
    jump_times: list = field(default_factory=list)
    final_density: float | None = None
    final_sigma_x: float | None = None


def mean_stderr(stack):
    n = stack.shape[0]
    mean = stack.mean(axis=0)
    if n < 2:
        return mean, None
    return mean, stack.std(axis=0, ddof=1) / np.sqrt(n)


def run_parallel(job, n_traj: int, n_jobs: int = 1):
    """Evaluate ``job(i)`` for every trajectory index, returned in index order."""
    if n_jobs == 1:
        return [job(i) for i in range(n_traj)]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(job, range(n_traj)))
