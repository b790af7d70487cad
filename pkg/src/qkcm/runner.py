"""Experiment orchestration and result files.

Every series is written as CSV with columns ``t,value,stderr`` (``stderr`` is
empty where undefined). A sidecar ``manifest.json`` echoes the resolved config,
the seed, library versions, wall time and a status that moves from
``running`` to ``complete`` (or ``interrupted``).
"""

from __future__ import annotations

import json
import logging
import platform
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import TimeSeries
from .classical_engine import build_master_operator, classical_ensemble, distribution_density, evolve_distribution
from .config import CLASSICAL_MODELS, ExperimentConfig
from .errors import NumericalError
from .lindblad import (
    expectation,
    lindblad_solve_dense,
    rydberg_blockade_dynamics,
    rydberg_population,
    three_level_ground_state,
    three_level_lindblad,
)
from .model_zoo import (
    ClassicalKCMSpec,
    QuantumKCMSpec,
    RydbergSpec,
    quantum_jump_operators,
    rydberg_jump_operators,
    stationary_vector,
)
from .quantum_engine import quantum_ensemble, waiting_time_distribution
from .spin_space import ORACLE_CAP, SIGMA_X, LocalOperator, PureState, dense_matrix_of, mean_occupation

logger = logging.getLogger(__name__)

#: dense Lindblad oracles are attached to quantum runs up to this Hilbert dimension
ORACLE_DIM = 256


def write_series(path, series: TimeSeries):
    lines = ["t,value,stderr"]
    err = series.stderr
    for i, (t, v) in enumerate(zip(series.times, series.values)):
        e = "" if err is None else repr(float(err[i]))
        lines.append(f"{float(t)!r},{float(v)!r},{e}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_series(path) -> TimeSeries:
    raw = Path(path).read_text().strip().splitlines()
    if raw[0].strip() != "t,value,stderr":
        raise ValueError(f"{path}: expected header t,value,stderr")
    rows = [line.split(",") for line in raw[1:]]
    t = np.array([float(r[0]) for r in rows])
    v = np.array([float(r[1]) for r in rows])
    e = None if any(r[2] == "" for r in rows) else np.array([float(r[2]) for r in rows])
    return TimeSeries(t, v, e, Path(path).stem)


def _versions():
    return {"qkcm": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


class Manifest:
    def __init__(self, out_dir: Path, config: ExperimentConfig):
        self.path = out_dir / "manifest.json"
        self.data = {
            "config": config.as_dict(),
            "seed": config.master_seed,
            "versions": _versions(),
            "status": "running",
            "outputs": [],
            "wall_time_s": 0.0,
        }
        self.start = time.perf_counter()
        self.flush()

    def add(self, name: str):
        self.data["outputs"].append(name)
        self.flush()

    def finish(self, status: str, **extra):
        self.data["status"] = status
        self.data["wall_time_s"] = round(time.perf_counter() - self.start, 3)
        self.data.update(extra)
        self.flush()

    def flush(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _initial_pure_state(cfg: ExperimentConfig, kappa: float) -> PureState:
    if cfg.initial_state == "product_s":
        return PureState.product([stationary_vector(kappa)] * cfg.n_sites)
    return PureState.from_configuration(cfg.initial_configuration())


def _save(manifest, out_dir, name, series):
    write_series(out_dir / name, series)
    manifest.add(name)


def _exact_distribution(w, p0, times):
    # eigen is fast but loses accuracy when p_eq spans many decades
    try:
        return evolve_distribution(w, p0, times, method="eigen")
    except NumericalError:
        return evolve_distribution(w, p0, times, method="expm")


def _run_classical(cfg, times, out, manifest):
    spec = ClassicalKCMSpec.from_ratio(cfg.lam, cfg.kappa_ratio, cfg.constraint_spec(), cfg.n_sites)
    init = cfg.initial_configuration()
    res = classical_ensemble(spec, init, times[-1], cfg.n_trajectories, cfg.master_seed, times, cfg.n_jobs)
    _save(manifest, out, "density.csv", res.density)
    for k in range(cfg.n_sites):
        err = None if res.site_density_stderr is None else res.site_density_stderr[k]
        _save(manifest, out, f"site_{k}_density.csv", TimeSeries(times, res.site_density[k], err))
    if cfg.oracle and 2**cfg.n_sites <= ORACLE_CAP:
        w = build_master_operator(spec)
        p0 = np.zeros(w.dim)
        p0[init.index] = 1.0
        probs = _exact_distribution(w, p0, times)
        _save(manifest, out, "density_exact.csv", TimeSeries(times, distribution_density(probs, cfg.n_sites)))


def _quantum_outputs(cfg, res, times, out, manifest, jump_ops, psi0):
    _save(manifest, out, "density.csv", res.density)
    _save(manifest, out, "sigma_x.csv", res.sigma_x)
    for k in range(cfg.n_sites):
        err = None if res.site_density_stderr is None else res.site_density_stderr[k]
        _save(manifest, out, f"site_{k}_density.csv", TimeSeries(times, res.site_density[k], err))
    t_edges = np.concatenate([[0.0], np.logspace(-2, np.log10(times[-1]), 9)])
    w_edges = np.logspace(-3, np.log10(max(times[-1], 1e-2)), 41)
    hist = waiting_time_distribution(res.jump_times, t_edges, w_edges)
    lines = ["t_lo,t_hi,wait_lo,wait_hi,count,density"]
    for i in range(t_edges.size - 1):
        for j in range(w_edges.size - 1):
            lines.append(
                f"{t_edges[i]!r},{t_edges[i + 1]!r},{w_edges[j]!r},{w_edges[j + 1]!r},"
                f"{int(hist.counts[i, j])},{float(hist.density[i, j])!r}"
            )
    (out / "waiting_times.csv").write_text("\n".join(lines) + "\n")
    manifest.add("waiting_times.csv")
    dim = 2**cfg.n_sites
    if cfg.oracle and dim <= ORACLE_DIM:
        rho0 = np.outer(psi0.amplitudes, psi0.amplitudes.conj())
        rhos = lindblad_solve_dense(jump_ops, rho0, times, cfg.n_sites)
        occ = mean_occupation(cfg.n_sites)
        sx = sum(dense_matrix_of(LocalOperator(k, SIGMA_X), cfg.n_sites) for k in range(cfg.n_sites)) / cfg.n_sites
        _save(manifest, out, "density_oracle.csv", TimeSeries(times, np.real(np.einsum("tii,i->t", rhos, occ))))
        _save(manifest, out, "sigma_x_oracle.csv", TimeSeries(times, expectation(rhos, sx)))


def _run_quantum_kcm(cfg, times, out, manifest):
    spec = QuantumKCMSpec.from_ratio(cfg.lam, cfg.kappa_ratio, cfg.constraint_spec(), cfg.n_sites, cfg.theta)
    ops = quantum_jump_operators(spec)
    psi0 = _initial_pure_state(cfg, spec.kappa)
    res = quantum_ensemble(ops, psi0, times[-1], cfg.n_trajectories, cfg.master_seed, times, n_jobs=cfg.n_jobs)
    _quantum_outputs(cfg, res, times, out, manifest, ops, psi0)
    extra = {}
    if res.final_density is not None:
        extra = {"final_density": res.final_density, "final_sigma_x": res.final_sigma_x}
    return extra


def _run_rydberg_effective(cfg, times, out, manifest):
    spec = RydbergSpec(cfg.x, cfg.n_sites, cfg.boundary)
    ops = rydberg_jump_operators(spec)
    psi0 = _initial_pure_state(cfg, spec.kappa)
    res = quantum_ensemble(ops, psi0, times[-1], cfg.n_trajectories, cfg.master_seed, times, n_jobs=cfg.n_jobs)
    _quantum_outputs(cfg, res, times, out, manifest, ops, psi0)
    # classical excluded-volume companion at the matched rate (needs a configuration)
    if cfg.initial_state != "product_s":
        classical = spec.excluded_volume_classical(cfg.lam)
        init = cfg.initial_configuration()
        if 2**cfg.n_sites <= ORACLE_CAP:
            w = build_master_operator(classical)
            p0 = np.zeros(w.dim)
            p0[init.index] = 1.0
            probs = _exact_distribution(w, p0, times)
            series = TimeSeries(times, distribution_density(probs, cfg.n_sites))
        else:
            series = classical_ensemble(
                classical, init, times[-1], cfg.n_trajectories, cfg.master_seed, times, cfg.n_jobs
            ).density
        _save(manifest, out, "density_classical.csv", series)
    extra = {}
    if cfg.oracle and cfg.initial_state == "all_down" and 2**cfg.n_sites <= ORACLE_CAP:
        dyn = rydberg_blockade_dynamics(spec, times)
        _save(manifest, out, "density_blockade.csv", TimeSeries(times, dyn.density))
        _save(manifest, out, "sigma_x_blockade.csv", TimeSeries(times, dyn.sigma_x))
        extra = {"stationary_density": dyn.stationary_density, "stationary_sigma_x": dyn.stationary_sigma_x}
    return extra


def _run_three_level(cfg, times, out, manifest):
    spec = RydbergSpec.three_level(cfg.x, cfg.n_sites, cfg.omega_c, cfg.gamma, cfg.v, cfg.boundary)
    bare = times * spec.time_unit
    rhos = three_level_lindblad(spec, three_level_ground_state(cfg.n_sites), bare)
    _save(manifest, out, "density.csv", TimeSeries(times, rydberg_population(rhos, cfg.n_sites)))
    if cfg.oracle:
        dyn = rydberg_blockade_dynamics(RydbergSpec(cfg.x, cfg.n_sites, cfg.boundary), times)
        _save(manifest, out, "density_effective.csv", TimeSeries(times, dyn.density))


def run(cfg: ExperimentConfig) -> Path:
    """Execute one experiment and write its outputs under ``cfg.output_path``."""
    out = Path(cfg.output_path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, cfg)
    times = cfg.times()
    try:
        if cfg.model in CLASSICAL_MODELS:
            extra = _run_classical(cfg, times, out, manifest)
        elif cfg.model == "quantum_kcm":
            extra = _run_quantum_kcm(cfg, times, out, manifest)
        elif cfg.model == "rydberg_effective":
            extra = _run_rydberg_effective(cfg, times, out, manifest)
        else:
            extra = _run_three_level(cfg, times, out, manifest)
    except KeyboardInterrupt:
        manifest.finish("interrupted")
        raise
    except Exception as exc:
        manifest.finish("failed", error=str(exc))
        raise
    manifest.finish("complete", **(extra or {}))
    return out
