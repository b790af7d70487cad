"""Oracle self-checks behind ``qkcm verify``.

``fast`` keeps every check at N <= 4 and 10^3 trajectories; ``full`` adds
larger ensembles and the three-level versus effective-model comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import model_zoo as mz
from .classical_engine import build_master_operator, classical_ensemble, distribution_density, evolve_distribution
from .lindblad import (
    expectation,
    generator_action,
    lindblad_solve_dense,
    rydberg_population,
    three_level_ground_state,
    three_level_lindblad,
)
from .quantum_engine import linear_time_grid, log_time_grid, quantum_ensemble
from .reference import classical_density, rydberg_quantum_density
from .spin_space import (
    SIGMA_X,
    Boundary,
    ConstraintKind,
    ConstraintSpec,
    LocalOperator,
    PureState,
    SpinConfiguration,
    dense_matrix_of,
    mean_occupation,
    site_levels,
)

KCM_KINDS = (ConstraintKind.UNCONSTRAINED, ConstraintKind.EAST, ConstraintKind.FA)
THETAS = {"pi/20": np.pi / 20, "pi/4": np.pi / 4, "pi/2": np.pi / 2}


@dataclass
class CheckResult:
    name: str
    model: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name} [{self.model}]: {self.detail}"


def _quantum_spec(kind, n, theta, ratio=0.01):
    return mz.QuantumKCMSpec.from_ratio(1.0, ratio, ConstraintSpec(kind, Boundary.PERIODIC), n, theta)


def check_hermitian_form(max_n):
    out = []
    for kind in KCM_KINDS:
        residual, error = 0.0, None
        for n in range(2, max_n + 1):
            spec = mz.ClassicalKCMSpec.from_ratio(1.0, 0.25, ConstraintSpec(kind, Boundary.PERIODIC), n)
            p_eq = mz.classical_equilibrium(spec)
            try:
                h = mz.hermitian_form(mz.rate_matrix(spec), p_eq)
            except Exception as exc:  # report rather than abort the suite
                error = f"N={n}: {exc}"
                break
            residual = max(residual, float(np.max(np.abs(h @ np.sqrt(p_eq)))))
        ok = error is None and residual < 1e-10
        out.append(CheckResult("hermitian form identity", kind.value, ok, error or f"H|g.s.> residual {residual:.1e}"))
    return out


def check_dark_states(max_n):
    out = []
    for kind in KCM_KINDS:
        worst = 0.0
        for label, theta in THETAS.items():
            for n in range(1, max_n + 1):
                spec = _quantum_spec(kind, n, theta)
                s = mz.stationary_product_state(spec)
                for op in mz.quantum_jump_operators(spec):
                    v = op.apply(s.amplitudes, n)
                    worst = max(worst, float(np.linalg.norm(v)))
        out.append(CheckResult("dark stationary state", f"quantum {kind.value}", worst < 1e-12,
                               f"max ||J_k|S>|| = {worst:.1e}"))
    return out


def check_diagonal_matching(max_n):
    worst = 0.0
    for kind in KCM_KINDS:
        spec = _quantum_spec(kind, max_n, np.pi / 2)
        s = mz.stationary_product_state(spec)
        probs = np.abs(s.amplitudes) ** 2
        n_mean = probs @ mean_occupation(max_n)
        pair = probs @ (site_levels(0, max_n) * site_levels(1, max_n))
        worst = max(worst, abs(n_mean - spec.kappa), abs(pair - spec.kappa**2))
    return [CheckResult("diagonal observables", "quantum kcm", worst < 1e-12, f"max deviation {worst:.1e}")]


def check_lindblad_stationarity(n):
    out = []
    for kind in (ConstraintKind.EAST, ConstraintKind.FA):
        spec = _quantum_spec(kind, n, np.pi / 4)
        s = mz.stationary_product_state(spec).amplitudes
        rho = np.outer(s, s.conj())
        drift = float(np.max(np.abs(generator_action(mz.quantum_jump_operators(spec), rho, n))))
        out.append(CheckResult("Lindblad stationarity", f"quantum {kind.value}", drift < 1e-12,
                               f"max |L rho_ss| = {drift:.1e}"))
    return out


def check_single_spin_formulas():
    out = []
    t = np.linspace(0.0, 20.0, 81)
    worst = 0.0
    for x in (0.1, 0.5, 1.0, 2.0, 10.0):
        spec = mz.RydbergSpec(x, 1)
        rho0 = np.diag([1.0, 0.0]).astype(complex)
        rhos = lindblad_solve_dense(mz.rydberg_jump_operators(spec), rho0, t, 1)
        worst = max(worst, float(np.max(np.abs(rhos[:, 1, 1].real - rydberg_quantum_density(t, x)))))
    out.append(CheckResult("single-atom quantum density", "rydberg effective", worst < 1e-6, f"max error {worst:.1e}"))
    spec = mz.ClassicalKCMSpec(1.0, 0.3, ConstraintSpec(ConstraintKind.UNCONSTRAINED), 1)
    probs = evolve_distribution(build_master_operator(spec), np.array([0.0, 1.0]), t)
    err = float(np.max(np.abs(probs[:, 1] - classical_density(t, 1.0, 0.3, 1.0))))
    out.append(CheckResult("single-spin classical density", "unconstrained", err < 1e-7, f"max error {err:.1e}"))
    return out


def check_small_x_reduction():
    worst = 0.0
    for x in (1e-3, 1e-2, 1e-1):
        spec = mz.RydbergSpec(x, 3)
        for a, b in zip(mz.rydberg_jump_operators(spec), mz.rydberg_kcm_form(spec)):
            d = np.linalg.norm(dense_matrix_of(a, 3) - dense_matrix_of(b, 3), 2)
            worst = max(worst, abs(d - x))
    return [CheckResult("small-x reduction", "rydberg effective", worst < 1e-12, f"| ||J - J_kcm|| - x | <= {worst:.1e}")]


def within_fraction(mean, err, exact, n_traj, spread=1.0):
    """Fraction of grid points where ``|mean - exact| <= 3 SE + 3 spread / n_traj``.

    The second term is the rule-of-three resolution of an ``n_traj`` sample: once
    nearly every trajectory has settled the sample spread collapses and the
    standard error no longer bounds the contribution of unsampled rare paths.
    """
    ok = np.abs(mean - exact) <= 3.0 * err + 3.0 * spread / n_traj
    return float(ok.mean())


def check_unraveling(n, n_traj, seed=2024):
    out = []
    times = log_time_grid(1e-1, 1e3, 30)
    for kind in (ConstraintKind.EAST, ConstraintKind.FA):
        spec = _quantum_spec(kind, n, np.pi / 2, ratio=0.1)
        ops = mz.quantum_jump_operators(spec)
        init = PureState.from_configuration(SpinConfiguration((1,) * n))
        res = quantum_ensemble(ops, init, times[-1], n_traj, seed, times)
        rho0 = np.outer(init.amplitudes, init.amplitudes.conj())
        rhos = lindblad_solve_dense(ops, rho0, times, n)
        exact_n = np.real(np.einsum("tii,i->t", rhos, mean_occupation(n)))
        sx = sum(dense_matrix_of(LocalOperator(k, SIGMA_X), n) for k in range(n)) / n
        exact_x = expectation(rhos, sx)
        f_n = within_fraction(res.density.values, res.density.stderr, exact_n, n_traj)
        f_x = within_fraction(res.sigma_x.values, res.sigma_x.stderr, exact_x, n_traj, spread=2.0)
        out.append(CheckResult("trajectories vs dense Lindblad", f"quantum {kind.value}", min(f_n, f_x) >= 0.95,
                               f"within 3 SE: density {f_n:.0%}, sigma_x {f_x:.0%} ({n_traj} trajectories)"))
    return out


def check_gillespie(n, n_traj, seed=7):
    out = []
    times = log_time_grid(1e-1, 1e3, 30)
    for kind in (ConstraintKind.EAST, ConstraintKind.FA, ConstraintKind.EXCLUDED_VOLUME):
        spec = mz.ClassicalKCMSpec.from_ratio(1.0, 0.1, ConstraintSpec(kind, Boundary.PERIODIC), n)
        init = SpinConfiguration((1,) + (0,) * (n - 1))
        res = classical_ensemble(spec, init, times[-1], n_traj, seed, times)
        p0 = np.zeros(2**n)
        p0[init.index] = 1.0
        exact = distribution_density(evolve_distribution(build_master_operator(spec), p0, times), n)
        frac = within_fraction(res.density.values, res.density.stderr, exact, n_traj)
        out.append(CheckResult("Gillespie vs master equation", kind.value, frac >= 0.95,
                               f"within 3 SE at {frac:.0%} of grid points ({n_traj} trajectories)"))
    return out


def check_three_level(x=1.0):
    spec = mz.RydbergSpec.three_level(x, 1, omega_c=1.0, gamma=20.0, v=400.0)
    t = linear_time_grid(10.0, 41)
    rhos = three_level_lindblad(spec, three_level_ground_state(1), t * spec.time_unit)
    pop = rydberg_population(rhos, 1)
    ref = rydberg_quantum_density(t, x)
    rel = float(np.max(np.abs(pop - ref)) / ref[-1])
    return [CheckResult("three-level vs effective model", "rydberg three-level", rel < 0.05,
                        f"max deviation {rel:.2%} of the stationary value (gamma/omega_c = 20)")]


def run_checks(level: str = "fast", report: Callable[[str], None] | None = print) -> list[CheckResult]:
    if level not in ("fast", "full"):
        raise ValueError("level must be fast or full")
    full = level == "full"
    steps = [
        lambda: check_hermitian_form(4),
        lambda: check_dark_states(6 if full else 4),
        lambda: check_diagonal_matching(4),
        lambda: check_lindblad_stationarity(4 if full else 3),
        check_single_spin_formulas,
        check_small_x_reduction,
        lambda: check_gillespie(6 if full else 4, 10_000 if full else 1_000),
        lambda: check_unraveling(4 if full else 3, 10_000 if full else 1_000),
    ]
    if full:
        steps.append(check_three_level)
    results = []
    for step in steps:
        for res in step():
            results.append(res)
            if report is not None:
                report(res.line())
    return results
