import numpy as np
import pytest
from scipy.linalg import expm

from qkcm import model_zoo as mz
from qkcm.classical_engine import (
    build_master_operator,
    classical_ensemble,
    distribution_density,
    evolve_distribution,
    gillespie_trajectory,
    stochastic_propagator,
)
from qkcm.errors import OracleCapError
from qkcm.quantum_engine import log_time_grid
from qkcm.reference import classical_density
from qkcm.spin_space import Boundary, ConstraintKind, ConstraintSpec, SpinConfiguration


def spec(kind, n, kappa=0.3, lam=1.0, boundary=Boundary.PERIODIC):
    return mz.ClassicalKCMSpec(lam, kappa, ConstraintSpec(kind, boundary), n)


def test_single_spin_master_operator():
    w = build_master_operator(spec(ConstraintKind.UNCONSTRAINED, 1))
    np.testing.assert_allclose(w.matrix, [[-0.3, 0.7], [0.3, -0.7]], atol=1e-15)


def test_east_all_down_column_is_zero():
    w = build_master_operator(spec(ConstraintKind.EAST, 2))
    assert np.all(w.matrix[:, 0] == 0)


@pytest.mark.parametrize("kind", list(ConstraintKind))
def test_master_operator_invariants(kind):
    for n in (1, 3, 5):
        w = build_master_operator(spec(kind, n))
        assert np.max(np.abs(w.column_sums())) < 1e-13
        off = w.matrix - np.diag(np.diag(w.matrix))
        assert off.min() >= 0
        assert np.max(np.abs(w.matrix @ w.p_eq)) < 1e-12


def test_master_operator_cap():
    with pytest.raises(OracleCapError):
        build_master_operator(spec(ConstraintKind.EAST, 13))


def test_detailed_balance_fluxes_small_chains():
    for kind in ConstraintKind:
        for n in (1, 2, 3):
            s = spec(kind, n)
            rates = mz.rate_matrix(s)
            p = mz.classical_equilibrium(s)
            flux = p[:, None] * rates - (p[:, None] * rates).T
            assert np.max(np.abs(flux)) < 1e-13


@pytest.mark.parametrize("method", ["rk45", "eigen", "expm"])
def test_single_spin_relaxation(method):
    kappa = 1 / 101
    w = build_master_operator(spec(ConstraintKind.UNCONSTRAINED, 1, kappa=kappa))
    t = np.linspace(0, 5, 11)
    probs = evolve_distribution(w, np.array([0.0, 1.0]), t, method)
    np.testing.assert_allclose(probs[:, 1], classical_density(t, 1.0, kappa, 1.0), atol=1e-7)
    np.testing.assert_array_equal(probs[0], [0.0, 1.0])
    assert probs[2, 1] == pytest.approx(1 / 101 + 100 / 101 * np.exp(-1), abs=1e-7)


def test_east_three_sites_reaches_sector_equilibrium():
    s = spec(ConstraintKind.EAST, 3, kappa=0.2)
    w = build_master_operator(s)
    p0 = np.zeros(8)
    p0[7] = 1.0
    p = evolve_distribution(w, p0, [0.0, 500.0], method="eigen")[-1]
    sector = w.p_eq.copy()
    sector[0] = 0.0
    sector /= sector.sum()
    np.testing.assert_allclose(p, sector, atol=1e-6)


def test_evolve_rejects_bad_input():
    w = build_master_operator(spec(ConstraintKind.UNCONSTRAINED, 1))
    with pytest.raises(ValueError):
        evolve_distribution(w, np.array([0.5, 0.6]), [0, 1])
    with pytest.raises(ValueError):
        evolve_distribution(w, np.array([0.5, 0.5]), [1, 0])


def test_gillespie_is_deterministic_and_valid():
    s = spec(ConstraintKind.FA, 6, kappa=0.2)
    init = SpinConfiguration((1, 0, 1, 0, 0, 1))
    a = gillespie_trajectory(s, init, 50.0, seed=(4, 2))
    b = gillespie_trajectory(s, init, 50.0, seed=(4, 2))
    np.testing.assert_array_equal(a.event_times, b.event_times)
    assert np.all(np.diff(a.event_times) > 0)
    config = init
    for t, k, direction in a.events:
        assert s.constraint.evaluate(k, config.sites) == 1
        assert (direction is mz.Direction.UP) == (config.sites[k] == 0)
        config = config.flipped(k)


def test_gillespie_absorbing_east_vacuum():
    tr = gillespie_trajectory(spec(ConstraintKind.EAST, 4), SpinConfiguration((0,) * 4), 10.0, seed=1)
    assert tr.event_times.size == 0
    assert tr.halted


def test_first_up_time_is_exponential():
    kappa = 0.25
    s = spec(ConstraintKind.UNCONSTRAINED, 1, kappa=kappa)
    firsts = []
    for i in range(4000):
        tr = gillespie_trajectory(s, SpinConfiguration((0,)), 200.0, seed=(11, i))
        firsts.append(tr.event_times[0])
    firsts = np.array(firsts)
    se = firsts.std(ddof=1) / np.sqrt(firsts.size)
    assert abs(firsts.mean() - 1 / kappa) < 3 * se


def test_single_trajectory_has_no_stderr():
    res = classical_ensemble(spec(ConstraintKind.EAST, 3), SpinConfiguration((1, 1, 1)), 5.0, 1)
    assert res.density.stderr is None
    assert res.site_density_stderr is None


def test_ensemble_thread_count_does_not_change_results():
    s = spec(ConstraintKind.FA, 4)
    init = SpinConfiguration((1, 1, 1, 1))
    a = classical_ensemble(s, init, 20.0, 40, master_seed=3, n_jobs=1)
    b = classical_ensemble(s, init, 20.0, 40, master_seed=3, n_jobs=4)
    np.testing.assert_array_equal(a.density.values, b.density.values)


@pytest.mark.parametrize("kind", [ConstraintKind.EAST, ConstraintKind.FA, ConstraintKind.EXCLUDED_VOLUME,
                                  ConstraintKind.UNCONSTRAINED])
def test_gillespie_matches_master_equation(kind):
    n = 5
    s = spec(kind, n, kappa=0.2)
    init = SpinConfiguration((1, 1, 0, 1, 1)) if kind is not ConstraintKind.EXCLUDED_VOLUME else SpinConfiguration((1, 0, 1, 0, 0))
    times = log_time_grid(1e-1, 100.0, 25)
    res = classical_ensemble(s, init, times[-1], 3000, master_seed=17, sample_times=times)
    p0 = np.zeros(2**n)
    p0[init.index] = 1.0
    exact = distribution_density(evolve_distribution(build_master_operator(s), p0, times), n)
    z_ok = np.abs(res.density.values - exact) <= 3 * res.density.stderr + 3.0 / 3000
    assert z_ok.mean() >= 0.95


def test_stochastic_propagator_matches_expm():
    w = build_master_operator(spec(ConstraintKind.FA, 4))
    for dt in (0.0, 1e-3, 0.7, 25.0):
        np.testing.assert_allclose(stochastic_propagator(w.matrix, dt), expm(w.matrix * dt), atol=1e-12)


def test_stochastic_propagator_stays_stochastic_at_long_horizons():
    w = build_master_operator(spec(ConstraintKind.EAST, 6, kappa=1e-3))
    prop = stochastic_propagator(w.matrix, 1e14)
    assert prop.min() >= 0
    assert np.max(np.abs(prop.sum(axis=0) - 1.0)) < 1e-12
    nonvac = w.p_eq.copy()
    nonvac[0] = 0.0
    np.testing.assert_allclose(prop[:, -1], nonvac / nonvac.sum(), atol=1e-9)
