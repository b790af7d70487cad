import numpy as np
import pytest
import scipy.sparse as sp

from qkcm import model_zoo as mz
from qkcm.errors import NumericalError, OracleCapError
from qkcm.lindblad import (
    generator_action,
    lindblad_solve_dense,
    liouvillian,
    restrict_to_subspace,
    rydberg_blockade_dynamics,
    rydberg_population,
    stationary_state,
    three_level_ground_state,
    three_level_lindblad,
    three_level_operators,
    validate_density_matrix,
)
from qkcm.spin_space import Boundary, ConstraintKind, ConstraintSpec, dense_matrix_of


def kcm(kind, n, theta, ratio=0.01):
    return mz.QuantumKCMSpec.from_ratio(1.0, ratio, ConstraintSpec(kind, Boundary.PERIODIC), n, theta)


def test_liouvillian_matches_rhs():
    rng = np.random.default_rng(0)
    mats = [rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(2)]
    h = rng.normal(size=(3, 3))
    h = h + h.T
    rho = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    lv = liouvillian(mats, h)
    direct = -1j * (h @ rho - rho @ h)
    for j in mats:
        jd = j.conj().T
        direct += j @ rho @ jd - 0.5 * (jd @ j @ rho + rho @ jd @ j)
    np.testing.assert_allclose((lv @ rho.reshape(-1)).reshape(3, 3), direct, atol=1e-12)


@pytest.mark.parametrize("method", ["expm", "ode", "krylov"])
def test_methods_agree_and_preserve_trace(method):
    spec = kcm(ConstraintKind.FA, 3, np.pi / 3, ratio=0.2)
    ops = mz.quantum_jump_operators(spec)
    rho0 = np.zeros((8, 8))
    rho0[7, 7] = 1.0
    t = np.linspace(0.0, 20.0, 9)
    ref = lindblad_solve_dense(ops, rho0, t, 3, method="expm")
    got = lindblad_solve_dense(ops, rho0, t, 3, method=method)
    np.testing.assert_allclose(got, ref, atol=1e-7)
    np.testing.assert_allclose(np.trace(got, axis1=1, axis2=2), 1.0, atol=1e-10)


@pytest.mark.parametrize("kind", [ConstraintKind.EAST, ConstraintKind.FA])
def test_stationary_state_does_not_drift(kind):
    for n in (2, 4, 6):
        spec = kcm(kind, n, np.pi / 4)
        s = mz.stationary_product_state(spec).amplitudes
        rho = np.outer(s, s.conj())
        rhos = lindblad_solve_dense(mz.quantum_jump_operators(spec), rho, [0.0, 100.0], n)
        assert np.max(np.abs(rhos[-1] - rho)) < 1e-9


def test_theta_zero_has_maximally_mixed_stationary_state():
    spec = kcm(ConstraintKind.UNCONSTRAINED, 1, 0.0)
    drift = generator_action(mz.quantum_jump_operators(spec), np.eye(2) / 2, 1)
    assert np.max(np.abs(drift)) < 1e-10


def test_validate_density_matrix():
    validate_density_matrix(np.eye(2) / 2)
    with pytest.raises(NumericalError):
        validate_density_matrix(np.diag([1.2, -0.2]))
    with pytest.raises(NumericalError):
        validate_density_matrix(np.array([[0.5, 0.1], [0.0, 0.5]]))


def test_dense_cap():
    spec = kcm(ConstraintKind.EAST, 10, np.pi / 2)
    with pytest.raises(OracleCapError):
        lindblad_solve_dense(mz.quantum_jump_operators(spec), np.eye(1024) / 1024, [0.0, 1.0], 10)


def test_three_level_without_probe_keeps_ground_state():
    spec = mz.RydbergSpec.three_level(1e-12, 2, omega_c=1.0, gamma=20.0, v=400.0)
    h, jumps = three_level_operators(spec)
    assert h.shape == (9, 9) and len(jumps) == 2
    rhos = three_level_lindblad(spec, three_level_ground_state(2), [0.0, 5.0])
    np.testing.assert_allclose(rydberg_population(rhos, 2), 0.0, atol=1e-12)


def test_three_level_hamiltonian_is_hermitian():
    spec = mz.RydbergSpec.three_level(0.5, 3, omega_c=1.0, gamma=20.0, v=400.0)
    h, _ = three_level_operators(spec)
    assert abs(h - h.conj().T).max() < 1e-14


def test_restriction_detects_leak():
    m = np.zeros((4, 4))
    m[3, 0] = 1.0
    with pytest.raises(NumericalError):
        restrict_to_subspace([m], [0, 1, 2])
    (inside,) = restrict_to_subspace([m], [0, 3])
    np.testing.assert_array_equal(inside.toarray(), [[0, 0], [1, 0]])


def test_blockade_subspace_is_invariant():
    spec = mz.RydbergSpec(0.7, 5)
    basis = mz.blockade_configurations(5)
    mats = [sp.csr_matrix(dense_matrix_of(op, 5)) for op in mz.rydberg_jump_operators(spec)]
    restrict_to_subspace(mats, basis)
    restrict_to_subspace([m.conj().T for m in mats], basis)


def test_stationary_state_single_atom():
    x = 0.6
    (m,) = [dense_matrix_of(op, 1) for op in mz.rydberg_jump_operators(mz.RydbergSpec(x, 1))]
    rho = stationary_state([m])
    dark = np.array([1.0, x]) / np.sqrt(1 + x**2)
    np.testing.assert_allclose(rho, np.outer(dark, dark), atol=1e-12)


def test_blockade_dynamics_matches_full_space():
    n, x = 4, 0.8
    spec = mz.RydbergSpec(x, n)
    t = np.linspace(0.0, 30.0, 7)
    res = rydberg_blockade_dynamics(spec, t, method="expm")
    rho0 = np.zeros((16, 16))
    rho0[0, 0] = 1.0
    full = lindblad_solve_dense(mz.rydberg_jump_operators(spec), rho0, t, n)
    dens = np.real(np.einsum("tii->ti", full)) @ (np.arange(16)[:, None] >> np.arange(n) & 1).mean(axis=1)
    np.testing.assert_allclose(res.density, dens, atol=1e-9)
    assert res.basis.size == 8
    assert 0 < res.stationary_density < x**2 / (1 + x**2)
