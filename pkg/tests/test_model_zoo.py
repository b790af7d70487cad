import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkcm import model_zoo as mz
from qkcm.errors import ConfigError, DetailedBalanceError, NumericalError
from qkcm.spin_space import (
    Boundary,
    ConstraintKind,
    ConstraintSpec,
    PureState,
    SpinConfiguration,
    dense_matrix_of,
    mean_occupation,
    site_levels,
)


def classical(kind, n, kappa=0.5, lam=1.0, boundary=Boundary.PERIODIC):
    return mz.ClassicalKCMSpec(lam, kappa, ConstraintSpec(kind, boundary), n)


def quantum(kind, n, theta, ratio=0.01, boundary=Boundary.PERIODIC):
    return mz.QuantumKCMSpec.from_ratio(1.0, ratio, ConstraintSpec(kind, boundary), n, theta)


def test_spec_validation():
    with pytest.raises(ConfigError):
        classical(ConstraintKind.EAST, 3, kappa=1.0)
    with pytest.raises(ConfigError):
        classical(ConstraintKind.EAST, 3, lam=0.0)
    with pytest.raises(ConfigError):
        quantum(ConstraintKind.EAST, 3, theta=4.0)
    with pytest.raises(ConfigError):
        mz.RydbergSpec(1.0, 2, omega_c=1.0, omega_p=2.0)
    assert mz.kappa_from_ratio(0.01) == pytest.approx(1 / 101)


def test_classical_transitions_examples():
    spec = classical(ConstraintKind.EAST, 3)
    out = mz.classical_transitions(spec, SpinConfiguration.from_string("110"))
    assert [(t.site, t.direction, t.rate) for t in out] == [(0, mz.Direction.DOWN, 0.5), (2, mz.Direction.UP, 0.5)]
    single = classical(ConstraintKind.UNCONSTRAINED, 1, kappa=0.3)
    out = mz.classical_transitions(single, SpinConfiguration((0,)))
    assert [(t.site, t.direction, t.rate) for t in out] == [(0, mz.Direction.UP, 0.3)]
    assert mz.classical_transitions(spec, SpinConfiguration.from_string("000")) == []


def test_jump_operator_annihilates_stationary_single_spin():
    for theta in (0.0, 0.3, np.pi / 2, 2.5):
        spec = quantum(ConstraintKind.UNCONSTRAINED, 1, theta)
        (op,) = mz.quantum_jump_operators(spec)
        s = mz.stationary_vector(spec.kappa)
        assert np.linalg.norm(op.apply(s, 1)) < 1e-15


def test_theta_zero_operator_is_hermitian_projector():
    spec = quantum(ConstraintKind.UNCONSTRAINED, 1, 0.0, ratio=0.3)
    m = dense_matrix_of(mz.quantum_jump_operators(spec)[0], 1)
    np.testing.assert_allclose(m, m.conj().T, atol=1e-15)
    np.testing.assert_allclose(m @ m, m, atol=1e-15)


def test_rotation_maps_bright_to_stationary():
    kappa = 0.2
    b, s = mz.bright_vector(kappa), mz.stationary_vector(kappa)
    for theta in (0.1, np.pi / 4, np.pi / 2):
        np.testing.assert_allclose(mz.rotation(theta) @ b, np.sin(theta) * s + np.cos(theta) * b, atol=1e-14)
    assert abs(np.vdot(b, s)) < 1e-16


@pytest.mark.parametrize("kind", [ConstraintKind.UNCONSTRAINED, ConstraintKind.EAST, ConstraintKind.FA])
@pytest.mark.parametrize("theta", [np.pi / 20, np.pi / 4, np.pi / 2])
def test_stationary_product_state_is_dark(kind, theta):
    for n in range(1, 11):
        spec = quantum(kind, n, theta)
        s = mz.stationary_product_state(spec)
        worst = max(np.linalg.norm(op.apply(s.amplitudes, n)) for op in mz.quantum_jump_operators(spec))
        assert worst < 1e-12


def test_stationary_product_state_observables():
    spec = quantum(ConstraintKind.EAST, 10, np.pi / 2)
    s = mz.stationary_product_state(spec)
    probs = np.abs(s.amplitudes) ** 2
    assert probs @ mean_occupation(10) == pytest.approx(1 / 101, abs=1e-14)
    assert probs @ (site_levels(2, 10) * site_levels(7, 10)) == pytest.approx((1 / 101) ** 2, abs=1e-14)


def test_all_down_is_also_dark_for_east():
    spec = quantum(ConstraintKind.EAST, 4, np.pi / 3)
    vac = PureState.from_configuration(SpinConfiguration((0,) * 4))
    assert max(np.linalg.norm(op.apply(vac.amplitudes, 4)) for op in mz.quantum_jump_operators(spec)) == 0


def test_rydberg_single_site_form_and_dark_state():
    x = 0.7
    spec = mz.RydbergSpec(x, 1)
    m = dense_matrix_of(mz.rydberg_jump_operators(spec)[0], 1)
    np.testing.assert_allclose(m, [[x, -1], [0, 0]], atol=1e-15)
    dark = np.array([1.0, x]) / np.sqrt(1 + x**2)
    assert np.linalg.norm(m @ dark) < 1e-15
    assert abs(dark[1]) ** 2 == pytest.approx(x**2 / (1 + x**2))


@pytest.mark.parametrize("x", [1e-3, 1e-2, 1e-1, 1.0])
def test_rydberg_small_x_distance_is_x(x):
    spec = mz.RydbergSpec(x, 3)
    for a, b in zip(mz.rydberg_jump_operators(spec), mz.rydberg_kcm_form(spec)):
        d = np.linalg.norm(dense_matrix_of(a, 3) - dense_matrix_of(b, 3), 2)
        assert abs(d - x) < 1e-12


def test_classical_equilibrium_examples():
    p = mz.classical_equilibrium(classical(ConstraintKind.EAST, 2, kappa=0.5))
    np.testing.assert_allclose(p, 0.25)
    p = mz.classical_equilibrium(classical(ConstraintKind.UNCONSTRAINED, 1, kappa=1 / 101))
    np.testing.assert_allclose(p, [100 / 101, 1 / 101])
    spec = classical(ConstraintKind.EAST, 4, kappa=0.2)
    rates = mz.rate_matrix(spec)
    p = mz.classical_equilibrium(spec)
    assert mz.check_detailed_balance(rates, p, tol=1e-14) < 1e-14


def test_detailed_balance_violation_names_pair():
    rates = np.array([[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(DetailedBalanceError) as err:
        mz.check_detailed_balance(rates, np.array([0.5, 0.5]))
    assert err.value.pair in ((0, 1), (1, 0))


def test_generic_single_spin():
    lam, kappa = 1.3, 0.3
    rates = np.array([[0.0, lam * kappa], [lam * (1 - kappa), 0.0]])
    p_eq = np.array([1 - kappa, kappa])
    jumps = mz.generic_jump_operators(rates, np.array([1.0, 0.0]), p_eq)
    assert len(jumps) == 2
    h = 0.5 * sum(j.matrix.conj().T @ j.matrix for j in jumps)
    np.testing.assert_allclose(np.linalg.eigvalsh(h), [0.0, lam], atol=1e-14)
    expected = lam * np.array([[kappa, -np.sqrt(kappa * (1 - kappa))], [-np.sqrt(kappa * (1 - kappa)), 1 - kappa]])
    np.testing.assert_allclose(mz.hermitian_form(rates, p_eq), expected, atol=1e-14)
    gs = np.sqrt(p_eq)
    for j in jumps:
        assert np.linalg.norm(j.matrix @ gs) < 1e-15


def test_generic_skips_zero_rate_pairs():
    rates = mz.rate_matrix(classical(ConstraintKind.EAST, 3))
    jumps = mz.generic_jump_operators(rates, np.eye(8)[0])
    assert len(jumps) == np.count_nonzero(rates)


@pytest.mark.parametrize("kind", [ConstraintKind.UNCONSTRAINED, ConstraintKind.EAST, ConstraintKind.FA,
                                  ConstraintKind.EXCLUDED_VOLUME])
def test_hermitian_form_ground_state_and_spectrum(kind):
    for n in range(2, 7):
        spec = classical(kind, n, kappa=0.3)
        rates = mz.rate_matrix(spec)
        p_eq = mz.classical_equilibrium(spec)
        h = mz.hermitian_form(rates, p_eq)
        assert np.max(np.abs(h @ np.sqrt(p_eq))) < 1e-10
        if n <= 4:
            w = rates.T - np.diag(rates.sum(axis=1))
            np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(h)), np.sort(np.linalg.eigvals(-w).real), atol=1e-10)


def test_hermitian_form_detects_mismatch(monkeypatch):
    spec = classical(ConstraintKind.FA, 3, kappa=0.3)
    rates, p_eq = mz.rate_matrix(spec), mz.classical_equilibrium(spec)
    monkeypatch.setattr(mz, "similarity_transform", lambda r, p: -np.diag(r.sum(axis=1)))
    with pytest.raises(NumericalError):
        mz.hermitian_form(rates, p_eq)


def test_generic_construction_reproduces_site_operators():
    # with |psi> = U|B> placed on the flipped site, the pair operators of one site
    # add up (as 1/2 sum J^dag J) to J_k^dag J_k of the per-site construction
    n, kappa, theta = 3, 0.25, 0.8
    spec = mz.QuantumKCMSpec(1.0, kappa, ConstraintSpec(ConstraintKind.EAST), n, theta)
    rates = mz.rate_matrix(spec.classical())
    ub = mz.rotation(theta) @ mz.bright_vector(kappa)
    for k, op in enumerate(mz.quantum_jump_operators(spec)):
        jk = dense_matrix_of(op, n)

        def target(c, c2, k=k):
            base = SpinConfiguration.from_index(c, n)
            vec = np.zeros(2**n, dtype=complex)
            for level in (0, 1):
                sites = list(base.sites)
                sites[k] = level
                vec[SpinConfiguration(tuple(sites)).index] = ub[level]
            return vec

        flips = np.zeros_like(rates)
        for c in range(2**n):
            c2 = SpinConfiguration.from_index(c, n).flipped(k).index
            flips[c, c2] = rates[c, c2]
        jumps = mz.generic_jump_operators(flips, target)
        h = 0.5 * sum(j.matrix.conj().T @ j.matrix for j in jumps)
        np.testing.assert_allclose(h, jk.conj().T @ jk, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 5),
    ratio=st.floats(1e-3, 10.0),
    theta=st.floats(0.0, np.pi),
    kind=st.sampled_from([ConstraintKind.UNCONSTRAINED, ConstraintKind.EAST, ConstraintKind.FA]),
)
def test_property_generator_is_psd_with_dark_kernel(n, ratio, theta, kind):
    spec = quantum(kind, n, theta, ratio)
    g = mz.jump_generator_dense(mz.quantum_jump_operators(spec), n)
    assert np.max(np.abs(g - g.conj().T)) < 1e-12
    assert np.linalg.eigvalsh(g)[0] > -1e-12
    s = mz.stationary_product_state(spec).amplitudes
    assert np.linalg.norm(g @ s) < 1e-12


def test_blockade_configurations():
    open_ = mz.blockade_configurations(8)
    assert open_.size == 55
    periodic = mz.blockade_configurations(8, Boundary.PERIODIC)
    assert periodic.size == 47
    assert all((c & (c >> 1)) == 0 for c in open_)
