import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkcm.errors import DimensionError, NormalizationError, OracleCapError, SiteIndexError
from qkcm.model_zoo import stationary_vector
from qkcm.spin_space import (
    IDENTITY,
    NUMBER,
    SIGMA_MINUS,
    SIGMA_X,
    Boundary,
    ConstraintKind,
    ConstraintSpec,
    LocalOperator,
    OperatorSum,
    PureState,
    SpinConfiguration,
    apply_local_operator,
    dense_matrix_of,
    expectation_diagonal,
    expectation_local,
    mean_occupation,
    site_coherences,
    site_levels,
    site_populations,
)

EAST = ConstraintSpec(ConstraintKind.EAST, Boundary.PERIODIC)


def basis_state(bits):
    return PureState.from_configuration(SpinConfiguration.from_string(bits))


def test_configuration_ordinal_roundtrip():
    for n, d in ((3, 2), (3, 3)):
        for i in range(d**n):
            c = SpinConfiguration.from_index(i, n, d)
            assert c.index == i
    # little-endian: site 0 is least significant
    assert SpinConfiguration.from_string("100").index == 1
    assert SpinConfiguration.from_string("001").index == 4
    assert SpinConfiguration.from_string("grp", local_dim=3).sites == (0, 2, 1)


def test_configuration_rejects_bad_levels():
    with pytest.raises(DimensionError):
        SpinConfiguration((0, 2))
    with pytest.raises(DimensionError):
        SpinConfiguration.from_index(8, 3)


def test_sigma_minus_lowers_single_spin():
    out = apply_local_operator(basis_state("1"), LocalOperator(0, SIGMA_MINUS))
    np.testing.assert_array_equal(out.amplitudes, [1, 0])


def test_east_constraint_annihilates_when_right_neighbour_empty():
    op = LocalOperator(0, SIGMA_MINUS, EAST)
    out = apply_local_operator(basis_state("10"), op)
    assert out.squared_norm == 0.0


def test_east_constraint_on_superposition():
    op = LocalOperator(0, SIGMA_MINUS, EAST)
    amps = (basis_state("11").amplitudes + basis_state("10").amplitudes) / np.sqrt(2)
    out = apply_local_operator(PureState(amps, 2), op)
    expected = basis_state("01").amplitudes / np.sqrt(2)
    np.testing.assert_allclose(out.amplitudes, expected, atol=1e-15)
    assert out.squared_norm == pytest.approx(0.5, abs=1e-15)


def test_apply_leaves_input_untouched():
    state = basis_state("11")
    before = state.amplitudes.copy()
    apply_local_operator(state, LocalOperator(1, SIGMA_MINUS, EAST))
    np.testing.assert_array_equal(state.amplitudes, before)


def test_apply_errors():
    with pytest.raises(SiteIndexError):
        apply_local_operator(basis_state("11"), LocalOperator(2, SIGMA_MINUS))
    three = PureState.from_configuration(SpinConfiguration((0, 0), 3))
    with pytest.raises(DimensionError):
        apply_local_operator(three, LocalOperator(0, SIGMA_MINUS))


def test_identity_operator_is_bitwise_identity():
    rng = np.random.default_rng(1)
    amps = rng.normal(size=16) + 1j * rng.normal(size=16)
    out = LocalOperator(2, IDENTITY).apply(amps, 4)
    assert np.array_equal(out, amps)


def test_expectation_diagonal_examples():
    n = 10
    assert expectation_diagonal(basis_state("1" * 5), mean_occupation(5)) == pytest.approx(1.0)
    kappa = 1 / 101
    s = PureState.product([stationary_vector(kappa)] * n)
    assert expectation_diagonal(s, mean_occupation(n)) == pytest.approx(kappa, abs=1e-14)
    s2 = PureState.product([stationary_vector(0.3)] * 2)
    assert expectation_diagonal(s2, lambda c: c.sites[0] * c.sites[1]) == pytest.approx(0.09, abs=1e-14)


def test_expectation_requires_normalized_state():
    with pytest.raises(NormalizationError):
        expectation_diagonal(PureState([1.0, 1.0], 1), mean_occupation(1))
    with pytest.raises(NormalizationError):
        expectation_local(PureState([1.0, 1.0], 1), LocalOperator(0, NUMBER))


def test_expectation_local_examples():
    kappa = 1 / 101
    s = PureState(stationary_vector(kappa), 1)
    assert expectation_local(s, LocalOperator(0, SIGMA_X)).real == pytest.approx(20 / 101, abs=1e-14)
    assert expectation_local(basis_state("0"), LocalOperator(0, SIGMA_X)) == 0
    plus = PureState(np.array([1, 1]) / np.sqrt(2), 1)
    assert expectation_local(plus, LocalOperator(0, NUMBER)).real == pytest.approx(0.5)


def test_dense_matrix_examples():
    np.testing.assert_array_equal(dense_matrix_of(LocalOperator(0, SIGMA_MINUS), 1), SIGMA_MINUS)
    m = dense_matrix_of(LocalOperator(0, SIGMA_MINUS, EAST), 2)
    assert np.count_nonzero(m) == 1
    assert m[SpinConfiguration.from_string("01").index, SpinConfiguration.from_string("11").index] == 1


def test_dense_matrix_cap():
    with pytest.raises(OracleCapError):
        dense_matrix_of(LocalOperator(0, SIGMA_MINUS), 6, cap=32)


@pytest.mark.parametrize("kind", list(ConstraintKind))
@pytest.mark.parametrize("boundary", list(Boundary))
def test_apply_matches_dense_on_every_basis_vector(kind, boundary):
    rng = np.random.default_rng(5)
    constraint = ConstraintSpec(kind, boundary)
    for n in range(1, 5):
        action = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        for k in range(n):
            op = LocalOperator(k, action, constraint, 0.7 - 0.2j)
            dense = dense_matrix_of(op, n)
            for i in range(2**n):
                e = np.zeros(2**n, dtype=complex)
                e[i] = 1.0
                assert np.max(np.abs(op.apply(e, n) - dense[:, i])) < 1e-12


def test_constraint_rules_and_open_boundary():
    fa = ConstraintSpec(ConstraintKind.FA, Boundary.PERIODIC)
    assert [fa.evaluate(1, s) for s in ((0, 0, 0), (1, 0, 0), (0, 0, 1), (1, 0, 1))] == [0, 1, 1, 1]
    ev_open = ConstraintSpec(ConstraintKind.EXCLUDED_VOLUME, Boundary.OPEN)
    assert ev_open.evaluate(0, (0,)) == 1
    assert ev_open.evaluate(0, (0, 1)) == 0
    east_open = ConstraintSpec(ConstraintKind.EAST, Boundary.OPEN)
    assert east_open.evaluate(2, (1, 1, 0)) == 0  # last site has no right neighbour


def test_constraint_never_reads_own_site():
    for kind in ConstraintKind:
        spec = ConstraintSpec(kind)
        for i in range(8):
            c = SpinConfiguration.from_index(i, 3)
            assert spec.evaluate(1, c.sites) == spec.evaluate(1, c.flipped(1).sites)


def test_excluded_volume_reflection_symmetry():
    spec = ConstraintSpec(ConstraintKind.EXCLUDED_VOLUME, Boundary.OPEN)
    for i in range(2**5):
        s = SpinConfiguration.from_index(i, 5).sites
        for k in range(5):
            assert spec.evaluate(k, s) == spec.evaluate(4 - k, s[::-1])


def test_operator_sum_and_adjoint():
    op = OperatorSum((LocalOperator(0, NUMBER, None, 2.0), LocalOperator(1, SIGMA_MINUS, EAST, -1.0)))
    dense = dense_matrix_of(op, 3)
    np.testing.assert_allclose(dense_matrix_of(op.adjoint(), 3), dense.conj().T, atol=1e-15)


def test_site_observables_match_dense():
    rng = np.random.default_rng(3)
    n = 3
    amps = rng.normal(size=8) + 1j * rng.normal(size=8)
    amps /= np.linalg.norm(amps)
    pops = site_populations(amps, n)
    cohs = site_coherences(amps, n)
    for k in range(n):
        assert pops[k] == pytest.approx(np.sum(np.abs(amps) ** 2 * site_levels(k, n)))
        sx = dense_matrix_of(LocalOperator(k, SIGMA_X), n)
        assert cohs[k] == pytest.approx(np.vdot(amps, sx @ amps).real)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 4),
    site=st.integers(0, 3),
    kind=st.sampled_from(list(ConstraintKind)),
    seed=st.integers(0, 2**16),
)
def test_property_expectation_diagonal_equals_dense(n, site, kind, seed):
    site = site % n
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    state = PureState(amps / np.linalg.norm(amps), n)
    obs = rng.normal(size=2**n)
    dense = np.vdot(state.amplitudes, np.diag(obs) @ state.amplitudes).real
    assert abs(expectation_diagonal(state, obs) - dense) < 1e-12
    op = LocalOperator(site, SIGMA_MINUS, ConstraintSpec(kind))
    assert np.max(np.abs(op.apply(state.amplitudes, n) - dense_matrix_of(op, n) @ state.amplitudes)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_property_squared_norm_synchronized(seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=8) + 1j * rng.normal(size=8)
    state = PureState(amps, 3)
    assert state.squared_norm == pytest.approx(np.sum(np.abs(amps) ** 2), rel=1e-12)
    assert state.normalized().is_normalized()
