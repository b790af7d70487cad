"""Classical rates and quantum jump operators for the constrained spin models.

Covers the classical KCMs (single-spin-flip rates gated by a constraint), their
purely dissipative quantum counterparts with one jump operator per site, the
effective Rydberg/EIT jump operators, and the generic detailed-balance
construction with its Hermitian-form check.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, DetailedBalanceError, DimensionError, NumericalError, OracleCapError
from .spin_space import (
    GROUND_PROJECTOR,
    ORACLE_CAP,
    SIGMA_MINUS,
    SIGMA_Y,
    Boundary,
    ConstraintKind,
    ConstraintSpec,
    LocalOperator,
    OperatorSum,
    PureState,
    SpinConfiguration,
    dense_matrix_of,
)

__all__ = [
    "Boundary",
    "ConstraintKind",
    "ConstraintSpec",
    "ClassicalKCMSpec",
    "QuantumKCMSpec",
    "RydbergSpec",
    "Direction",
    "ClassicalTransition",
    "kappa_from_ratio",
    "bright_vector",
    "stationary_vector",
    "rotation",
    "classical_transitions",
    "quantum_jump_operators",
    "rydberg_jump_operators",
    "rydberg_kcm_form",
    "generic_jump_operators",
    "hermitian_form",
    "similarity_transform",
    "stationary_product_state",
    "classical_equilibrium",
    "rate_matrix",
    "check_detailed_balance",
]

DETAILED_BALANCE_TOL = 1e-10


def kappa_from_ratio(ratio: float) -> float:
    """Occupation ``kappa`` from ``kappa / (1 - kappa)``."""
    if ratio <= 0:
        raise ConfigError(f"kappa ratio must be positive, got {ratio}")
    return ratio / (1.0 + ratio)


@dataclass(frozen=True)
class ClassicalKCMSpec:
    lam: float
    kappa: float
    constraint: ConstraintSpec
    n_sites: int

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"rate lambda must be positive, got {self.lam}")
        if not 0 < self.kappa < 1:
            raise ConfigError(f"kappa must lie strictly inside (0, 1), got {self.kappa}")
        if self.n_sites < 1:
            raise ConfigError(f"n_sites must be positive, got {self.n_sites}")

    @property
    def boundary(self) -> Boundary:
        return self.constraint.boundary

    @classmethod
    def from_ratio(cls, lam, kappa_ratio, constraint, n_sites):
        return cls(lam, kappa_from_ratio(kappa_ratio), constraint, n_sites)


@dataclass(frozen=True, eq=False)
class QuantumKCMSpec(ClassicalKCMSpec):
    """Quantum KCM; ``unitary`` overrides the default ``exp(i theta sigma^y)``."""

    theta: float = np.pi / 2
    unitary: np.ndarray | None = None

    def __post_init__(self):
        super().__post_init__()
        if not 0 <= self.theta <= np.pi:
            raise ConfigError(f"theta must lie in [0, pi], got {self.theta}")
        if self.unitary is not None:
            u = np.asarray(self.unitary, dtype=complex)
            if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=1e-12):
                raise ConfigError("unitary must be a 2x2 unitary matrix")

    @classmethod
    def from_ratio(cls, lam, kappa_ratio, constraint, n_sites, theta=np.pi / 2):
        return cls(lam, kappa_from_ratio(kappa_ratio), constraint, n_sites, theta)

    def classical(self) -> ClassicalKCMSpec:
        return ClassicalKCMSpec(self.lam, self.kappa, self.constraint, self.n_sites)


@dataclass(frozen=True)
class RydbergSpec:
    """EIT Rydberg chain.

    ``x = omega_p / omega_c``. The three-level fields are optional and only
    needed by the full three-level solver; when they are given ``x`` must be
    consistent with them.
    """

    x: float
    n_sites: int
    boundary: Boundary = Boundary.OPEN
    omega_c: float | None = None
    omega_p: float | None = None
    gamma: float | None = None
    v: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if not self.x > 0:
            raise ConfigError(f"x must be positive, got {self.x}")
        if self.n_sites < 1:
            raise ConfigError(f"n_sites must be positive, got {self.n_sites}")
        for name in ("omega_c", "omega_p", "gamma", "v"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.omega_c is not None and self.omega_p is not None:
            if not np.isclose(self.x, self.omega_p / self.omega_c, rtol=1e-12, atol=0):
                raise ConfigError(f"x={self.x} inconsistent with omega_p/omega_c={self.omega_p / self.omega_c}")

    @classmethod
    def three_level(cls, x, n_sites, omega_c, gamma, v, boundary=Boundary.OPEN):
        return cls(x, n_sites, boundary, omega_c, x * omega_c, gamma, v)

    @property
    def has_three_level(self) -> bool:
        return None not in (self.omega_c, self.omega_p, self.gamma, self.v)

    @property
    def kappa(self) -> float:
        """Occupation of the equivalent KCM, from ``kappa / (1 - kappa) = x**2``."""
        return self.x**2 / (1.0 + self.x**2)

    @property
    def time_unit(self) -> float:
        """Bare time corresponding to one rescaled time unit, ``gamma / (4 omega_c**2)``."""
        if self.gamma is None or self.omega_c is None:
            raise ConfigError("time unit needs gamma and omega_c")
        return self.gamma / (4.0 * self.omega_c**2)

    def excluded_volume_classical(self, lam: float = 1.0) -> ClassicalKCMSpec:
        """Classical hard-rod model with the matching equilibrium ratio."""
        return ClassicalKCMSpec(
            lam, self.kappa, ConstraintSpec(ConstraintKind.EXCLUDED_VOLUME, self.boundary), self.n_sites
        )


class Direction(str, enum.Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class ClassicalTransition:
    site: int
    direction: Direction
    rate: float


def classical_transitions(spec: ClassicalKCMSpec, config: SpinConfiguration) -> list[ClassicalTransition]:
    """Allowed single-spin flips out of ``config`` with their rates, ordered by site."""
    if config.n_sites != spec.n_sites or config.local_dim != 2:
        raise DimensionError(
            f"configuration with {config.n_sites} sites (local_dim={config.local_dim}) "
            f"does not match a {spec.n_sites}-site two-level model"
        )
    out = []
    for k, level in enumerate(config.sites):
        if not spec.constraint.evaluate(k, config.sites):
            continue
        if level == 0:
            out.append(ClassicalTransition(k, Direction.UP, spec.lam * spec.kappa))
        else:
            out.append(ClassicalTransition(k, Direction.DOWN, spec.lam * (1.0 - spec.kappa)))
    return out


def bright_vector(kappa: float) -> np.ndarray:
    """``|B> = sqrt(kappa)|0> - sqrt(1-kappa)|1>``, orthogonal to :func:`stationary_vector`."""
    return np.array([np.sqrt(kappa), -np.sqrt(1.0 - kappa)], dtype=complex)


def stationary_vector(kappa: float) -> np.ndarray:
    """``|S> = sqrt(1-kappa)|0> + sqrt(kappa)|1>``."""
    return np.array([np.sqrt(1.0 - kappa), np.sqrt(kappa)], dtype=complex)


def rotation(theta: float) -> np.ndarray:
    """``exp(i theta sigma^y)``; maps ``|B>`` to ``sin(theta)|S> + cos(theta)|B>``."""
    return expm(1j * theta * SIGMA_Y)


def quantum_jump_operators(spec: QuantumKCMSpec) -> list[LocalOperator]:
    """One jump operator per site: ``sqrt(lam) U |B><B| f_k``."""
    b = bright_vector(spec.kappa)
    u = rotation(spec.theta) if spec.unitary is None else np.asarray(spec.unitary, dtype=complex)
    action = u @ np.outer(b, b.conj())
    return [
        LocalOperator(k, action, spec.constraint, np.sqrt(spec.lam))
        for k in range(spec.n_sites)
    ]


def rydberg_jump_operators(spec: RydbergSpec) -> list[OperatorSum]:
    """``J_k = x p_k - p_{k-1} sigma^-_k p_{k+1}`` in rescaled time units."""
    constraint = ConstraintSpec(ConstraintKind.EXCLUDED_VOLUME, spec.boundary)
    return [
        OperatorSum(
            (
                LocalOperator(k, GROUND_PROJECTOR, None, spec.x),
                LocalOperator(k, SIGMA_MINUS, constraint, -1.0),
            )
        )
        for k in range(spec.n_sites)
    ]


def rydberg_kcm_form(spec: RydbergSpec) -> list[LocalOperator]:
    """Small-x limit of the Rydberg jumps: ``sqrt(1+x^2) |0_k><B_k| p_{k-1} p_{k+1}``.

    This is a quantum KCM with excluded-volume constraint, ``kappa/(1-kappa) = x**2``,
    ``lam = 1 + x**2`` and a unitary taking ``|B>`` to ``|0>``.
    """
    b = bright_vector(spec.kappa)
    action = np.outer([1.0, 0.0], b.conj())
    constraint = ConstraintSpec(ConstraintKind.EXCLUDED_VOLUME, spec.boundary)
    return [LocalOperator(k, action, constraint, np.sqrt(1.0 + spec.x**2)) for k in range(spec.n_sites)]


# ---------------------------------------------------------------------------
# generic detailed-balance construction (dense, oracle scale)


def rate_matrix(spec: ClassicalKCMSpec, cap: int = ORACLE_CAP) -> np.ndarray:
    """Rate table ``rates[c, c2] = W_{c -> c2}`` over basis ordinals (zero diagonal)."""
    dim = 2**spec.n_sites
    if dim > cap:
        raise OracleCapError(f"state space {dim} exceeds oracle cap {cap}")
    rates = np.zeros((dim, dim))
    for c in range(dim):
        config = SpinConfiguration.from_index(c, spec.n_sites)
        for tr in classical_transitions(spec, config):
            rates[c, c ^ (1 << tr.site)] += tr.rate
    return rates


def check_detailed_balance(rates: np.ndarray, p_eq: np.ndarray, tol: float = DETAILED_BALANCE_TOL) -> float:
    """Largest flux imbalance ``|p(c) W_{c->c2} - p(c2) W_{c2->c}|``; raises above ``tol``."""
    flux = p_eq[:, None] * rates
    residual = np.abs(flux - flux.T)
    worst = np.unravel_index(np.argmax(residual), residual.shape)
    if residual[worst] > tol:
        raise DetailedBalanceError((int(worst[0]), int(worst[1])), float(residual[worst]))
    return float(residual[worst])


@dataclass(frozen=True, eq=False)
class DenseJump:
    """Jump operator of the generic construction for one ordered pair ``(c, c2)``."""

    pair: tuple[int, int]
    matrix: np.ndarray


def generic_jump_operators(
    rates: np.ndarray,
    psi: Union[np.ndarray, PureState, Callable[[int, int], np.ndarray]],
    p_eq: np.ndarray | None = None,
) -> list[DenseJump]:
    """``J = |psi>(sqrt(W_{c->c2}) <c| - sqrt(W_{c2->c}) <c2|)`` for each ordered pair with positive rate.

    ``psi`` may be a fixed state or a callable ``(c, c2) -> vector`` giving a
    pair-dependent target. If ``p_eq`` is supplied, detailed balance is checked
    first.
    """
    rates = np.asarray(rates, dtype=float)
    if p_eq is not None:
        check_detailed_balance(rates, np.asarray(p_eq, dtype=float))
    dim = rates.shape[0]
    if callable(psi):
        target = psi
    else:
        vec = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
        target = lambda c, c2: vec  # noqa: E731
    out = []
    for c, c2 in zip(*np.nonzero(rates > 0)):
        bra = np.zeros(dim, dtype=complex)
        bra[c] = np.sqrt(rates[c, c2])
        bra[c2] = -np.sqrt(rates[c2, c])
        out.append(DenseJump((int(c), int(c2)), np.outer(target(c, c2), bra)))
    return out


def similarity_transform(rates: np.ndarray, p_eq: np.ndarray) -> np.ndarray:
    """``-P^{-1} W P`` with ``P = diag(sqrt(p_eq))``; ``W`` built from the rate table."""
    rates = np.asarray(rates, dtype=float)
    w = rates.T - np.diag(rates.sum(axis=1))
    sq = np.sqrt(np.asarray(p_eq, dtype=float))
    return -(w * sq[None, :]) / sq[:, None]


def hermitian_form(rates: np.ndarray, p_eq: np.ndarray, cap: int = ORACLE_CAP, tol: float = 1e-10) -> np.ndarray:
    """Hermitian master operator, cross-checked against ``1/2 sum_mu J_mu^dag J_mu``.

    The jump sum runs over ordered pairs, so each unordered transition enters
    twice. Raises :class:`NumericalError` if the two routes disagree by more
    than ``tol`` or the result is not Hermitian.
    """
    rates = np.asarray(rates, dtype=float)
    p_eq = np.asarray(p_eq, dtype=float)
    dim = rates.shape[0]
    if dim > cap:
        raise OracleCapError(f"state space {dim} exceeds oracle cap {cap}")
    check_detailed_balance(rates, p_eq)
    h = similarity_transform(rates, p_eq)
    ground = np.zeros(dim, dtype=complex)
    ground[0] = 1.0
    jumps = generic_jump_operators(rates, ground)
    h_jumps = np.zeros((dim, dim), dtype=complex)
    for j in jumps:
        h_jumps += j.matrix.conj().T @ j.matrix
    h_jumps *= 0.5
    if np.max(np.abs(h - h.T)) > tol:
        raise NumericalError("similarity transform is not Hermitian")
    deviation = np.max(np.abs(h - h_jumps)) if dim else 0.0
    if deviation > tol:
        raise NumericalError(f"Hermitian form and jump-operator sum differ by {deviation:.3e}")
    return h


def stationary_product_state(spec: Union[QuantumKCMSpec, RydbergSpec]) -> PureState:
    """``prod_k (sqrt(1-kappa)|0> + sqrt(kappa)|1>)`` (for Rydberg, ``kappa = x^2/(1+x^2)``)."""
    s = stationary_vector(spec.kappa)
    return PureState.product([s] * spec.n_sites)


def classical_equilibrium(spec: ClassicalKCMSpec, cap: int = ORACLE_CAP, check: bool = True) -> np.ndarray:
    """Product Bernoulli measure over all ``2**N`` configurations.

    With ``check`` the measure is verified to satisfy detailed balance with the
    model's rates.
    """
    n = spec.n_sites
    if 2**n > cap:
        raise OracleCapError(f"state space {2**n} exceeds oracle cap {cap}")
    p = np.ones(1)
    for _ in range(n):
        p = np.kron([1.0 - spec.kappa, spec.kappa], p)
    if check:
        check_detailed_balance(rate_matrix(spec, cap), p, tol=1e-14)
    return p


def jump_generator_dense(jump_ops: Sequence, n_sites: int, cap: int = ORACLE_CAP) -> np.ndarray:
    """Dense ``sum_k J_k^dag J_k``."""
    out = None
    for op in jump_ops:
        m = dense_matrix_of(op, n_sites, cap)
        g = m.conj().T @ m
        out = g if out is None else out + g
    return out


def all_configurations(n_sites: int, local_dim: int = 2):
    for sites in itertools.product(range(local_dim), repeat=n_sites):
        yield SpinConfiguration(tuple(reversed(sites)), local_dim)


def blockade_configurations(n_sites: int, boundary: Boundary = Boundary.OPEN) -> np.ndarray:
    """Ordinals with no two neighbouring excitations.

    This subspace is left invariant by the effective Rydberg jump operators and
    their adjoints, so dynamics started inside it never leaves it.
    """
    idx = np.arange(2**n_sites)
    bad = (idx & (idx >> 1)) != 0
    if Boundary(boundary) is Boundary.PERIODIC and n_sites > 2:
        bad |= ((idx & 1) != 0) & (((idx >> (n_sites - 1)) & 1) != 0)
    return idx[~bad]
