"""Many-body configuration basis, pure states and site-local constrained operators.

Basis ordinals are little-endian: site 0 is the least significant digit, so the
ordinal of ``(s_0, s_1, ..., s_{N-1})`` is ``sum_k s_k * local_dim**k``.
Operators are applied on the fly to amplitude vectors; no ``d x d`` matrix is
built except through :func:`dense_matrix_of`, which is capped.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DimensionError, NormalizationError, OracleCapError, SiteIndexError

#: largest basis size for which dense matrices are built
ORACLE_CAP = 4096

NORMALIZED_TOL = 1e-10

# single-site operators in the (|0>, |1>) = (down, up) ordering
IDENTITY = np.eye(2, dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
SIGMA_PLUS = SIGMA_MINUS.T.copy()  # |1><0|
NUMBER = np.diag([0.0, 1.0]).astype(complex)  # n = sigma+ sigma-
GROUND_PROJECTOR = np.diag([1.0, 0.0]).astype(complex)  # p = |0><0|
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
# sigma^y with |1> = up: <0|sy|1> = i, <1|sy|0> = -i
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)


class ConstraintKind(str, enum.Enum):
    UNCONSTRAINED = "unconstrained"
    EAST = "east"
    FA = "fa"
    EXCLUDED_VOLUME = "excluded_volume"


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    OPEN = "open"


@dataclass(frozen=True)
class ConstraintSpec:
    """Kinetic constraint ``f_k`` gating the dynamics of site ``k``.

    ``f_k`` only ever reads neighbouring sites, never site ``k`` itself:

    * East: ``n_{k+1}``
    * FA: ``n_{k-1} + n_{k+1} - n_{k-1} n_{k+1}``
    * ExcludedVolume: ``p_{k-1} p_{k+1}`` with ``p`` the projector on level 0

    On an open chain a missing neighbour is treated as sitting in level 0, which
    freezes the last East site and turns the excluded-volume projector into the
    identity. A single-site chain has no neighbours under either boundary.
    """

    kind: ConstraintKind = ConstraintKind.UNCONSTRAINED
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def is_trivial(self) -> bool:
        return self.kind is ConstraintKind.UNCONSTRAINED

    def neighbours(self, site: int, n_sites: int) -> tuple[int | None, int | None]:
        """Left and right neighbour indices, ``None`` where absent."""
        if n_sites == 1:
            return None, None
        if self.boundary is Boundary.PERIODIC:
            return (site - 1) % n_sites, (site + 1) % n_sites
        left = site - 1 if site > 0 else None
        right = site + 1 if site < n_sites - 1 else None
        return left, right

    def _combine(self, left_level, right_level):
        # levels may be scalars or arrays; None means "absent = level 0"
        def excited(level):
            return 0 if level is None else (level == 1)

        def ground(level):
            return 1 if level is None else (level == 0)

        if self.kind is ConstraintKind.EAST:
            return excited(right_level)
        if self.kind is ConstraintKind.FA:
            left, right = excited(left_level), excited(right_level)
            return np.logical_or(left, right)
        if self.kind is ConstraintKind.EXCLUDED_VOLUME:
            return np.logical_and(ground(left_level), ground(right_level))
        return True

    def evaluate(self, site: int, sites: Sequence[int]) -> int:
        """``f_site`` for a single configuration given as a level sequence."""
        if self.is_trivial:
            return 1
        left, right = self.neighbours(site, len(sites))
        left_level = None if left is None else sites[left]
        right_level = None if right is None else sites[right]
        return int(bool(self._combine(left_level, right_level)))

    def mask(self, site: int, n_sites: int, local_dim: int = 2) -> np.ndarray:
        """Boolean vector of ``f_site`` over every basis ordinal (cached, read-only)."""
        return _constraint_mask(self.kind, self.boundary, site, n_sites, local_dim)


@lru_cache(maxsize=128)
def _constraint_mask(kind, boundary, site, n_sites, local_dim):
    spec = ConstraintSpec(kind, boundary)
    left, right = spec.neighbours(site, n_sites)
    left_level = None if left is None else site_levels(left, n_sites, local_dim)
    right_level = None if right is None else site_levels(right, n_sites, local_dim)
    dim = local_dim**n_sites
    out = np.broadcast_to(np.asarray(spec._combine(left_level, right_level), dtype=bool), (dim,))
    out = np.array(out)
    out.flags.writeable = False
    return out


def site_levels(site: int, n_sites: int, local_dim: int = 2) -> np.ndarray:
    """Level of ``site`` in every basis configuration, as an int array of length ``local_dim**n_sites``."""
    ordinals = np.arange(local_dim**n_sites)
    if local_dim == 2:
        return (ordinals >> site) & 1
    return (ordinals // local_dim**site) % local_dim


@dataclass(frozen=True)
class SpinConfiguration:
    """Classical basis label: one level index per site."""

    sites: tuple[int, ...]
    local_dim: int = 2

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if not sites:
            raise DimensionError("configuration needs at least one site")
        if self.local_dim not in (2, 3):
            raise DimensionError(f"local_dim must be 2 or 3, got {self.local_dim}")
        if any(s < 0 or s >= self.local_dim for s in sites):
            raise DimensionError(f"site levels {sites} out of range for local_dim={self.local_dim}")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def index(self) -> int:
        return sum(s * self.local_dim**k for k, s in enumerate(self.sites))

    @classmethod
    def from_index(cls, index: int, n_sites: int, local_dim: int = 2) -> "SpinConfiguration":
        if not 0 <= index < local_dim**n_sites:
            raise DimensionError(f"ordinal {index} out of range for {n_sites} sites")
        return cls(tuple((index // local_dim**k) % local_dim for k in range(n_sites)), local_dim)

    @classmethod
    def from_string(cls, text: str, local_dim: int = 2) -> "SpinConfiguration":
        """Parse ``"110"`` (site 0 first); letters g/p/r are accepted for three levels."""
        letters = {"g": 0, "p": 1, "r": 2}
        if local_dim == 2:
            letters = {"g": 0, "r": 1}
        sites = tuple(letters[c] if c in letters else int(c) for c in text.strip())
        return cls(sites, local_dim)

    def flipped(self, site: int) -> "SpinConfiguration":
        if self.local_dim != 2:
            raise DimensionError("flip is only defined for two-level sites")
        sites = list(self.sites)
        sites[site] = 1 - sites[site]
        return SpinConfiguration(tuple(sites), 2)

    def __str__(self):
        return "".join(str(s) for s in self.sites)


class PureState:
    """Amplitude vector over the configuration basis with a cached squared norm."""

    def __init__(self, amplitudes, n_sites: int, local_dim: int = 2):
        amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        if amplitudes.shape != (local_dim**n_sites,):
            raise DimensionError(
                f"expected {local_dim**n_sites} amplitudes for {n_sites} sites, got shape {amplitudes.shape}"
            )
        self.amplitudes = amplitudes
        self.n_sites = int(n_sites)
        self.local_dim = int(local_dim)
        self.squared_norm = float(np.vdot(amplitudes, amplitudes).real)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def is_normalized(self, tol: float = NORMALIZED_TOL) -> bool:
        return abs(self.squared_norm - 1.0) <= tol

    def normalized(self) -> "PureState":
        if self.squared_norm == 0.0:
            raise NormalizationError("cannot normalize the zero vector")
        return PureState(self.amplitudes / np.sqrt(self.squared_norm), self.n_sites, self.local_dim)

    @classmethod
    def from_configuration(cls, config: SpinConfiguration) -> "PureState":
        amps = np.zeros(config.local_dim**config.n_sites, dtype=complex)
        amps[config.index] = 1.0
        return cls(amps, config.n_sites, config.local_dim)

    @classmethod
    def product(cls, local_states) -> "PureState":
        """Tensor product of single-site vectors, ``local_states[k]`` on site ``k``."""
        local_states = [np.asarray(v, dtype=complex) for v in local_states]
        local_dim = local_states[0].shape[0]
        amps = np.ones(1, dtype=complex)
        # site 0 is least significant, so it is the fastest-varying (last) kron factor
        for v in local_states:
            amps = np.kron(v, amps)
        return cls(amps, len(local_states), local_dim)

    def __repr__(self):
        return f"PureState(n_sites={self.n_sites}, local_dim={self.local_dim}, squared_norm={self.squared_norm:.6g})"


def _apply_on_site(amps: np.ndarray, matrix: np.ndarray, site: int, n_sites: int, local_dim: int):
    extra = amps.shape[1:]
    lo = local_dim**site
    hi = local_dim ** (n_sites - site - 1)
    view = amps.reshape((hi, local_dim, lo * int(np.prod(extra, dtype=int))))
    return np.matmul(matrix, view).reshape(amps.shape)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """``prefactor * f_site * local_action[site]``, identity on all other sites."""

    target_site: int
    local_action: np.ndarray
    constraint: ConstraintSpec | None = None
    prefactor: complex = 1.0

    def __post_init__(self):
        action = np.array(self.local_action, dtype=complex)
        if action.ndim != 2 or action.shape[0] != action.shape[1] or action.shape[0] not in (2, 3):
            raise DimensionError(f"local action must be 2x2 or 3x3, got shape {action.shape}")
        action.flags.writeable = False
        object.__setattr__(self, "local_action", action)
        object.__setattr__(self, "prefactor", complex(self.prefactor))

    @property
    def local_dim(self) -> int:
        return self.local_action.shape[0]

    @property
    def terms(self) -> tuple["LocalOperator", ...]:
        return (self,)

    def apply(self, amps: np.ndarray, n_sites: int) -> np.ndarray:
        """Act on an amplitude vector of shape ``(d,)`` or a batch of shape ``(d, m)``."""
        _check_target(self, n_sites, amps.shape[0])
        if self.constraint is not None and not self.constraint.is_trivial:
            mask = self.constraint.mask(self.target_site, n_sites, self.local_dim)
            amps = amps * (mask if amps.ndim == 1 else mask[:, None])
        out = _apply_on_site(amps, self.local_action, self.target_site, n_sites, self.local_dim)
        if self.prefactor != 1.0:
            out *= self.prefactor
        return out

    def adjoint(self) -> "LocalOperator":
        # f_k is a real diagonal projector commuting with the site-k action
        return LocalOperator(
            self.target_site,
            self.local_action.conj().T,
            self.constraint,
            np.conj(self.prefactor),
        )

    def scaled(self, factor: complex) -> "LocalOperator":
        return LocalOperator(self.target_site, self.local_action, self.constraint, self.prefactor * factor)

    def norm_bound(self) -> float:
        return abs(self.prefactor) * float(np.linalg.norm(self.local_action, 2))


@dataclass(frozen=True, eq=False)
class OperatorSum:
    """A sum of :class:`LocalOperator` terms acting as one operator."""

    terms: tuple[LocalOperator, ...] = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise DimensionError("operator sum needs at least one term")
        if len({t.local_dim for t in terms}) != 1:
            raise DimensionError("all terms of a sum must share the local dimension")
        object.__setattr__(self, "terms", terms)

    @property
    def local_dim(self) -> int:
        return self.terms[0].local_dim

    def apply(self, amps: np.ndarray, n_sites: int) -> np.ndarray:
        out = self.terms[0].apply(amps, n_sites)
        for term in self.terms[1:]:
            out += term.apply(amps, n_sites)
        return out

    def adjoint(self) -> "OperatorSum":
        return OperatorSum(tuple(t.adjoint() for t in self.terms))

    def norm_bound(self) -> float:
        return sum(t.norm_bound() for t in self.terms)


Operator = Union[LocalOperator, OperatorSum]


def _check_target(op: LocalOperator, n_sites: int, dim: int):
    if op.local_dim**n_sites != dim:
        raise DimensionError(
            f"operator with local_dim={op.local_dim} cannot act on a vector of length {dim} for {n_sites} sites"
        )
    if not 0 <= op.target_site < n_sites:
        raise SiteIndexError(f"site {op.target_site} out of range for {n_sites} sites")


def _check_state_operator(state: PureState, op: Operator):
    if state.local_dim != op.local_dim:
        raise DimensionError(f"state local_dim={state.local_dim} but operator local_dim={op.local_dim}")
    for term in op.terms:
        if not 0 <= term.target_site < state.n_sites:
            raise SiteIndexError(f"site {term.target_site} out of range for {state.n_sites} sites")


def apply_local_operator(state: PureState, op: Operator) -> PureState:
    """Return ``op |state>`` as a new state; the input is left untouched."""
    _check_state_operator(state, op)
    return PureState(op.apply(state.amplitudes, state.n_sites), state.n_sites, state.local_dim)


def _require_normalized(state: PureState):
    if not state.is_normalized():
        raise NormalizationError(
            f"state has squared norm {state.squared_norm:.12g}; renormalize before taking expectations"
        )


def diagonal_values(observable, n_sites: int, local_dim: int = 2) -> np.ndarray:
    """Tabulate a diagonal observable over the basis.

    ``observable`` is either an array of length ``local_dim**n_sites`` or a
    callable taking a :class:`SpinConfiguration`.
    """
    dim = local_dim**n_sites
    if callable(observable):
        return np.array(
            [observable(SpinConfiguration.from_index(i, n_sites, local_dim)) for i in range(dim)],
            dtype=float,
        )
    values = np.asarray(observable, dtype=float)
    if values.shape != (dim,):
        raise DimensionError(f"diagonal observable must have length {dim}, got {values.shape}")
    return values


def expectation_diagonal(state: PureState, observable: Union[np.ndarray, Callable]) -> float:
    """``sum_C |<C|psi>|^2 O(C)`` for a normalized state."""
    _require_normalized(state)
    values = diagonal_values(observable, state.n_sites, state.local_dim)
    return float(np.dot(np.abs(state.amplitudes) ** 2, values))


def expectation_local(state: PureState, op: Operator) -> complex:
    _check_state_operator(state, op)
    _require_normalized(state)
    return complex(np.vdot(state.amplitudes, op.apply(state.amplitudes, state.n_sites)))


def dense_matrix_of(op: Union[Operator, Sequence[Operator]], n_sites: int, cap: int = ORACLE_CAP) -> np.ndarray:
    """Materialize an operator (or the sum of several) as a dense matrix."""
    ops = [op] if isinstance(op, (LocalOperator, OperatorSum)) else list(op)
    local_dim = ops[0].local_dim
    dim = local_dim**n_sites
    if dim > cap:
        raise OracleCapError(f"basis size {dim} exceeds oracle cap {cap}")
    eye = np.eye(dim, dtype=complex)
    out = np.zeros((dim, dim), dtype=complex)
    for o in ops:
        out += o.apply(eye, n_sites)
    return out


def mean_occupation(n_sites: int, local_dim: int = 2, level: int = 1) -> np.ndarray:
    """Diagonal values of ``(1/N) sum_k n_k`` where ``n_k`` projects site k on ``level``."""
    total = np.zeros(local_dim**n_sites)
    for k in range(n_sites):
        total += site_levels(k, n_sites, local_dim) == level
    return total / n_sites


def site_populations(amps: np.ndarray, n_sites: int, local_dim: int = 2, level: int = 1) -> np.ndarray:
    """Per-site ``<n_k>`` of normalized amplitude(s); shape ``(N,)`` or ``(N, m)``."""
    probs = np.abs(amps) ** 2
    lo_shape = probs.shape[1:]
    out = np.empty((n_sites,) + lo_shape)
    for k in range(n_sites):
        lo = local_dim**k
        view = probs.reshape((local_dim ** (n_sites - k - 1), local_dim, lo) + lo_shape)
        out[k] = view[:, level].sum(axis=(0, 1))
    return out


def site_coherences(
    amps: np.ndarray, n_sites: int, local_dim: int = 2, levels: tuple[int, int] = (0, 1)
) -> np.ndarray:
    """Per-site ``<sigma^x_k>`` between two levels: ``2 Re <psi| |a><b|_k |psi>``."""
    a, b = levels
    lo_shape = amps.shape[1:]
    out = np.empty((n_sites,) + lo_shape)
    for k in range(n_sites):
        lo = local_dim**k
        view = amps.reshape((local_dim ** (n_sites - k - 1), local_dim, lo) + lo_shape)
        out[k] = 2.0 * np.real(np.conj(view[:, a]) * view[:, b]).sum(axis=(0, 1))
    return out
