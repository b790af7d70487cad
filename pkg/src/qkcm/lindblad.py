"""Dense Lindblad oracles: the effective two-level models and the three-level EIT chain.

Density matrices are vectorized row-major, so ``vec(A rho B) = (A kron B^T) vec(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply, spsolve

from .errors import NumericalError, OracleCapError
from .model_zoo import RydbergSpec, blockade_configurations, rydberg_jump_operators
from .spin_space import SIGMA_X, LocalOperator, OperatorSum, dense_matrix_of, mean_occupation

#: largest Hilbert-space dimension accepted by the dense solvers
LINDBLAD_CAP = 729
#: below this Hilbert-space dimension the superoperator is exponentiated densely
EXPM_DIM = 32

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-8


def _as_matrices(jump_ops, n_sites, cap):
    out = []
    for op in jump_ops:
        if isinstance(op, (LocalOperator, OperatorSum)):
            if n_sites is None:
                raise ValueError("n_sites is required for structured operators")
            out.append(sp.csr_matrix(dense_matrix_of(op, n_sites, cap)))
        else:
            out.append(sp.csr_matrix(op))
    return out


def liouvillian(jump_mats: Sequence, hamiltonian=None) -> sp.csr_matrix:
    """Sparse superoperator of ``-i[H, rho] + sum_mu (J rho J^dag - {J^dag J, rho}/2)``."""
    dim = jump_mats[0].shape[0] if jump_mats else hamiltonian.shape[0]
    eye = sp.identity(dim, dtype=complex, format="csr")
    out = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
    for j in jump_mats:
        j = sp.csr_matrix(j, dtype=complex)
        jdj = (j.conj().T @ j).tocsr()
        out = out + sp.kron(j, j.conj()) - 0.5 * sp.kron(jdj, eye) - 0.5 * sp.kron(eye, jdj.T)
    if hamiltonian is not None:
        h = sp.csr_matrix(hamiltonian, dtype=complex)
        out = out - 1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    return out.tocsr()


def lindblad_rhs(rho, jump_mats, hamiltonian=None):
    """``d rho / dt`` by direct operator products (no superoperator)."""
    out = np.zeros_like(rho)
    for j in jump_mats:
        jr = j @ rho
        jdj = j.conj().T @ j
        out += jr @ j.conj().T - 0.5 * (jdj @ rho + rho @ jdj)
    if hamiltonian is not None:
        out += -1j * (hamiltonian @ rho - rho @ hamiltonian)
    return out


def validate_density_matrix(rho, herm_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL, psd_tol=PSD_TOL):
    """Raise :class:`NumericalError` unless ``rho`` is Hermitian, unit-trace and PSD."""
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise NumericalError(f"density matrix not Hermitian (deviation {herm:.3e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise NumericalError(f"density matrix trace {tr:.15g} differs from 1")
    lam_min = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lam_min < -psd_tol:
        raise NumericalError(f"density matrix has negative eigenvalue {lam_min:.3e}")


def lindblad_solve_dense(
    jump_ops: Sequence,
    rho0,
    times,
    n_sites: int | None = None,
    hamiltonian=None,
    method: str = "auto",
    cap: int = LINDBLAD_CAP,
    validate: bool = True,
    tolerances: tuple[float, float, float] = (HERMITIAN_TOL, TRACE_TOL, PSD_TOL),
) -> np.ndarray:
    """Density matrices at ``times`` (shape ``(T, d, d)``), starting from ``rho0`` at t=0.

    ``jump_ops`` may be package operators (with ``n_sites``) or plain matrices.

    ``method``:

    * ``"expm"``: dense superoperator exponential of each time increment.
    * ``"krylov"``: sparse superoperator, ``expm_multiply`` per increment.
    * ``"ode"``: adaptive Dormand-Prince (rtol 1e-8, atol 1e-10) on the operator
      form of the equation.
    * ``"auto"``: ``expm`` for ``d <= 32``, ``krylov`` otherwise.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    dim = rho0.shape[0]
    if dim > cap:
        raise OracleCapError(f"Hilbert space dimension {dim} exceeds dense Lindblad cap {cap}")
    times = np.asarray(times, dtype=float)
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    mats = _as_matrices(jump_ops, n_sites, cap)
    if method == "auto":
        method = "expm" if dim <= EXPM_DIM else "krylov"

    out = np.empty((times.size, dim, dim), dtype=complex)
    if method in ("expm", "krylov"):
        lv = liouvillian(mats, hamiltonian)
        dense_lv = lv.toarray() if method == "expm" else None
        vec = rho0.reshape(-1).copy()
        prev = 0.0
        # uniform grids repeat the same increment (up to rounding); exponentiate it once
        last_dt, prop = None, None
        for i, t in enumerate(times):
            dt = t - prev
            if dt > 0:
                if method == "expm":
                    if last_dt is None or abs(dt - last_dt) > 1e-12 * dt:
                        last_dt, prop = dt, expm(dense_lv * dt)
                    vec = prop @ vec
                else:
                    vec = expm_multiply(lv * dt, vec)
                prev = t
            out[i] = vec.reshape(dim, dim)
    elif method == "ode":
        dense_mats = [m.toarray() for m in mats]
        h = None if hamiltonian is None else np.asarray(
            hamiltonian.toarray() if sp.issparse(hamiltonian) else hamiltonian, dtype=complex
        )

        def rhs(_t, y):
            return lindblad_rhs(y.reshape(dim, dim), dense_mats, h).reshape(-1)

        start = times > 0
        out[~start] = rho0
        if start.any():
            sol = solve_ivp(
                rhs, (0.0, times[-1]), rho0.reshape(-1), method="RK45",
                t_eval=times[start], rtol=1e-8, atol=1e-10,
            )
            if not sol.success:
                raise NumericalError(f"Lindblad integration failed: {sol.message}")
            out[start] = sol.y.T.reshape(-1, dim, dim)
    else:
        raise ValueError(f"unknown method {method!r}")

    if validate:
        for rho in out:
            validate_density_matrix(rho, *tolerances)
    return out


def generator_action(jump_ops, rho, n_sites=None, hamiltonian=None):
    """``d rho / dt`` evaluated at ``rho``."""
    mats = [m.toarray() for m in _as_matrices(jump_ops, n_sites, LINDBLAD_CAP)]
    h = None if hamiltonian is None else np.asarray(hamiltonian, dtype=complex)
    return lindblad_rhs(np.asarray(rho, dtype=complex), mats, h)


def expectation(rhos, observable) -> np.ndarray:
    """``Tr(rho O)`` (real part) for a stack of density matrices."""
    return np.einsum("tij,ji->t", rhos, observable).real


# ---------------------------------------------------------------------------
# three-level EIT chain, levels 0=g, 1=p, 2=r


def _site_op(single, site, n_sites, local_dim=3):
    # little-endian: site 0 is the last kron factor
    out = sp.identity(1, dtype=complex, format="csr")
    for k in reversed(range(n_sites)):
        factor = sp.csr_matrix(single) if k == site else sp.identity(local_dim, dtype=complex, format="csr")
        out = sp.kron(out, factor, format="csr")
    return out


def _ket_bra(i, j, local_dim=3):
    m = np.zeros((local_dim, local_dim), dtype=complex)
    m[i, j] = 1.0
    return m


G_LEVEL, P_LEVEL, R_LEVEL = 0, 1, 2


def three_level_operators(spec: RydbergSpec):
    """``(H, jumps)`` of the three-level chain: interaction, drives and ``|p>`` decay."""
    if not spec.has_three_level:
        raise ValueError("three-level model needs omega_c, omega_p, gamma and v")
    n = spec.n_sites
    dim = 3**n
    h = sp.csr_matrix((dim, dim), dtype=complex)
    drive = -spec.omega_c * _ket_bra(P_LEVEL, R_LEVEL) + spec.omega_p * _ket_bra(G_LEVEL, P_LEVEL)
    drive = drive + drive.conj().T
    rr = _ket_bra(R_LEVEL, R_LEVEL)
    for k in range(n):
        h = h + _site_op(drive, k, n)
    bonds = range(n) if spec.boundary.value == "periodic" and n > 2 else range(n - 1)
    for k in bonds:
        h = h + spec.v * (_site_op(rr, k, n) @ _site_op(rr, (k + 1) % n, n))
    jumps = [np.sqrt(spec.gamma) * _site_op(_ket_bra(G_LEVEL, P_LEVEL), k, n) for k in range(n)]
    return h.tocsr(), jumps


def three_level_lindblad(spec: RydbergSpec, rho0, times, method: str = "auto") -> np.ndarray:
    """Integrate the full three-level master equation (bare time units).

    Hermiticity and trace are checked to 1e-9 at every output.
    """
    dim = 3**spec.n_sites
    if dim > LINDBLAD_CAP:
        raise OracleCapError(f"3^{spec.n_sites} = {dim} exceeds dense Lindblad cap {LINDBLAD_CAP}")
    h, jumps = three_level_operators(spec)
    return lindblad_solve_dense(jumps, rho0, times, hamiltonian=h, method=method, tolerances=(1e-9, 1e-9, PSD_TOL))


def three_level_ground_state(n_sites: int) -> np.ndarray:
    rho = np.zeros((3**n_sites, 3**n_sites), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def rydberg_population(rhos, n_sites: int, level: int = R_LEVEL, local_dim: int = 3) -> np.ndarray:
    """Mean per-site population of ``level`` for a stack of density matrices."""
    from .spin_space import mean_occupation

    occ = mean_occupation(n_sites, local_dim, level)
    diag = np.real(np.einsum("tii->ti", rhos))
    return diag @ occ


def restrict_to_subspace(mats, basis) -> list:
    """Compress operators onto the span of the basis ordinals in ``basis``.

    Raises :class:`NumericalError` if any operator maps the subspace outside itself.
    """
    basis = np.asarray(basis)
    out = []
    for m in mats:
        m = sp.csr_matrix(m)
        cols = m[:, basis]
        inside = cols[basis, :]
        leak = abs(cols).sum() - abs(inside).sum()
        if leak > 1e-12:
            raise NumericalError(f"operator leaks out of the subspace (weight {leak:.3e})")
        out.append(inside.tocsr())
    return out


def stationary_state(jump_mats, hamiltonian=None) -> np.ndarray:
    """Unit-trace null vector of the Liouvillian, by a sparse solve with one row replaced by the trace."""
    lv = liouvillian(jump_mats, hamiltonian).tolil()
    dim = jump_mats[0].shape[0] if jump_mats else hamiltonian.shape[0]
    lv[0, :] = np.eye(dim).reshape(1, -1)
    rhs = np.zeros(dim * dim, dtype=complex)
    rhs[0] = 1.0
    rho = spsolve(lv.tocsc(), rhs).reshape(dim, dim)
    if not np.all(np.isfinite(rho)):
        raise NumericalError("stationary state is not unique on this space")
    residual = np.max(np.abs(lindblad_rhs(rho, [sp.csr_matrix(m).toarray() for m in jump_mats],
                                          None if hamiltonian is None else sp.csr_matrix(hamiltonian).toarray())))
    if residual > 1e-9:
        raise NumericalError(f"stationary solve residual {residual:.3e}")
    return 0.5 * (rho + rho.conj().T)


@dataclass
class BlockadeDynamics:
    """Effective Rydberg chain from the all-ground state, solved on the blockade subspace."""

    times: np.ndarray
    density: np.ndarray
    sigma_x: np.ndarray
    stationary_density: float
    stationary_sigma_x: float
    basis: np.ndarray


def rydberg_blockade_dynamics(spec: RydbergSpec, times, method: str = "krylov") -> BlockadeDynamics:
    """Mean Rydberg density and Pauli ``sigma^x`` of the effective chain (rescaled time).

    Starting from all atoms in the ground state the state stays on the span of
    configurations without neighbouring excitations, which keeps chains of
    N = 8 (55 states) cheap. The stationary values are those of the unique
    stationary state on that subspace.
    """
    n = spec.n_sites
    basis = blockade_configurations(n, spec.boundary)
    full = [sp.csr_matrix(dense_matrix_of(op, n)) for op in rydberg_jump_operators(spec)]
    mats = restrict_to_subspace(full, basis)
    rho0 = np.zeros((basis.size, basis.size), dtype=complex)
    rho0[0, 0] = 1.0
    rhos = lindblad_solve_dense(mats, rho0, times, method=method)
    occ = mean_occupation(n)[basis]
    sx_full = sum(dense_matrix_of(LocalOperator(k, SIGMA_X), n) for k in range(n)) / n
    sx = sx_full[np.ix_(basis, basis)]
    rho_ss = stationary_state(mats)
    return BlockadeDynamics(
        times=np.asarray(times, dtype=float),
        density=np.real(np.einsum("tii,i->t", rhos, occ)),
        sigma_x=expectation(rhos, sx),
        stationary_density=float(np.real(np.diag(rho_ss) @ occ)),
        stationary_sigma_x=float(expectation(rho_ss[None], sx)[0]),
        basis=basis,
    )
