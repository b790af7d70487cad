"""Closed-form single-spin relaxation curves and timescales."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

#: half-width in ``u = 1 - x**2`` of the series window around x = 1
SERIES_WINDOW = 1e-4


def classical_density(t, lam: float, kappa: float, n0: float):
    """``kappa + (n0 - kappa) exp(-lam t)``."""
    t = np.asarray(t, dtype=float)
    return kappa + (n0 - kappa) * np.exp(-lam * t)


def quantum_timescales(theta: float, lam: float = 1.0) -> tuple[float, float]:
    """``(tau_q, tau_q') = (2 / lam, 1 / (lam sin^2 theta))`` for the single quantum spin."""
    s2 = np.sin(theta) ** 2
    if theta <= 0 or theta >= np.pi or s2 == 0.0:
        raise ConfigError("degenerate: mixed stationary state regime (theta = 0 or pi)")
    if lam <= 0:
        raise ConfigError("lambda must be positive")
    return 2.0 / lam, 1.0 / (lam * s2)


def rydberg_classical_density(t, x: float, lam: float = 1.0):
    """Single-atom excluded-volume model from the ground state, ``kappa = x^2/(1+x^2)``."""
    kappa = x**2 / (1.0 + x**2)
    return classical_density(t, lam, kappa, 0.0)


def _exprel(z):
    """``(e^z - 1) / z``, by its Taylor series near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    series = 1.0 + z / 2.0 + z**2 / 6.0 + z**3 / 24.0 + z**4 / 120.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = np.expm1(z) / z
    return np.where(small, series, direct)


def rydberg_quantum_density(t, x: float):
    """Rydberg population of the single effective two-level atom, from the ground state.

    Time is in rescaled units. Written as
    ``kappa [1 - e^{-t} - 2 (e^{-t(1+x^2)/2} - e^{-t}) / (1 - x^2)]``; the last
    ratio has a removable singularity at x = 1, handled by a series in
    ``u = 1 - x^2`` for ``|u| < 1e-4`` (exactly ``t e^{-t} / 2`` at u = 0).
    """
    t = np.asarray(t, dtype=float)
    if x <= 0:
        raise ConfigError("x must be positive")
    kappa = x**2 / (1.0 + x**2)
    u = 1.0 - x**2
    if abs(u) < SERIES_WINDOW:
        # (e^{-t(1-u/2)} - e^{-t}) / u = (t/2) e^{-t} (e^{tu/2} - 1)/(tu/2)
        ratio = 0.5 * t * np.exp(-t) * _exprel(0.5 * t * u)
    else:
        ratio = (np.exp(-0.5 * t * (1.0 + x**2)) - np.exp(-t)) / u
    return kappa * (1.0 - np.exp(-t) - 2.0 * ratio)


def timescale_match_lambda() -> float:
    """Classical rate that matches the single-atom curves at short times (rescaled units)."""
    return 1.0
