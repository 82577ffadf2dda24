"""Full counting statistics of the energy absorbed by the qubits.

The generating function of the energy change is the trace of a tilted
density matrix, ``G(chi) = Tr[rho_chi(t)]``.  Moments follow from its
derivatives at ``chi = 0``:  ``<dU^n> = (-i)^n d^n G / d chi^n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from qbatt.dynamics import tc2_block_exp
from qbatt.errors import NormalizationError
from qbatt.fockspace import EXCITED

VAR_FLOOR = 1e-12
VAR_CLIP_TOL = 1e-10
FD_REL_TOL = 1e-6
DEFAULT_H_CHI = 2e-2


def snr(stats_or_mean, variance: float | None = None, var_floor: float = VAR_FLOOR) -> float:
    """``mean^2 / variance`` with the divergence mapped to ``inf``.

    Accepts an :class:`EnergyStats` or a ``(mean, variance)`` pair.  Below
    ``var_floor`` the ratio is ``inf`` if the squared mean is above the floor
    and ``0`` otherwise.
    """
    if variance is None:
        mean, variance = stats_or_mean.mean, stats_or_mean.variance
    else:
        mean = stats_or_mean
    m2 = mean * mean
    if variance < var_floor:
        return math.inf if m2 > var_floor else 0.0
    return m2 / variance


def snr_array(mean: np.ndarray, variance: np.ndarray, var_floor: float = VAR_FLOOR) -> np.ndarray:
    """Vectorized :func:`snr`."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(variance, dtype=float)
    m2 = mean * mean
    small = var < var_floor
    out = np.divide(m2, np.where(small, 1.0, var))
    return np.where(small, np.where(m2 > var_floor, np.inf, 0.0), out)


def clip_variance(var):
    """Zero out tiny negative variances left by roundoff."""
    return np.where((var < 0) & (var >= -VAR_CLIP_TOL), 0.0, var)


@dataclass(frozen=True)
class EnergyStats:
    """Mean and variance of the exchanged energy (units of the qubit quantum)."""

    mean: float
    variance: float
    snr: float
    g_tau: float = float("nan")
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @classmethod
    def from_moments(cls, mean: float, second: float, g_tau: float = float("nan"),
                     var_floor: float = VAR_FLOOR, warnings=()) -> EnergyStats:
        var = second - mean * mean
        warnings = tuple(warnings)
        if var < -VAR_CLIP_TOL:
            warnings += (f"negative variance {var:.3e} at g_tau={g_tau:g}",)
        var = float(clip_variance(var))
        return cls(float(mean), var, snr(mean, var, var_floor), float(g_tau), warnings)


def generating_function(rho_chi) -> complex:
    """Trace of a tilted state (anything with ``entries`` or a raw array)."""
    m = getattr(rho_chi, "entries", rho_chi)
    return complex(np.trace(m))


def _derivs(sampler: Callable[[float], complex], h: float, cache: dict):
    def G(x):
        if x not in cache:
            cache[x] = complex(sampler(x))
        return cache[x]

    d1 = (G(-2 * h) - 8 * G(-h) + 8 * G(h) - G(2 * h)) / (12 * h)
    d2 = (-G(-2 * h) + 16 * G(-h) - 30 * G(0.0) + 16 * G(h) - G(2 * h)) / (12 * h * h)
    return d1, d2


def moments_fd(sampler: Callable[[float], complex], h_chi: float = DEFAULT_H_CHI,
               g_tau: float = float("nan"), var_floor: float = VAR_FLOOR) -> EnergyStats:
    """Moments from five-point central differences of ``G`` at ``h`` and ``h/2``.

    One Richardson step combines the two stencils.  When the difference
    between them suggests an error above ``1e-6 * max(1, |m2|)`` a precision
    warning is attached to the result.
    """
    if h_chi <= 0:
        raise ValueError("h_chi must be positive")
    cache: dict = {}
    d1a, d2a = _derivs(sampler, h_chi, cache)
    d1b, d2b = _derivs(sampler, h_chi / 2, cache)
    d1 = (16 * d1b - d1a) / 15
    d2 = (16 * d2b - d2a) / 15
    mean = (-1j * d1).real
    m2 = (-d2).real
    err = max(abs(d1b - d1a), abs(d2b - d2a)) / 15
    warnings = ()
    if err > FD_REL_TOL * max(1.0, abs(m2)):
        warnings = (f"finite-difference error estimate {err:.2e} exceeds tolerance at g_tau={g_tau:g}",)
    return EnergyStats.from_moments(mean, m2, g_tau, var_floor, warnings)


def moments_trace(components: Iterable[tuple[float, float]], g_tau: float = float("nan"),
                  var_floor: float = VAR_FLOOR, tol: float = 1e-8) -> EnergyStats:
    """Exact moments from ``(weight, energy)`` outcome pairs."""
    comps = [(float(w), float(e)) for w, e in components]
    total = sum(w for w, _ in comps)
    if abs(total - 1.0) > tol:
        raise NormalizationError(f"outcome weights sum to {total:.12g}, expected 1")
    mean = sum(w * e for w, e in comps)
    m2 = sum(w * e * e for w, e in comps)
    return EnergyStats.from_moments(mean, m2, g_tau, var_floor)


def fidelity_excited(rho_qub) -> float:
    """Fidelity with ``|e><e|``; for a pure target this is the excited population."""
    m = getattr(rho_qub, "entries", rho_qub)
    m = np.asarray(m)
    if m.shape != (2, 2):
        raise ValueError(f"expected a single-qubit state, got shape {m.shape}")
    return float(np.clip(m[EXCITED, EXCITED].real, 0.0, 1.0))


# --- resonant two-qubit closed forms via the block exponential --------------------

def _cavity_rho(N_or_rho, cavity_dim: int | None):
    if np.ndim(N_or_rho) == 0:
        N = int(N_or_rho)
        if N < 0:
            raise ValueError("N must be non-negative")
        d = cavity_dim or N + 3
        rho = np.zeros((d, d), dtype=complex)
        rho[N, N] = 1.0
        return rho
    m = getattr(N_or_rho, "entries", N_or_rho)
    return np.asarray(m, dtype=complex)


def tc2_outcome_weights(N_or_rho, g_tau: float, cavity_dim: int | None = None) -> np.ndarray:
    """Populations of ``ee, eg, ge, gg`` after ``g*tau`` with both qubits starting in ``g``.

    Weights are ``Tr[a_i4 rho_cav a_i4^dag]``.  ``N_or_rho`` is a photon
    number (Fock cavity) or a cavity density matrix.
    """
    rho = _cavity_rho(N_or_rho, cavity_dim)
    blocks = tc2_block_exp(g_tau, rho.shape[0])
    return np.array([np.trace(blocks[i][3] @ rho @ blocks[i][3].conj().T).real for i in range(4)])


def tc2_single_qubit_stats(N, g_tau: float, cavity_dim: int | None = None) -> EnergyStats:
    """Energy absorbed by the first of two resonant qubits (units of ``hbar omega``)."""
    w = tc2_outcome_weights(N, g_tau, cavity_dim)
    p = w[0] + w[1]
    return moments_trace([(p, 1.0), (1.0 - p, 0.0)], g_tau)


def tc2_two_qubit_stats(N, g_tau: float, cavity_dim: int | None = None) -> EnergyStats:
    """Energy absorbed by both resonant qubits together."""
    w = tc2_outcome_weights(N, g_tau, cavity_dim)
    return moments_trace([(w[0], 2.0), (w[1] + w[2], 1.0), (1.0 - w[0] - w[1] - w[2], 0.0)], g_tau)
