"""Closed-form statistics of one qubit in a resonant two-qubit Tavis-Cummings battery.

Both qubits start in the ground state and the cavity in the Fock state ``|N>``.
After a time ``tau`` the first qubit has absorbed one quantum with
probability ``f + h``, where ``f`` is the weight of the ``|ee>`` branch and
``h`` of the ``|eg>`` branch.

This module is deliberately scalar and self-contained.  It imports nothing
from the rest of the package, so it can serve as an independent reference
for the matrix-based propagation code.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class FHPair:
    f: float
    h: float
    N: int
    g_tau: float

    @property
    def total(self) -> float:
        return self.f + self.h


def eval_fh(N: int, g_tau: float) -> FHPair:
    """Return ``f(tau, N)`` and ``h(tau, N)`` for cavity photon number ``N``."""
    if N < 0 or int(N) != N:
        raise ValueError(f"N must be a non-negative integer, got {N}")
    N = int(N)
    if N == 0:
        return FHPair(0.0, 0.0, 0, float(g_tau))
    s = 2 * N - 1
    arg = g_tau * math.sqrt(2.0 * s)
    f = ((-1.0 + math.cos(arg)) / s) ** 2 * N * (N - 1)
    h = math.sin(arg) ** 2 * N / (2.0 * s)
    return FHPair(f, h, N, float(g_tau))


def oracle_snr(N: int, g_tau: float, var_floor: float = VAR_FLOOR) -> float:
    """``(f+h) / (1-(f+h))`` with ``inf`` where the variance vanishes but the mean does not."""
    p = eval_fh(N, g_tau).total
    mean, var = p, p - p * p
    if var < var_floor:
        return math.inf if mean * mean > var_floor else 0.0
    return mean * mean / var


def oracle_gf(N: int, g_tau: float, chi: float, omega: float = 1.0) -> complex:
    """Two-outcome generating function ``(f+h) e^{i chi omega} + 1 - (f+h)``."""
    p = eval_fh(N, g_tau).total
    return p * cmath.exp(1j * chi * omega) + (1.0 - p)
