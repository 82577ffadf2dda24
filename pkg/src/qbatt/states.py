"""Initial cavity and qubit states, including the noisy preparations.

Squeezing convention: the squeezed coherent state with parameters
``(zeta, alpha_t)`` is ``S(zeta) D(alpha_t) |0>`` with
``S(zeta) = exp[(zeta* a^2 - zeta a^dag^2) / 2]``.  Commuting the squeezer
through gives a displacement ``beta = alpha_t cosh r - alpha_t* e^{i phi} sinh r``
acting after the squeezer, so for real parameters
``<n> = alpha_t^2 exp(-2r) + sinh(r)^2``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from qbatt.errors import ParameterError, TruncationError
from qbatt.fockspace import DensityMatrix, HilbertLayout, check_density

TAIL_TOL = 1e-10
MAX_CAVITY_DIM = 200
THERMAL_ZERO = 1e-12
CANCELLATION_TOL = 1e-8


# --- declarative specs -----------------------------------------------------------

@dataclass(frozen=True)
class Fock:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise ParameterError(f"Fock N must be a non-negative integer, got {self.N}")


@dataclass(frozen=True)
class Coherent:
    alpha: complex


@dataclass(frozen=True)
class SqueezedCoherent:
    zeta: complex
    alpha: complex

    def __post_init__(self):
        _check_zeta(self.zeta)


@dataclass(frozen=True)
class PhaseRandomizedSqueezed:
    zeta: complex
    alpha: complex

    def __post_init__(self):
        _check_zeta(self.zeta)


@dataclass(frozen=True)
class ThermalizedFock:
    N: int
    n_th: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise ParameterError(f"ThermalizedFock N must be a non-negative integer, got {self.N}")
        if not self.n_th >= 0:
            raise ParameterError(f"n_th must be >= 0, got {self.n_th}")


@dataclass(frozen=True)
class AttenuatedFock:
    N: int
    p: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise ParameterError(f"AttenuatedFock N must be a non-negative integer, got {self.N}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"attenuation p must lie in [0, 1], got {self.p}")


CavityStateSpec = Union[Fock, Coherent, SqueezedCoherent, PhaseRandomizedSqueezed, ThermalizedFock, AttenuatedFock]


@dataclass(frozen=True)
class QubitStateSpec:
    q: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ParameterError(f"qubit.q must lie in [0, 1], got {self.q}")


def _check_zeta(zeta):
    if not np.isfinite(complex(zeta)):
        raise ParameterError(f"squeezing parameter must be finite, got {zeta}")


# --- text serialization --------------------------------------------------------

_KIND_NAMES = {
    Fock: "fock",
    Coherent: "coherent",
    SqueezedCoherent: "squeezed",
    PhaseRandomizedSqueezed: "phase_randomized",
    ThermalizedFock: "thermal_fock",
    AttenuatedFock: "attenuated_fock",
}
_KINDS = {v: k for k, v in _KIND_NAMES.items()}


def _fmt_number(x) -> str:
    z = complex(x)
    if z.imag == 0:
        return repr(float(z.real)) if not float(z.real).is_integer() or isinstance(x, float) else str(int(z.real))
    return repr(z).strip("()")


def format_cavity(spec: CavityStateSpec) -> str:
    """Canonical text form, e.g. ``fock:5`` or ``squeezed:0.6,3.905``."""
    kind = _KIND_NAMES[type(spec)]
    values = [getattr(spec, f) for f in spec.__dataclass_fields__]
    return kind + ":" + ",".join(_fmt_number(v) for v in values)


def parse_cavity(text: str) -> CavityStateSpec:
    kind, _, rest = text.strip().partition(":")
    cls = _KINDS.get(kind.strip().lower())
    if cls is None:
        raise ParameterError(f"unknown cavity state kind {kind!r}; expected one of {sorted(_KINDS)}")
    fields = list(cls.__dataclass_fields__)
    parts = [p.strip() for p in rest.split(",")] if rest.strip() else []
    if len(parts) != len(fields):
        raise ParameterError(f"{kind} expects {len(fields)} value(s) ({', '.join(fields)}), got {len(parts)}")
    values = []
    for name, raw in zip(fields, parts):
        try:
            if name == "N":
                values.append(int(raw))
            elif name in ("n_th", "p"):
                values.append(float(raw))
            else:
                z = complex(raw.replace(" ", ""))
                values.append(z.real if z.imag == 0 else z)
        except ValueError as exc:
            raise ParameterError(f"cannot parse {name}={raw!r} for {kind}") from exc
    return cls(*values)


def format_qubit(spec: QubitStateSpec) -> str:
    return f"q:{spec.q!r}"


def parse_qubit(text: str) -> QubitStateSpec:
    key, _, val = text.strip().partition(":")
    if key.strip() != "q":
        raise ParameterError(f"qubit spec must look like 'q:<population>', got {text!r}")
    return QubitStateSpec(float(val))


# --- photon-number distributions ------------------------------------------------

def squeezed_displacement(zeta: complex, alpha: complex) -> complex:
    """Displacement ``beta`` such that ``S(zeta) D(alpha) = D(beta) S(zeta)``."""
    r, phi = abs(zeta), cmath.phase(zeta) if zeta != 0 else 0.0
    return alpha * math.cosh(r) - alpha.conjugate() * cmath.exp(1j * phi) * math.sinh(r)


def squeezed_amplitudes(zeta: complex, alpha: complex, dim: int) -> np.ndarray:
    """Fock amplitudes ``p_n`` of ``S(zeta) D(alpha)|0>`` for ``n < dim``.

    Uses the Hermite three-term recurrence rewritten for the normalized
    amplitudes so that neither ``H_n`` nor ``n!`` is ever formed.
    """
    zeta, alpha = complex(zeta), complex(alpha)
    r = abs(zeta)
    phi = cmath.phase(zeta) if r > 0 else 0.0
    beta = squeezed_displacement(zeta, alpha)
    t = math.tanh(r)
    et = cmath.exp(1j * phi) * t
    amp = np.zeros(dim, dtype=complex)
    amp[0] = cmath.exp(-0.5 * (abs(beta) ** 2 + beta.conjugate() ** 2 * et)) / math.sqrt(math.cosh(r))
    lead = beta + beta.conjugate() * et
    for n in range(dim - 1):
        prev = math.sqrt(n) * et * amp[n - 1] if n > 0 else 0.0
        amp[n + 1] = (lead * amp[n] - prev) / math.sqrt(n + 1)
    if not np.all(np.isfinite(amp)):
        raise OverflowError(f"squeezed amplitudes overflowed for zeta={zeta}, alpha={alpha}")
    return amp


def phase_randomized_weights(zeta: complex, alpha: complex, dim: int) -> np.ndarray:
    """Photon distribution of the phase-averaged squeezed coherent state."""
    beta = squeezed_displacement(complex(zeta), complex(alpha))
    r = abs(zeta)
    # depends on |beta| only; real parameters have beta = alpha_t * exp(-r)
    real = squeezed_amplitudes(r, abs(beta) * math.exp(r), dim)
    return np.abs(real) ** 2


def coherent_weights(alpha: complex, dim: int) -> np.ndarray:
    return np.abs(squeezed_amplitudes(0.0, alpha, dim)) ** 2


def thermalized_fock_weights(N: int, n_th: float, dim: int) -> np.ndarray:
    """Photon distribution of a Fock state after brief additive thermal noise.

    Each weight is an alternating double sum over factorial terms.  Terms are
    summed exactly with ``math.fsum``; when the error estimate
    ``eps * sum|terms| / |sum|`` exceeds ``CANCELLATION_TOL`` the weight is
    recomputed at 256-bit precision.
    """
    if n_th < 0:
        raise ParameterError(f"n_th must be >= 0, got {n_th}")
    out = np.zeros(dim)
    if n_th < THERMAL_ZERO:
        if N < dim:
            out[N] = 1.0
        return out
    x = n_th / (n_th + 1.0)
    lx = math.log(x)
    lfact = [math.lgamma(k + 1) for k in range(2 * dim + N + 2)]
    for m in range(dim):
        terms = []
        lo = max(0, m - N)
        for k in range(lo, m + 1):
            lk = lfact[m] - lfact[N] - math.log(n_th) - lfact[k] + _lbinom(N, m - k, lfact)
            for kp in range(lo, m + 1):
                e = k + kp + N - m
                logmag = lk - lfact[kp] + _lbinom(N, m - kp, lfact) + lfact[e] + (e + 1) * lx
                sign = -1.0 if (k + kp) % 2 else 1.0
                terms.append(sign * math.exp(logmag))
        total = math.fsum(terms)
        scale = math.fsum(abs(t) for t in terms)
        if scale > 0 and (total == 0 or 1e-15 * scale / abs(total) > CANCELLATION_TOL):
            total = _thermalized_weight_mp(N, n_th, m)
        out[m] = total
    return out


def _lbinom(n: int, k: int, lfact) -> float:
    return lfact[n] - lfact[k] - lfact[n - k]


def _thermalized_weight_mp(N: int, n_th: float, m: int) -> float:
    import mpmath

    with mpmath.workprec(256):
        nt = mpmath.mpf(n_th)
        x = nt / (nt + 1)
        s = mpmath.mpf(0)
        for k in range(max(0, m - N), m + 1):
            for kp in range(max(0, m - N), m + 1):
                e = k + kp + N - m
                term = (mpmath.binomial(N, m - k) * mpmath.binomial(N, m - kp) * mpmath.factorial(e)
                        * x ** (e + 1) / (mpmath.factorial(k) * mpmath.factorial(kp)))
                s += term if (k + kp) % 2 == 0 else -term
        return float(mpmath.factorial(m) / (mpmath.factorial(N) * nt) * s)


def attenuated_fock_weights(N: int, p: float, dim: int) -> np.ndarray:
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"attenuation p must lie in [0, 1], got {p}")
    if N >= dim:
        raise TruncationError(f"attenuated Fock N={N} needs cavity_dim > {N}, got {dim}")
    out = np.zeros(dim)
    for k in range(N + 1):
        out[k] = math.comb(N, k) * p**k * (1 - p) ** (N - k)
    return out


# --- DensityMatrix constructors -----------------------------------------------

def _cavity_dm(m: np.ndarray, **meta) -> DensityMatrix:
    return DensityMatrix(HilbertLayout(0, m.shape[0]), m, dict(meta))


def _diag_state(weights: np.ndarray, label: str) -> DensityMatrix:
    tail = max(0.0, 1.0 - float(math.fsum(weights)))
    w = np.clip(weights, 0.0, None)
    w = w / w.sum()
    return _cavity_dm(np.diag(w).astype(complex), kind=label, tail_mass=tail)


def _pure_state(amp: np.ndarray, label: str) -> DensityMatrix:
    norm2 = float(np.sum(np.abs(amp) ** 2))
    tail = max(0.0, 1.0 - norm2)
    psi = amp / math.sqrt(norm2)
    return _cavity_dm(np.outer(psi, psi.conj()), kind=label, tail_mass=tail)


def make_fock(N: int, cavity_dim: int) -> DensityMatrix:
    if N >= cavity_dim:
        raise TruncationError(f"Fock N={N} needs cavity_dim >= {N + 1}, got {cavity_dim}")
    w = np.zeros(cavity_dim)
    w[N] = 1.0
    return _diag_state(w, "fock")


def make_coherent(alpha: complex, cavity_dim: int) -> DensityMatrix:
    amp = squeezed_amplitudes(0.0, alpha, cavity_dim)
    _check_tail(np.abs(amp) ** 2, "coherent", lambda d: coherent_weights(alpha, d))
    return _pure_state(amp, "coherent")


def make_squeezed_coherent(zeta: complex, alpha: complex, cavity_dim: int) -> DensityMatrix:
    amp = squeezed_amplitudes(zeta, alpha, cavity_dim)
    _check_tail(np.abs(amp) ** 2, "squeezed", lambda d: np.abs(squeezed_amplitudes(zeta, alpha, d)) ** 2)
    return _pure_state(amp, "squeezed")


def make_phase_randomized(zeta: complex, alpha: complex, cavity_dim: int) -> DensityMatrix:
    w = phase_randomized_weights(zeta, alpha, cavity_dim)
    _check_tail(w, "phase_randomized", lambda d: phase_randomized_weights(zeta, alpha, d))
    return _diag_state(w, "phase_randomized")


def make_thermalized_fock(N: int, n_th: float, cavity_dim: int) -> DensityMatrix:
    if n_th < 0:
        raise ParameterError(f"n_th must be >= 0, got {n_th}")
    if N >= cavity_dim:
        raise TruncationError(f"thermalized Fock N={N} needs cavity_dim > {N}, got {cavity_dim}")
    w = thermalized_fock_weights(N, n_th, cavity_dim)
    _check_tail(w, "thermal_fock", lambda d: thermalized_fock_weights(N, n_th, d))
    return _diag_state(w, "thermal_fock")


def make_attenuated_fock(N: int, p: float, cavity_dim: int) -> DensityMatrix:
    return _diag_state(attenuated_fock_weights(N, p, cavity_dim), "attenuated_fock")


def make_qubit(q: float) -> np.ndarray:
    """``q|e><e| + (1-q)|g><g|`` in the ``(|e>, |g>)`` basis."""
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"qubit.q must lie in [0, 1], got {q}")
    rho = np.diag([q, 1.0 - q]).astype(complex)
    check_density(rho)
    return rho


def _check_tail(weights: np.ndarray, label: str, weights_at):
    tail = 1.0 - math.fsum(weights)
    if tail >= TAIL_TOL:
        need = _smallest_dim(weights_at, start=len(weights) + 1)
        hint = f"; needs cavity_dim >= {need}" if need is not None else f"; exceeds the {MAX_CAVITY_DIM}-level cap"
        raise TruncationError(
            f"{label}: tail probability {tail:.3g} beyond cavity_dim={len(weights)} is not below {TAIL_TOL}{hint}"
        )


def _smallest_dim(weights_at, start: int = 2, cap: int = MAX_CAVITY_DIM) -> int | None:
    w = weights_at(cap)
    cum = np.cumsum(w)
    for d in range(max(start, 2), cap + 1):
        if 1.0 - cum[d - 1] < TAIL_TOL:
            return d
    return None


# --- dispatch on specs ---------------------------------------------------------

def nominal_mean_photons(spec: CavityStateSpec) -> float:
    """Photon budget used to normalize averaged SNRs.

    Noisy Fock preparations report their nominal ``N``.
    """
    if isinstance(spec, (Fock, ThermalizedFock, AttenuatedFock)):
        return float(spec.N)
    if isinstance(spec, Coherent):
        return abs(spec.alpha) ** 2
    beta = squeezed_displacement(complex(spec.zeta), complex(spec.alpha))
    return abs(beta) ** 2 + math.sinh(abs(spec.zeta)) ** 2


def weights_function(spec: CavityStateSpec):
    """``dim -> photon-number weights`` for any spec."""
    if isinstance(spec, Fock):
        return lambda d: np.eye(1, d, spec.N).ravel() if spec.N < d else np.zeros(d)
    if isinstance(spec, Coherent):
        return lambda d: coherent_weights(spec.alpha, d)
    if isinstance(spec, SqueezedCoherent):
        return lambda d: np.abs(squeezed_amplitudes(spec.zeta, spec.alpha, d)) ** 2
    if isinstance(spec, PhaseRandomizedSqueezed):
        return lambda d: phase_randomized_weights(spec.zeta, spec.alpha, d)
    if isinstance(spec, ThermalizedFock):
        return lambda d: thermalized_fock_weights(spec.N, spec.n_th, d)
    if isinstance(spec, AttenuatedFock):
        return lambda d: attenuated_fock_weights(spec.N, spec.p, d) if spec.N < d else np.zeros(d)
    raise TypeError(f"not a cavity state spec: {spec!r}")


def choose_cavity_dim(spec: CavityStateSpec, num_qubits: int = 1) -> int:
    """Truncation rule: ``N + M + 3`` for Fock-supported states, else the
    smallest dimension with tail below ``TAIL_TOL`` plus ``M`` spare levels."""
    if isinstance(spec, (Fock, AttenuatedFock)):
        return spec.N + num_qubits + 3
    if isinstance(spec, ThermalizedFock) and spec.n_th < THERMAL_ZERO:
        return spec.N + num_qubits + 3
    d = _smallest_dim(weights_function(spec))
    if d is None:
        tail = 1.0 - math.fsum(weights_function(spec)(MAX_CAVITY_DIM))
        raise TruncationError(
            f"{format_cavity(spec)}: tail probability {tail:.3g} at the {MAX_CAVITY_DIM}-level cap is not below {TAIL_TOL}"
        )
    d += num_qubits
    if isinstance(spec, ThermalizedFock):
        d = max(d, spec.N + num_qubits + 3)
    return max(d, 2)


def materialize(spec: CavityStateSpec, cavity_dim: int | None = None, num_qubits: int = 1) -> DensityMatrix:
    d = choose_cavity_dim(spec, num_qubits) if cavity_dim is None else cavity_dim
    if isinstance(spec, Fock):
        return make_fock(spec.N, d)
    if isinstance(spec, Coherent):
        return make_coherent(spec.alpha, d)
    if isinstance(spec, SqueezedCoherent):
        return make_squeezed_coherent(spec.zeta, spec.alpha, d)
    if isinstance(spec, PhaseRandomizedSqueezed):
        return make_phase_randomized(spec.zeta, spec.alpha, d)
    if isinstance(spec, ThermalizedFock):
        return make_thermalized_fock(spec.N, spec.n_th, d)
    if isinstance(spec, AttenuatedFock):
        return make_attenuated_fock(spec.N, spec.p, d)
    raise TypeError(f"not a cavity state spec: {spec!r}")


def alpha_for_mean_photons(r: float, mean_photons: float) -> float | None:
    """Real ``alpha_t`` giving ``<n> = alpha_t^2 e^{-2r} + sinh(r)^2``, or None if infeasible."""
    rem = mean_photons - math.sinh(r) ** 2
    if rem < -1e-15:
        return None
    return math.sqrt(max(rem, 0.0)) * math.exp(r)
