"""Hamiltonians, counting-field tilts and (tilted) propagation.

Internal units: hbar = 1, energies in units of the qubit frequency, times in
units of ``1/omega_qub``.  Grids are usually specified in ``g*tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from qbatt.errors import IntegrationError, LayoutError, ParameterError, UnsupportedRegimeError
from qbatt.fockspace import (
    DensityMatrix,
    FockOperator,
    HilbertLayout,
    annihilation,
    embed,
    matrix_exp,
    _PAULI,
)


# --- parameters -------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    g: float


@dataclass(frozen=True)
class SmoothedSquare:
    """Logistic-edged square pulse of height ``g`` centred on ``t_tilde``."""

    g: float
    delta: float
    t_tilde: float

    def __post_init__(self):
        if not (self.delta > 0 and self.t_tilde > 0):
            raise ParameterError(f"SmoothedSquare needs delta > 0 and t_tilde > 0, got {self.delta}, {self.t_tilde}")

    @property
    def t1(self) -> float:
        return 20.0 * self.g * self.delta * self.t_tilde

    @property
    def t2(self) -> float:
        return 2.0 * self.t_tilde - 20.0 * self.g * self.delta * self.t_tilde


CouplingProfile = Union[Constant, SmoothedSquare]


@dataclass(frozen=True)
class ModelParams:
    omega_qub: float = 1.0
    omega_cav: float = 1.0
    g: float = 1e-2
    rwa: bool = True
    profile: CouplingProfile | None = None

    def __post_init__(self):
        if not (self.g > 0 and self.omega_qub > 0 and self.omega_cav > 0):
            raise ParameterError(
                f"need g, omega_qub, omega_cav > 0; got g={self.g}, omega_qub={self.omega_qub}, omega_cav={self.omega_cav}"
            )
        if self.profile is None:
            object.__setattr__(self, "profile", Constant(self.g))

    @property
    def detuning(self) -> float:
        return self.omega_qub - self.omega_cav

    @property
    def time_dependent(self) -> bool:
        return not isinstance(self.profile, Constant)

    @classmethod
    def from_ratio(cls, g: float = 1e-2, detuning_ratio: float = 0.0, rwa: bool = True, profile=None) -> ModelParams:
        """Qubit frequency 1, cavity frequency ``1 - detuning_ratio``."""
        return cls(omega_qub=1.0, omega_cav=1.0 - detuning_ratio, g=g, rwa=rwa, profile=profile)


@dataclass(frozen=True)
class TiltSpec:
    """Counting field ``chi`` on one qubit (``qubit=j``) or on all (``qubit=None``)."""

    chi: float
    qubit: int | None = 1

    def energy_diag(self, layout: HilbertLayout, omega_qub: float) -> np.ndarray:
        return qubit_energy_diag(layout, omega_qub, self.qubit)


def qubit_energy_diag(layout: HilbertLayout, omega_qub: float = 1.0, qubit: int | None = None) -> np.ndarray:
    """Diagonal of ``omega_qub * sigma_z/2`` on one qubit, or summed over all."""
    if qubit is not None and not 1 <= qubit <= layout.num_qubits:
        raise LayoutError(f"qubit {qubit} outside 1..{layout.num_qubits}")
    slots = range(1, layout.num_qubits + 1) if qubit is None else [qubit]
    diag = np.zeros(layout.dim)
    for j in slots:
        diag += embed(layout, {j: _PAULI["z"]}).entries.diagonal().real
    return 0.5 * omega_qub * diag


# --- Hamiltonians ------------------------------------------------------------------

def free_hamiltonian(params: ModelParams, layout: HilbertLayout) -> FockOperator:
    diag = qubit_energy_diag(layout, params.omega_qub) + params.omega_cav * layout.cavity_levels()
    return FockOperator(layout, np.diag(diag).astype(complex), "H_free")


def interaction(layout: HilbertLayout, rwa: bool = True, coupling: float = 1.0) -> FockOperator:
    """``coupling * sum_j (s+ a + s- a^dag)`` plus the counter-rotating terms when ``rwa`` is False."""
    a = annihilation(layout.cavity_dim)
    ad = a.conj().T
    m = np.zeros((layout.dim, layout.dim), dtype=complex)
    for j in range(1, layout.num_qubits + 1):
        m += embed(layout, {j: _PAULI["plus"], 0: a}).entries
        m += embed(layout, {j: _PAULI["minus"], 0: ad}).entries
        if not rwa:
            m += embed(layout, {j: _PAULI["plus"], 0: ad}).entries
            m += embed(layout, {j: _PAULI["minus"], 0: a}).entries
    return FockOperator(layout, coupling * m, "H_int" if rwa else "H_int+CRT")


def jc_hamiltonian(params: ModelParams, layout: HilbertLayout) -> FockOperator:
    if layout.num_qubits != 1:
        raise LayoutError(f"the JC Hamiltonian needs exactly one qubit, layout has {layout.num_qubits}")
    if not params.rwa:
        raise UnsupportedRegimeError("jc_hamiltonian is the RWA model; use rabi_hamiltonian")
    return tc_hamiltonian(params, layout)


def tc_hamiltonian(params: ModelParams, layout: HilbertLayout) -> FockOperator:
    if not params.rwa:
        raise UnsupportedRegimeError("tc_hamiltonian is the RWA model; use rabi_hamiltonian")
    h = free_hamiltonian(params, layout) + interaction(layout, True, params.g)
    return FockOperator(layout, h.entries, "H_TC" if layout.num_qubits > 1 else "H_JC")


def rabi_hamiltonian(params: ModelParams, layout: HilbertLayout) -> FockOperator:
    if layout.num_qubits != 1:
        raise LayoutError(f"the Rabi Hamiltonian needs exactly one qubit, layout has {layout.num_qubits}")
    h = free_hamiltonian(params, layout) + interaction(layout, False, params.g)
    return FockOperator(layout, h.entries, "H_Rabi")


def model_hamiltonian(params: ModelParams, layout: HilbertLayout) -> FockOperator:
    return rabi_hamiltonian(params, layout) if not params.rwa else tc_hamiltonian(params, layout)


def excitation_number(layout: HilbertLayout) -> FockOperator:
    """``sum_j sigma_z^(j)/2 + N``."""
    diag = qubit_energy_diag(layout, 1.0) + layout.cavity_levels()
    return FockOperator(layout, np.diag(diag).astype(complex), "K")


def coupling_J(t: float | np.ndarray, profile: CouplingProfile):
    if isinstance(profile, Constant):
        return np.full_like(np.asarray(t, dtype=float), profile.g) if np.ndim(t) else profile.g
    t = np.asarray(t, dtype=float)
    g, d, t1, t2 = profile.g, profile.delta, profile.t1, profile.t2
    rise = g * _logistic((t - t1) / d)
    fall = g * _logistic(-(t - t2) / d)
    out = np.where(t < t1 + 10 * d, rise, np.where(t > t2 - 10 * d, fall, g))
    return float(out) if out.ndim == 0 else out


def _logistic(x):
    # 1 / (1 + exp(-x)) without overflow
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --- tilting -------------------------------------------------------------------------

def tilt_interaction(
    h_int: FockOperator, layout: HilbertLayout, tilt: TiltSpec, omega_qub: float, method: str = "phase"
) -> tuple[FockOperator, FockOperator]:
    """Return ``(H_int,+chi, H_int,-chi)`` with ``H_int,chi = e^{i chi O/2} H_int e^{-i chi O/2}``.

    ``O`` is the energy of the tilted qubit(s).  ``method="phase"`` decorates
    matrix elements with the phases ``e^{i chi (o_k - o_l)/2}`` (O is
    diagonal); ``method="conjugate"`` performs the conjugation with
    :func:`matrix_exp`.
    """
    if h_int.layout != layout:
        raise LayoutError("h_int layout does not match")
    o = tilt.energy_diag(layout, omega_qub)
    out = []
    for chi in (tilt.chi, -tilt.chi):
        if method == "phase":
            phase = np.exp(0.5j * chi * (o[:, None] - o[None, :]))
            m = h_int.entries * phase
        elif method == "conjugate":
            O = FockOperator(layout, np.diag(o).astype(complex))
            left = matrix_exp(O, 0.5j * chi).entries
            right = matrix_exp(O, -0.5j * chi).entries
            m = left @ h_int.entries @ right
        else:
            raise ValueError(f"unknown tilt method {method!r}")
        out.append(FockOperator(layout, m, f"{h_int.label}[chi={chi:+g}]"))
    return out[0], out[1]


def tilted_hamiltonians(params: ModelParams, layout: HilbertLayout, tilt: TiltSpec) -> tuple[FockOperator, FockOperator]:
    """Full ``H_{+chi}, H_{-chi}`` for a constant-coupling model."""
    free = free_hamiltonian(params, layout)
    hint = interaction(layout, params.rwa, params.g)
    method = "phase" if params.rwa else "conjugate"
    hp, hm = tilt_interaction(hint, layout, tilt, params.omega_qub, method)
    return free + hp, free + hm


# --- propagation --------------------------------------------------------------------

@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """``H(t) = static + J(t) * coupled`` with a diagonal ``static`` part."""

    static: FockOperator
    coupled: FockOperator
    profile: CouplingProfile

    def __post_init__(self):
        if self.static.layout != self.coupled.layout:
            raise LayoutError("static and coupled parts must share a layout")
        off = self.static.entries - np.diag(self.static.entries.diagonal())
        if np.max(np.abs(off), initial=0.0) > 0:
            raise ValueError("the static part must be diagonal")

    @property
    def layout(self) -> HilbertLayout:
        return self.static.layout


def tilted_time_dependent(params: ModelParams, layout: HilbertLayout, tilt: TiltSpec | None):
    """``(H_{+chi}(t), H_{-chi}(t))`` for the model's coupling profile."""
    free = free_hamiltonian(params, layout)
    unit = interaction(layout, params.rwa, 1.0)
    if tilt is None:
        hp = hm = unit
    else:
        hp, hm = tilt_interaction(unit, layout, tilt, params.omega_qub, "phase" if params.rwa else "conjugate")
    return (TimeDependentHamiltonian(free, hp, params.profile), TimeDependentHamiltonian(free, hm, params.profile))


@dataclass(frozen=True, eq=False)
class TiltedState:
    """``rho_chi(t)``; generally not Hermitian.  Its trace is the generating function."""

    layout: HilbertLayout
    entries: np.ndarray
    t: float

    def trace(self) -> complex:
        return complex(np.trace(self.entries))


Hamiltonian = Union[FockOperator, TimeDependentHamiltonian]


def propagate_tilted(
    rho0: DensityMatrix | np.ndarray,
    h_plus: Hamiltonian,
    h_minus: Hamiltonian,
    times: float | Sequence[float],
    tol: float = 1e-10,
    layout: HilbertLayout | None = None,
):
    """Solve ``d rho/dt = -i (H_+ rho - rho H_-)`` from ``t=0``.

    Constant Hamiltonians are propagated exactly as ``U_+ rho0 U_-^dag``;
    time-dependent ones with an adaptive Runge-Kutta 5(4) integrator at
    relative and absolute tolerance ``tol``.  Returns one
    :class:`TiltedState` for scalar ``times`` and a list otherwise.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    layout = h_plus.layout if layout is None else layout
    if h_minus.layout != layout or h_plus.layout != layout:
        raise LayoutError("Hamiltonian layouts do not match")
    r0 = rho0.entries if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    if isinstance(rho0, DensityMatrix) and rho0.layout != layout:
        raise LayoutError("initial state layout does not match the Hamiltonians")
    scalar = np.ndim(times) == 0
    ts = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(ts < 0):
        raise ValueError("times must be non-negative")
    if isinstance(h_plus, FockOperator) and isinstance(h_minus, FockOperator):
        sp, sm = SpectralPropagator.from_operator(h_plus), SpectralPropagator.from_operator(h_minus)
        out = [TiltedState(layout, sp.unitary(t) @ r0 @ sm.unitary(t).conj().T, float(t)) for t in ts]
    elif isinstance(h_plus, TimeDependentHamiltonian) and isinstance(h_minus, TimeDependentHamiltonian):
        mats = _integrate_tilted(r0, h_plus, h_minus, ts, tol)
        out = [TiltedState(layout, m, float(t)) for m, t in zip(mats, ts)]
    else:
        raise TypeError("h_plus and h_minus must both be constant or both time dependent")
    return out[0] if scalar else out


class _NonFinite(ArithmeticError):
    pass


def _integrate_tilted(r0, hp: TimeDependentHamiltonian, hm: TimeDependentHamiltonian, ts, tol):
    # integrate in the frame of the diagonal static part; only the slow
    # coupling dynamics is left for the stepper
    ep = hp.static.entries.diagonal().real
    em = hm.static.entries.diagonal().real
    if not np.array_equal(ep, em):
        raise ValueError("tilted Hamiltonians must share their static part")
    dE = ep[:, None] - ep[None, :]
    kp, km = hp.coupled.entries, hm.coupled.entries
    n = r0.shape[0]
    profile = hp.profile
    last_ok = [0.0]

    def rhs(t, y):
        rho = y.reshape(n, n)
        rot = np.exp(1j * dE * t)
        j = coupling_J(t, profile)
        a = j * (kp * rot)  # e^{iH0 t} K_+ e^{-iH0 t}
        b = j * (km * rot)
        out = (-1j * (a @ rho - rho @ b)).ravel()
        # a NaN error norm would make the stepper shrink forever
        if not np.all(np.isfinite(out)):
            raise _NonFinite(t)
        last_ok[0] = max(last_ok[0], t)
        return out

    t_end = float(ts.max()) if ts.size else 0.0
    order = np.argsort(ts)
    results = [None] * len(ts)
    if t_end == 0.0:
        return [r0.copy() for _ in ts]
    try:
        sol = solve_ivp(rhs, (0.0, t_end), r0.ravel().astype(complex), method="RK45",
                        t_eval=ts[order], rtol=tol, atol=tol, dense_output=False)
    except _NonFinite as exc:
        raise IntegrationError(f"non-finite derivative at t={exc.args[0]:g}", last_ok[0]) from None
    if sol.status != 0:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f"tilted-state integration failed: {sol.message}", reached)
    for col, idx in enumerate(order):
        t = ts[idx]
        rho_i = sol.y[:, col].reshape(n, n)
        back = np.exp(-1j * ep * t)
        results[idx] = back[:, None] * rho_i * back.conj()[None, :]
    return results


@dataclass(frozen=True, eq=False)
class SpectralPropagator:
    """``U(t) = V exp(-i E t) V^dag`` for a Hermitian Hamiltonian.

    ``blocks`` optionally lists basis-index sets that the Hamiltonian never
    connects (excitation-number sectors under the RWA).  Eigenvectors then
    live inside their block and trace series are summed block by block.
    """

    evals: np.ndarray
    evecs: np.ndarray
    blocks: tuple[np.ndarray, ...] | None = None
    label: str = ""

    @classmethod
    def from_operator(cls, h: FockOperator | np.ndarray, blocks=None) -> SpectralPropagator:
        m = h.entries if isinstance(h, FockOperator) else np.asarray(h, dtype=complex)
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(m))):
            raise ValueError("SpectralPropagator needs a Hermitian Hamiltonian")
        m = 0.5 * (m + m.conj().T)
        label = getattr(h, "label", "")
        if blocks is None:
            w, v = np.linalg.eigh(m)
            return cls(w, v, None, label)
        blocks = tuple(np.asarray(b, dtype=int) for b in blocks)
        covered = np.zeros(m.shape[0], dtype=bool)
        for b in blocks:
            covered[b] = True
        if not covered.all():
            raise ValueError("blocks must cover every basis state")
        mask = np.zeros(m.shape, dtype=bool)
        for b in blocks:
            mask[np.ix_(b, b)] = True
        if np.max(np.abs(m[~mask]), initial=0.0) > 0:
            raise ValueError("the Hamiltonian couples different blocks")
        evals = np.zeros(m.shape[0])
        evecs = np.zeros(m.shape, dtype=complex)
        for b in blocks:
            w, v = np.linalg.eigh(m[np.ix_(b, b)])
            evals[b] = w
            evecs[np.ix_(b, b)] = v
        return cls(evals, evecs, blocks, label)

    @property
    def dim(self) -> int:
        return self.evals.size

    def unitary(self, t: float) -> np.ndarray:
        v = self.evecs
        return (v * np.exp(-1j * self.evals * t)) @ v.conj().T

    def evolve(self, rho: np.ndarray, t: float) -> np.ndarray:
        u = self.unitary(t)
        return u @ rho @ u.conj().T

    def trace_series(self, x: np.ndarray, y: np.ndarray, times: np.ndarray) -> np.ndarray:
        """``Tr[X U(t) Y U(t)^dag]`` for every ``t`` in ``times``.

        In the eigenbasis this is ``sum_kl X'_lk Y'_kl exp(-i (E_k - E_l) t)``.
        A one-dimensional ``x`` is read as a diagonal operator; with blocks
        set it must be diagonal, and the sum runs block by block.
        """
        times = np.asarray(times, dtype=float)
        y = np.asarray(y)
        x = np.asarray(x)
        if self.blocks is not None:
            if x.ndim != 1:
                raise ValueError("blocked trace series need a diagonal observable")
            return self._blocked_series(x, y, times)
        xm = np.diag(x) if x.ndim == 1 else x
        v = self.evecs
        xe = v.conj().T @ xm @ v
        ye = v.conj().T @ y @ v
        c = xe.T * ye
        left = np.exp(-1j * np.outer(times, self.evals))
        return np.einsum("tk,tk->t", left @ c, left.conj())

    def _blocked_series(self, x, y, times):
        out = np.zeros(times.size, dtype=complex)
        by_size: dict[int, list[np.ndarray]] = {}
        for b in self.blocks:
            by_size.setdefault(b.size, []).append(b)
        for size, group in by_size.items():
            idx = np.stack(group)                       # (nb, s)
            v = self.evecs[idx[:, :, None], idx[:, None, :]]  # (nb, s, s)
            e = self.evals[idx]
            xb = x[idx]
            yb = y[idx[:, :, None], idx[:, None, :]]
            vh = np.conj(np.swapaxes(v, 1, 2))
            xe = vh @ (xb[:, :, None] * v)
            ye = vh @ yb @ v
            c = np.swapaxes(xe, 1, 2) * ye
            # skip sectors that carry no weight
            keep = np.any(c != 0, axis=(1, 2))
            if not keep.any():
                continue
            c, e = c[keep], e[keep]
            phase = np.exp(-1j * times[:, None, None] * e[None, :, :])   # (T, nb, s)
            out += np.einsum("tbk,bkl,tbl->t", phase, c, phase.conj(), optimize=True)
        return out


def excitation_blocks(layout: HilbertLayout) -> tuple[np.ndarray, ...]:
    """Basis indices grouped by total excitation number (qubits plus photons)."""
    k = layout.qubit_excitations() + layout.cavity_levels()
    return tuple(np.flatnonzero(k == v) for v in np.unique(k))


def jc_spectral(params: ModelParams, cavity_dim: int) -> SpectralPropagator:
    """Closed-form eigensystem of the resonant JC Hamiltonian on a truncated cavity.

    Pairs ``|e,n>, |g,n+1>`` split into ``(|e,n> +- |g,n+1>)/sqrt(2)`` with
    energies ``omega (n + 1/2) +- g sqrt(n+1)``; ``|g,0>`` and the top level
    ``|e, n_max>`` are uncoupled in the truncated model.
    """
    if params.detuning != 0 or not params.rwa or params.time_dependent:
        raise UnsupportedRegimeError("the analytic JC eigensystem needs resonance, RWA and constant coupling")
    d = cavity_dim
    w, g = params.omega_qub, params.g
    dim = 2 * d
    evals = np.zeros(dim)
    evecs = np.zeros((dim, dim), dtype=complex)
    s = 1.0 / math.sqrt(2.0)
    blocks = [np.array([d]), np.array([d - 1])]   # |g,0> and |e,n_max>
    evals[d], evecs[d, d] = -0.5 * w, 1.0
    evals[d - 1], evecs[d - 1, d - 1] = 0.5 * w + w * (d - 1), 1.0
    for n in range(d - 1):
        e_i, g_i = n, d + n + 1      # qubit e occupies the first d basis states
        centre, split = w * (n + 0.5), g * math.sqrt(n + 1)
        evals[e_i], evals[g_i] = centre + split, centre - split
        evecs[e_i, e_i], evecs[g_i, e_i] = s, s
        evecs[e_i, g_i], evecs[g_i, g_i] = s, -s
        blocks.append(np.array([e_i, g_i]))
    return SpectralPropagator(evals, evecs, tuple(blocks), "JC(analytic)")


def model_propagator(params: ModelParams, layout: HilbertLayout) -> SpectralPropagator:
    """Spectral propagator of a constant-coupling model.

    Resonant single-qubit RWA models use the closed-form JC eigensystem;
    other RWA models are diagonalized sector by sector; the Rabi model as a
    whole.
    """
    if params.time_dependent:
        raise UnsupportedRegimeError("spectral propagation needs a constant coupling")
    if params.rwa and layout.num_qubits == 1 and params.detuning == 0:
        return jc_spectral(params, layout.cavity_dim)
    h = model_hamiltonian(params, layout)
    return SpectralPropagator.from_operator(h, excitation_blocks(layout) if params.rwa else None)


# --- analytic two-qubit Tavis-Cummings ------------------------------------------------

def _cos_sqrt(x: float, s: np.ndarray) -> np.ndarray:
    """``cos(x sqrt(s))`` continued to ``s < 0`` as ``cosh(x sqrt(-s))``."""
    s = np.asarray(s, dtype=float)
    return np.where(s >= 0, np.cos(x * np.sqrt(np.abs(s))), np.cosh(x * np.sqrt(np.abs(s))))


def _sinc_sqrt(x: float, s: np.ndarray) -> np.ndarray:
    """``sin(x sqrt(s)) / sqrt(s)``, entire in ``s`` (equals ``x`` at ``s = 0``)."""
    s = np.asarray(s, dtype=float)
    r = np.sqrt(np.abs(s))
    safe = np.where(r > 0, r, 1.0)
    pos = np.sin(x * r) / safe
    neg = np.sinh(x * r) / safe
    return np.where(r == 0, x, np.where(s > 0, pos, neg))


def _cosm1_over(x: float, s: np.ndarray) -> np.ndarray:
    """``(-1 + cos(x sqrt(2 s))) / s`` with the ``-x^2`` limit at ``s = 0``."""
    s = np.asarray(s, dtype=float)
    safe = np.where(s != 0, s, 1.0)
    return np.where(s == 0, -(x**2), (-1.0 + _cos_sqrt(x, 2 * s)) / safe)


def tc2_block_exp(g_tau: float, cavity_dim: int) -> list[list[np.ndarray]]:
    """Cavity-operator blocks ``a_ij`` of ``exp(-i H_int tau)`` for two qubits.

    Block indices follow the qubit basis ``ee, eg, ge, gg``.  Operator
    functions of ``N`` multiply from the left, e.g.
    ``a_14 = f(N) a^2``.
    """
    if cavity_dim < 3:
        raise LayoutError(f"tc2_block_exp needs cavity_dim >= 3, got {cavity_dim}")
    x = float(g_tau)
    n = np.arange(cavity_dim, dtype=float)
    a = annihilation(cavity_dim)
    ad = a.conj().T
    D = np.diag

    s3, s1, sm1 = 2 * n + 3, 2 * n + 1, 2 * n - 1
    a11 = D((n + 2 + (n + 1) * _cos_sqrt(x, 2 * s3)) / s3)
    a12 = -1j * D(_sinc_sqrt(x, 2 * s3)) @ a
    a14 = D(_cosm1_over(x, s3)) @ a @ a
    a21 = -1j * D(_sinc_sqrt(x, 2 * s1)) @ ad
    a22 = D((1 + _cos_sqrt(x, 2 * s1)) / 2)
    a23 = D((-1 + _cos_sqrt(x, 2 * s1)) / 2)
    a24 = -1j * D(_sinc_sqrt(x, 2 * s1)) @ a
    a41 = D(_cosm1_over(x, sm1)) @ ad @ ad
    a42 = -1j * D(_sinc_sqrt(x, 2 * sm1)) @ ad
    # N cos(.) vanishes at n = 0 where the cosine argument is imaginary
    a44 = D((n - 1 + n * _cos_sqrt(x, 2 * sm1)) / sm1)
    a22 = a22.astype(complex)
    return [
        [a11.astype(complex), a12, a12.copy(), a14.astype(complex)],
        [a21, a22, a23.astype(complex), a24],
        [a21.copy(), a23.astype(complex), a22.copy(), a24.copy()],
        [a41.astype(complex), a42, a42.copy(), a44.astype(complex)],
    ]


def assemble_blocks(blocks: list[list[np.ndarray]]) -> np.ndarray:
    return np.block(blocks)


def tc2_evolution(tau: float, params: ModelParams, cavity_dim: int) -> FockOperator:
    """Full two-qubit TC evolution operator at resonance.

    ``U = e^{-i w N tau} [a_ij * row phase]`` with row phases
    ``e^{-i w tau}, 1, 1, e^{+i w tau}`` for ``ee, eg, ge, gg``.
    """
    if params.detuning != 0:
        raise UnsupportedRegimeError(
            "tc2_evolution is only valid at resonance; use propagate_tilted for detuned models"
        )
    if not params.rwa or params.time_dependent:
        raise UnsupportedRegimeError("tc2_evolution needs RWA and a constant coupling")
    w = params.omega_qub
    blocks = tc2_block_exp(params.g * tau, cavity_dim)
    row_phase = [np.exp(-1j * w * tau), 1.0, 1.0, np.exp(1j * w * tau)]
    cav_phase = np.exp(-1j * w * np.arange(cavity_dim) * tau)
    rows = [[cav_phase[:, None] * (row_phase[i] * blocks[i][j]) for j in range(4)] for i in range(4)]
    return FockOperator(HilbertLayout(2, cavity_dim), np.block(rows), f"U_TC2({tau:g})")
