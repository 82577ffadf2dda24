"""Sequential and parallel charging protocols and their figures of merit.

Every window starts from ``rho_qubits (x) rho_cav`` with diagonal qubit
states, so the initial state commutes with the qubit energy ``O``.  The two
first moments of the energy change then follow exactly from traces,

    mean = Tr[O rho(t)] - Tr[O rho0]
    m2   = Tr[O^2 rho(t)] - 2 Tr[O U (O rho0) U^dag] + Tr[O^2 rho0],

which is what the counting-field derivatives reduce to.  For constant
couplings these traces are evaluated on the whole time grid at once from an
eigendecomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from qbatt.dynamics import (
    ModelParams,
    SpectralPropagator,
    free_hamiltonian,
    interaction,
    model_propagator,
    propagate_tilted,
    qubit_energy_diag,
    tc2_evolution,
    TimeDependentHamiltonian,
)
from qbatt.errors import ParameterError, ResourceError, SentinelError, TruncationError
from qbatt.fcs import clip_variance, snr_array
from qbatt.fockspace import DensityMatrix, HilbertLayout, partial_trace
from qbatt.states import (
    CavityStateSpec,
    QubitStateSpec,
    choose_cavity_dim,
    format_cavity,
    make_qubit,
    materialize,
    nominal_mean_photons,
)

SEQUENTIAL, PARALLEL = "sequential", "parallel"
MAX_SNR, MAX_FIDELITY = "max_snr", "max_fidelity"
DEFAULT_POINTS = 2002
MAX_PARALLEL_QUBITS = 6
MAX_DENSE_DIM = 4096
TOP_LEVEL_TOL = 1e-8


@dataclass(frozen=True)
class TauGrid:
    """``points`` samples of ``g*tau`` on ``[0, g_tau_max]``.

    With ``g_tau_max=None`` each window uses ``1.5 pi / sqrt(max(1, <n> - j + 1))``.
    """

    points: int = DEFAULT_POINTS
    g_tau_max: float | None = None

    def __post_init__(self):
        if self.points < 100:
            raise ParameterError(f"tau_grid.points must be >= 100, got {self.points}")
        if self.g_tau_max is not None and not self.g_tau_max > 0:
            raise ParameterError(f"tau_grid.g_tau_max must be positive, got {self.g_tau_max}")

    def window(self, mean_photons: float, j: int) -> np.ndarray:
        top = self.g_tau_max
        if top is None:
            top = 1.5 * math.pi / math.sqrt(max(1.0, mean_photons - j + 1))
        return np.linspace(0.0, top, self.points)


@dataclass(frozen=True)
class ProtocolSpec:
    kind: str
    num_qubits: int
    cavity: CavityStateSpec
    qubit: QubitStateSpec = field(default_factory=QubitStateSpec)
    params: ModelParams = field(default_factory=ModelParams)
    tau_grid: TauGrid = field(default_factory=TauGrid)
    window_objective: str = MAX_SNR
    cavity_dim: int | None = None

    def __post_init__(self):
        if self.kind not in (SEQUENTIAL, PARALLEL):
            raise ParameterError(f"kind must be {SEQUENTIAL!r} or {PARALLEL!r}, got {self.kind!r}")
        if self.num_qubits < 1:
            raise ParameterError(f"num_qubits must be >= 1, got {self.num_qubits}")
        if self.window_objective not in (MAX_SNR, MAX_FIDELITY):
            raise ParameterError(f"unknown window objective {self.window_objective!r}")

    def with_cavity(self, cavity: CavityStateSpec) -> ProtocolSpec:
        return replace(self, cavity=cavity, cavity_dim=None)

    def resolved_cavity_dim(self) -> int:
        if self.cavity_dim is not None:
            return self.cavity_dim
        return choose_cavity_dim(self.cavity, self.num_qubits)


@dataclass(frozen=True, eq=False)
class WindowResult:
    index: int
    g_tau: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    snr: np.ndarray
    fidelity: np.ndarray
    chosen: int
    cavity_after: DensityMatrix

    @property
    def g_tau_star(self) -> float:
        return float(self.g_tau[self.chosen])

    @property
    def max_snr(self) -> float:
        return float(self.snr[self.chosen])

    @property
    def max_fidelity(self) -> float:
        return float(self.fidelity.max())


@dataclass(frozen=True, eq=False)
class ChargeReport:
    spec: ProtocolSpec
    windows: list[WindowResult]
    cavity_dim: int
    tail_mass: float
    collective: WindowResult | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def window_max_snr(self) -> np.ndarray:
        return np.array([w.max_snr for w in self.windows])

    @property
    def g_tau_stars(self) -> np.ndarray:
        return np.array([w.g_tau_star for w in self.windows])

    @property
    def tau_charge(self) -> float:
        """Total charging time (``1/omega`` units)."""
        return float(self.g_tau_stars.sum()) / self.spec.params.g

    @property
    def final_cavity(self) -> DensityMatrix:
        return self.windows[-1].cavity_after


# --- per-window statistics -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Series:
    mean: np.ndarray
    variance: np.ndarray
    fidelity: np.ndarray


def _initial_state(qubit: QubitStateSpec, cav: DensityMatrix, num_qubits: int) -> np.ndarray:
    rq = make_qubit(qubit.q)
    reg = np.ones((1, 1))
    for _ in range(num_qubits):
        reg = np.kron(reg, rq)
    return np.kron(reg, cav.entries)


def _excited_projector(layout: HilbertLayout, qubit: int) -> np.ndarray:
    """Diagonal of ``|e><e|`` on qubit ``qubit``."""
    return 0.5 + qubit_energy_diag(layout, 1.0, qubit)


def _spectral_series(prop: SpectralPropagator, rho0, o, p_e, gts, g):
    ts = gts / g
    o_rho0 = o[:, None] * rho0
    tr_o = prop.trace_series(o, rho0, ts).real
    tr_o2 = prop.trace_series(o * o, rho0, ts).real
    tr_cross = prop.trace_series(o, o_rho0, ts).real
    fid = prop.trace_series(p_e, rho0, ts).real
    return tr_o, tr_o2, tr_cross, fid


def _pointwise_series(unitaries, rho0, o, p_e):
    n = len(unitaries)
    tr_o, tr_o2, tr_cross, fid = (np.empty(n) for _ in range(4))
    o_rho0 = o[:, None] * rho0
    for i, u in enumerate(unitaries):
        ur = u @ rho0
        diag_t = np.einsum("ij,ij->i", ur, u.conj()).real          # diag of U rho0 U^dag
        diag_c = np.einsum("ij,ij->i", u @ o_rho0, u.conj()).real
        tr_o[i], tr_o2[i] = o @ diag_t, (o * o) @ diag_t
        tr_cross[i], fid[i] = o @ diag_c, p_e @ diag_t
    return tr_o, tr_o2, tr_cross, fid


def _ode_series(params: ModelParams, layout: HilbertLayout, rho0, o, p_e, gts, tol):
    free = free_hamiltonian(params, layout)
    unit = interaction(layout, params.rwa, 1.0)
    h = TimeDependentHamiltonian(free, unit, params.profile)
    ts = gts / params.g
    states = propagate_tilted(rho0, h, h, ts, tol, layout)
    cross = propagate_tilted(o[:, None] * rho0, h, h, ts, tol, layout)
    diag_t = np.array([s.entries.diagonal().real for s in states])
    diag_c = np.array([s.entries.diagonal().real for s in cross])
    return diag_t @ o, diag_t @ (o * o), diag_c @ o, diag_t @ p_e


def window_series(params: ModelParams, layout: HilbertLayout, rho0: np.ndarray, gts: np.ndarray,
                  tilt_qubit: int | None, fidelity_qubit: int, method: str = "auto", tol: float = 1e-10):
    """Mean, variance and fidelity of one coupling window on a ``g*tau`` grid.

    ``tilt_qubit=None`` measures the energy of all qubits together.
    ``method`` is ``"spectral"``, ``"tc2"`` (resonant two-qubit closed form),
    ``"ode"`` (time-dependent coupling) or ``"auto"``.
    """
    o = qubit_energy_diag(layout, params.omega_qub, tilt_qubit)
    p_e = _excited_projector(layout, fidelity_qubit)
    off = o[:, None] * rho0 - rho0 * o[None, :]
    if np.max(np.abs(off), initial=0.0) > 1e-12:
        raise ValueError("the initial state must commute with the measured qubit energy")
    if method == "auto":
        if params.time_dependent:
            method = "ode"
        elif params.rwa and layout.num_qubits == 2 and params.detuning == 0:
            method = "tc2"
        else:
            method = "spectral"
    if method == "spectral":
        prop = model_propagator(params, layout)
        tr_o, tr_o2, tr_cross, fid = _spectral_series(prop, rho0, o, p_e, gts, params.g)
        unitary = prop.unitary
    elif method == "tc2":
        d = layout.cavity_dim
        unitary = lambda t: tc2_evolution(t, params, d).entries  # noqa: E731
        tr_o, tr_o2, tr_cross, fid = _pointwise_series([unitary(x / params.g) for x in gts], rho0, o, p_e)
    elif method == "ode":
        tr_o, tr_o2, tr_cross, fid = _ode_series(params, layout, rho0, o, p_e, gts, tol)
        unitary = None
    else:
        raise ValueError(f"unknown method {method!r}")
    o0 = float(np.real(o @ rho0.diagonal()))
    o20 = float(np.real((o * o) @ rho0.diagonal()))
    mean = tr_o - o0
    var = clip_variance(tr_o2 - 2.0 * tr_cross + o20 - mean * mean)
    return _Series(mean, var, np.clip(fid, 0.0, 1.0)), unitary


def _evolve_to(params, layout, rho0, unitary, g_tau, tol):
    t = g_tau / params.g
    if unitary is not None:
        u = unitary(t)
        return u @ rho0 @ u.conj().T
    free = free_hamiltonian(params, layout)
    h = TimeDependentHamiltonian(free, interaction(layout, params.rwa, 1.0), params.profile)
    return propagate_tilted(rho0, h, h, t, tol, layout).entries


def _choose(series: _Series, snr: np.ndarray, objective: str) -> int:
    # np.argmax returns the first maximum, i.e. the smallest tau on ties
    return int(np.argmax(snr if objective == MAX_SNR else series.fidelity))


def _cavity_after(rho_full: np.ndarray, layout: HilbertLayout, window: int) -> DensityMatrix:
    rho = DensityMatrix(layout, 0.5 * (rho_full + rho_full.conj().T))
    cav = partial_trace(rho, [0])
    top = float(cav.entries[-1, -1].real)
    if top > TOP_LEVEL_TOL:
        raise TruncationError(
            f"window {window}: population {top:.2e} reached the top cavity level {layout.n_max}; "
            "increase cavity_dim"
        )
    return cav


# --- protocols -----------------------------------------------------------------------

def run_sequential(spec: ProtocolSpec, method: str = "auto", tol: float = 1e-10) -> ChargeReport:
    """Charge ``M`` qubits one at a time, carrying the cavity state between windows."""
    if spec.kind != SEQUENTIAL:
        raise ParameterError("run_sequential needs a sequential spec")
    d = spec.resolved_cavity_dim()
    cav = materialize(spec.cavity, d, spec.num_qubits)
    tail = float(cav.meta.get("tail_mass", 0.0))
    layout = HilbertLayout(1, d)
    n_mean = nominal_mean_photons(spec.cavity)
    if method == "tc2":
        raise ParameterError("the two-qubit closed form does not apply to sequential windows")
    windows = []
    for j in range(1, spec.num_qubits + 1):
        gts = spec.tau_grid.window(n_mean, j)
        rho0 = _initial_state(spec.qubit, cav, 1)
        series, unitary = window_series(spec.params, layout, rho0, gts, 1, 1, method, tol)
        snr = snr_array(series.mean, series.variance)
        k = _choose(series, snr, spec.window_objective)
        rho_t = _evolve_to(spec.params, layout, rho0, unitary, gts[k], tol)
        cav = _cavity_after(rho_t, layout, j)
        windows.append(WindowResult(j, gts, series.mean, series.variance, snr, series.fidelity, k, cav))
    return ChargeReport(spec, windows, d, tail)


def check_parallel_resources(num_qubits: int, cavity_dim: int):
    if num_qubits > MAX_PARALLEL_QUBITS:
        raise ResourceError(f"parallel charging supports at most {MAX_PARALLEL_QUBITS} qubits, got {num_qubits}")
    if 2**num_qubits * cavity_dim > MAX_DENSE_DIM:
        raise ResourceError(
            f"2^{num_qubits} x {cavity_dim} = {2**num_qubits * cavity_dim} exceeds the dense limit {MAX_DENSE_DIM}"
        )


def run_parallel(spec: ProtocolSpec, method: str = "auto", tol: float = 1e-10, collective: bool = True) -> ChargeReport:
    """Couple all ``M`` qubits to the cavity at once.

    Single-qubit statistics are those of qubit 1 (all qubits are
    equivalent); the collective window tracks the energy of all qubits.
    """
    if spec.kind != PARALLEL:
        raise ParameterError("run_parallel needs a parallel spec")
    M = spec.num_qubits
    d = spec.resolved_cavity_dim()
    check_parallel_resources(M, d)
    cav = materialize(spec.cavity, d, M)
    tail = float(cav.meta.get("tail_mass", 0.0))
    layout = HilbertLayout(M, d)
    gts = spec.tau_grid.window(nominal_mean_photons(spec.cavity), 1)
    rho0 = _initial_state(spec.qubit, cav, M)
    series, unitary = window_series(spec.params, layout, rho0, gts, 1, 1, method, tol)
    snr = snr_array(series.mean, series.variance)
    k = _choose(series, snr, spec.window_objective)
    rho_t = _evolve_to(spec.params, layout, rho0, unitary, gts[k], tol)
    cav_after = _cavity_after(rho_t, layout, 1)
    single = WindowResult(1, gts, series.mean, series.variance, snr, series.fidelity, k, cav_after)
    coll = None
    if collective and M > 1:
        cs, _ = window_series(spec.params, layout, rho0, gts, None, 1, method, tol)
        csnr = snr_array(cs.mean, cs.variance)
        coll = WindowResult(1, gts, cs.mean, cs.variance, csnr, cs.fidelity, _choose(cs, csnr, spec.window_objective), cav_after)
    return ChargeReport(spec, [single], d, tail, coll)


def run_protocol(spec: ProtocolSpec, **kw) -> ChargeReport:
    return run_sequential(spec, **kw) if spec.kind == SEQUENTIAL else run_parallel(spec, **kw)


# --- figures of merit -----------------------------------------------------------------

def averaged_snr(report: ChargeReport, mean_photons: float | None = None, snr_cap: float | None = None) -> float:
    """``(1/<n>) sum_j max_tau SNR_j``.

    Divergent window maxima are only accepted when an explicit ``snr_cap``
    is supplied, in which case they are replaced by the cap.
    """
    n = nominal_mean_photons(report.spec.cavity) if mean_photons is None else mean_photons
    if not n > 0:
        raise ParameterError(f"mean photon number must be positive, got {n}")
    maxima = report.window_max_snr
    if np.isinf(maxima).any():
        if snr_cap is None:
            bad = [w.index for w in report.windows if math.isinf(w.max_snr)]
            raise SentinelError(
                f"windows {bad} have divergent SNR; pass snr_cap to substitute a finite value"
            )
        maxima = np.minimum(maxima, snr_cap)
    return float(maxima.sum() / n)


def _settings(spec: ProtocolSpec):
    return (spec.kind, spec.num_qubits, spec.qubit, spec.params, spec.tau_grid, spec.window_objective)


def advantage_D(fock_report: ChargeReport, gaussian_report: ChargeReport, mean_photons: float | None = None,
                snr_cap: float | None = None) -> float:
    """Averaged Fock SNR minus averaged Gaussian SNR at equal photon budget."""
    if _settings(fock_report.spec) != _settings(gaussian_report.spec):
        raise ParameterError("advantage_D needs reports that differ only in the cavity state")
    n = nominal_mean_photons(fock_report.spec.cavity) if mean_photons is None else mean_photons
    return averaged_snr(fock_report, n, snr_cap) - averaged_snr(gaussian_report, n, snr_cap)


def snr_per_time(report: ChargeReport, g: float | None = None) -> float:
    """Average of the window SNR maxima divided by ``g * tau_charge``."""
    g = report.spec.params.g if g is None else g
    g_tau_charge = g * report.tau_charge
    if g_tau_charge <= 0:
        raise ParameterError("tau_charge is zero; the SNR per time is undefined")
    return float(report.window_max_snr.mean() / g_tau_charge)


def describe(spec: ProtocolSpec) -> str:
    return f"{spec.kind} M={spec.num_qubits} cavity={format_cavity(spec.cavity)} q={spec.qubit.q:g}"
