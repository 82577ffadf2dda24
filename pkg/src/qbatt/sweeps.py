"""Parameter sweeps of the Fock-versus-Gaussian advantage.

Every simulation in a sweep is an independent task, so sweeps fan out over
a process pool and collect results in input order.  That keeps tables
deterministic for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from qbatt.dynamics import ModelParams, SmoothedSquare
from qbatt.errors import ParameterError
from qbatt.protocols import (
    ProtocolSpec,
    averaged_snr,
    run_protocol,
    window_series,
    _initial_state,
)
from qbatt.fcs import snr_array
from qbatt.fockspace import HilbertLayout
from qbatt.states import (
    AttenuatedFock,
    Fock,
    PhaseRandomizedSqueezed,
    QubitStateSpec,
    ThermalizedFock,
    alpha_for_mean_photons,
    materialize,
    nominal_mean_photons,
)

AXIS_PARAMETERS = ("n_th", "attenuation_p", "detuning_ratio", "qubit_q", "mean_photons", "coupling_delta")
# axes that only degrade the Fock preparation; the Gaussian comparator stays ideal
FOCK_ONLY_AXES = ("n_th", "attenuation_p")
DEFAULT_R_GRID = tuple(round(0.05 * k, 2) for k in range(25))
DEFAULT_MEAN_PHOTONS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class SweepAxis:
    parameter: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.parameter not in AXIS_PARAMETERS:
            raise ParameterError(f"unknown sweep parameter {self.parameter!r}; expected one of {AXIS_PARAMETERS}")
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ParameterError("sweep axis values must be nonempty")
        if any(not math.isfinite(v) for v in vals):
            raise ParameterError("sweep axis values must be finite")
        if list(vals) != sorted(vals):
            raise ParameterError("sweep axis values must be sorted")
        lo, hi = {
            "n_th": (0.0, math.inf),
            "attenuation_p": (0.0, 1.0),
            "qubit_q": (0.0, 1.0),
            "mean_photons": (1.0, math.inf),
            "coupling_delta": (0.0, math.inf),
            "detuning_ratio": (-math.inf, 1.0),
        }[self.parameter]
        bad = [v for v in vals if not lo <= v <= hi]
        if bad or (self.parameter in ("coupling_delta",) and min(vals) <= 0):
            raise ParameterError(f"{self.parameter} values {bad or vals} are outside the physical range")
        if self.parameter == "mean_photons" and any(v != int(v) for v in vals):
            raise ParameterError("mean_photons values must be integers (Fock N = <n>)")


@dataclass(frozen=True)
class GaussianSearchSpace:
    """Squeezing magnitudes to try at a fixed photon budget ``mean_photons``."""

    mean_photons: float
    r_grid: tuple[float, ...] = DEFAULT_R_GRID

    def __post_init__(self):
        object.__setattr__(self, "r_grid", tuple(float(r) for r in self.r_grid))
        if not self.r_grid or min(self.r_grid) < 0:
            raise ParameterError("r_grid must be nonempty with r >= 0")
        if self.mean_photons < 0:
            raise ParameterError("mean_photons must be non-negative")

    def candidates(self) -> tuple[list[tuple[float, float]], list[str]]:
        """Feasible ``(r, alpha)`` pairs and a note for each skipped ``r``."""
        out, notes = [], []
        for r in self.r_grid:
            a = alpha_for_mean_photons(r, self.mean_photons)
            if a is None:
                notes.append(f"r={r:g} skipped: sinh(r)^2 exceeds <n>={self.mean_photons:g}")
            else:
                out.append((r, a))
        return out, notes


@dataclass(frozen=True)
class GaussianOptimum:
    r: float
    alpha: float
    averaged_snr: float
    notes: tuple[str, ...] = ()


# --- parallel map --------------------------------------------------------------------

def resolve_workers(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("QBATT_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ParameterError(f"thread count must be >= 1, got {threads}")
    return threads


def parallel_map(fn: Callable, tasks: Sequence, threads: int | None = None) -> list:
    """``[fn(t) for t in tasks]`` on a process pool, in input order."""
    workers = min(resolve_workers(threads), max(1, len(tasks)))
    if workers == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def _averaged_snr_task(args):
    """``(averaged SNR, whether a divergent window was capped)``."""
    spec, n, cap = args
    report = run_protocol(spec)
    return averaged_snr(report, n, cap), bool(np.isinf(report.window_max_snr).any())


# --- Gaussian optimization --------------------------------------------------------------

def _gaussian_tasks(search: GaussianSearchSpace, spec: ProtocolSpec, cap):
    cands, notes = search.candidates()
    tasks = [(spec.with_cavity(PhaseRandomizedSqueezed(r, a)), search.mean_photons, cap) for r, a in cands]
    return cands, notes, tasks


def _pick(cands, results, notes) -> GaussianOptimum:
    values = [v for v, _ in results]
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:        # strict: ties keep the smaller r
            best = i
    r, a = cands[best]
    return GaussianOptimum(r, a, float(values[best]), tuple(notes))


def optimize_gaussian(search: GaussianSearchSpace, spec: ProtocolSpec, threads: int | None = None,
                      snr_cap: float | None = None) -> GaussianOptimum:
    """Grid search of the phase-randomized squeezed comparator maximizing the averaged SNR."""
    cands, notes, tasks = _gaussian_tasks(search, spec, snr_cap)
    if not cands:
        raise ParameterError(f"no feasible squeezing in r_grid for <n>={search.mean_photons:g}")
    values = parallel_map(_averaged_snr_task, tasks, threads)
    return _pick(cands, values, notes)


# --- advantage sweeps ---------------------------------------------------------------------

@dataclass(frozen=True)
class DRow:
    axis_value: float
    mean_photons: int
    D: float
    fock_avg_snr: float
    gaussian_avg_snr: float
    r_opt: float
    alpha_opt: float
    capped: bool


@dataclass(frozen=True, eq=False)
class SweepResult:
    parameter: str
    rows: list[DRow]
    notes: list[str] = field(default_factory=list)


def _fock_cavity(parameter: str, value: float, n: int, base_cavity):
    if parameter == "n_th":
        return ThermalizedFock(n, value)
    if parameter == "attenuation_p":
        return AttenuatedFock(n, value)
    # keep the base spec's noise, if any, at the new photon number
    if isinstance(base_cavity, ThermalizedFock):
        return ThermalizedFock(n, base_cavity.n_th)
    if isinstance(base_cavity, AttenuatedFock):
        return AttenuatedFock(n, base_cavity.p)
    return Fock(n)


def _branch_spec(base: ProtocolSpec, parameter: str, value: float, n: int) -> ProtocolSpec:
    """Settings shared by both branches at one axis value."""
    spec = base
    if parameter == "detuning_ratio":
        p = base.params
        spec = replace(spec, params=replace(p, omega_cav=p.omega_qub * (1.0 - value)))
    elif parameter == "qubit_q":
        spec = replace(spec, qubit=QubitStateSpec(value))
    elif parameter == "coupling_delta":
        p = base.params
        tau_opt = math.pi / (2.0 * p.g * math.sqrt(max(n, 1)))
        profile = SmoothedSquare(p.g, value / p.g, tau_opt / 2.0)
        spec = replace(spec, params=replace(p, profile=profile))
    return spec


def sweep_D(axis: SweepAxis, base: ProtocolSpec, search_grid: Sequence[float] = DEFAULT_R_GRID,
            mean_photons: Sequence[int] = DEFAULT_MEAN_PHOTONS, threads: int | None = None,
            snr_cap: float | None = None) -> SweepResult:
    """Advantage ``D`` for every axis value and photon budget.

    ``base`` supplies everything except the cavity state.  On the
    ``n_th`` and ``attenuation_p`` axes only the Fock branch is noisy and
    the Gaussian optimum is computed once per ``<n>``; the other axes act
    on both branches.  ``snr_cap`` substitutes divergent window maxima
    (ideal Fock windows); rows where it was used are flagged ``capped``.
    """
    if axis.parameter == "mean_photons":
        mean_photons = [int(v) for v in axis.values]
        values = [float("nan")]
    else:
        values = list(axis.values)
    mean_photons = [int(n) for n in mean_photons]
    fock_only = axis.parameter in FOCK_ONLY_AXES
    notes: list[str] = []
    tasks = []
    fock_index = {}
    for v in values:
        for n in mean_photons:
            spec = _branch_spec(base, axis.parameter, v, n)
            cav = _fock_cavity(axis.parameter, v, n, base.cavity)
            fock_index[(v, n)] = len(tasks)
            tasks.append((spec.with_cavity(cav), n, snr_cap))
    gauss_index = {}
    gauss_keys = [(None, n) for n in mean_photons] if fock_only else [(v, n) for v in values for n in mean_photons]
    for key in gauss_keys:
        v, n = key
        spec = base if v is None else _branch_spec(base, axis.parameter, v, n)
        cands, cnotes, gtasks = _gaussian_tasks(GaussianSearchSpace(n, tuple(search_grid)), spec, snr_cap)
        if not cands:
            raise ParameterError(f"no feasible squeezing for <n>={n}")
        notes.extend(cnotes if v is None else [f"{axis.parameter}={v:g}: {c}" for c in cnotes])
        gauss_index[key] = (cands, len(tasks), len(gtasks), cnotes)
        tasks.extend(gtasks)

    results = parallel_map(_averaged_snr_task, tasks, threads)

    optima = {}
    for key, (cands, start, count, cnotes) in gauss_index.items():
        optima[key] = _pick(cands, results[start : start + count], cnotes)
    rows = []
    for v in values:
        for n in mean_photons:
            fock, capped = results[fock_index[(v, n)]]
            opt = optima[(None, n) if fock_only else (v, n)]
            D = fock - opt.averaged_snr
            rows.append(DRow(v if axis.parameter != "mean_photons" else float(n), n, D, fock, opt.averaged_snr,
                             opt.r, opt.alpha, capped))
            if not math.isfinite(D):
                raise ParameterError(f"non-finite D at {axis.parameter}={v:g}, <n>={n}")
    return SweepResult(axis.parameter, rows, sorted(set(notes), key=notes.index))


# --- single-qubit model comparisons ---------------------------------------------------------

def _single_window(spec: ProtocolSpec, method: str = "auto"):
    """One-qubit window statistics on the protocol's grid: ``(g_tau, mean, snr)``."""
    d = spec.resolved_cavity_dim()
    cav = materialize(spec.cavity, d, 1)
    layout = HilbertLayout(1, d)
    gts = spec.tau_grid.window(nominal_mean_photons(spec.cavity), 1)
    rho0 = _initial_state(spec.qubit, cav, 1)
    series, _ = window_series(spec.params, layout, rho0, gts, 1, 1, method)
    return gts, series.mean, snr_array(series.mean, series.variance)


@dataclass(frozen=True)
class RwaRow:
    g: float
    fock_max_snr_jc: float
    fock_max_snr_rabi: float
    gaussian_max_snr_jc: float
    gaussian_max_snr_rabi: float
    gap_rabi: float
    deviation_gaussian_snr: float
    deviation_fock_mean: float


def _rwa_task(args):
    spec, rwa = args
    return _single_window(replace(spec, params=replace(spec.params, rwa=rwa)))


def sweep_rwa_comparison(spec: ProtocolSpec, gaussian, couplings: Sequence[float],
                         threads: int | None = None) -> list[RwaRow]:
    """Rabi versus JC for the Fock cavity of ``spec`` and the ``gaussian`` cavity spec.

    Deviations are max-norm differences between the Rabi and JC curves on
    the same ``g*tau`` grid: the Gaussian SNR curve (finite everywhere) and
    the Fock mean-energy curve (its SNR diverges under the RWA).
    """
    if spec.num_qubits != 1:
        raise ParameterError("the RWA comparison is defined for a single qubit")
    tasks = []
    for g in couplings:
        p = replace(spec.params, g=float(g))
        for cav in (spec.cavity, gaussian):
            s = replace(spec, params=p, cavity=cav, cavity_dim=spec.cavity_dim if cav == spec.cavity else None)
            tasks += [(s, True), (s, False)]
    res = parallel_map(_rwa_task, tasks, threads)
    rows = []
    for i, g in enumerate(couplings):
        (_, fm_jc, fs_jc), (_, fm_rb, fs_rb), (_, _, gs_jc), (_, _, gs_rb) = res[4 * i : 4 * i + 4]
        rows.append(RwaRow(
            float(g), float(fs_jc.max()), float(fs_rb.max()), float(gs_jc.max()), float(gs_rb.max()),
            float(fs_rb.max() - gs_rb.max()),
            float(np.max(np.abs(gs_rb - gs_jc))), float(np.max(np.abs(fm_rb - fm_jc))),
        ))
    return rows


@dataclass(frozen=True)
class ProfileRow:
    g_delta: float
    fock_max_snr: float
    gaussian_max_snr: float
    gap: float


def _profile_task(args):
    spec, = args
    _, _, snr = _single_window(spec)
    return float(snr.max())


def coupling_profile_params(params: ModelParams, g_delta: float, photons: float) -> ModelParams:
    """``params`` with a smoothed-square coupling centred on half the ideal Fock charging time."""
    tau_opt = math.pi / (2.0 * params.g * math.sqrt(max(photons, 1.0)))
    return replace(params, profile=SmoothedSquare(params.g, g_delta / params.g, tau_opt / 2.0))


def sweep_coupling_profile(spec: ProtocolSpec, gaussian, deltas: Sequence[float],
                           threads: int | None = None) -> list[ProfileRow]:
    """Max Fock SNR minus max Gaussian SNR under a smoothed-square ``J(t)`` for each ``g*delta``."""
    if spec.num_qubits != 1:
        raise ParameterError("the coupling-profile sweep is defined for a single qubit")
    n = nominal_mean_photons(spec.cavity)
    tasks = []
    for gd in deltas:
        p = coupling_profile_params(spec.params, float(gd), n)
        tasks.append((replace(spec, params=p),))
        tasks.append((replace(spec, params=p, cavity=gaussian, cavity_dim=None),))
    res = parallel_map(_profile_task, tasks, threads)
    return [ProfileRow(float(gd), res[2 * i], res[2 * i + 1], res[2 * i] - res[2 * i + 1])
            for i, gd in enumerate(deltas)]
