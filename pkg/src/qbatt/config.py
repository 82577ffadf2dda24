"""Run configuration: JSON schema, validation and defaults.

A config is a JSON object.  Every key is optional except the ones a
scenario needs; unknown keys are rejected.  All problems are collected and
reported together with their dotted path, e.g. ``qubit.q``.

Schema (defaults in parentheses)::

    scenario        jc-single | sequential | parallel | noise-sweep |
                    speed-compare | rwa-compare | coupling-profile
    num_qubits      int >= 1 (1 for jc-single, 5 otherwise)
    cavity          cavity text spec, e.g. "fock:5", "squeezed:0.6,3.905"
    comparators     list of cavity text specs simulated alongside (none)
    qubit.q         excited population in [0, 1] (0)
    model.g         coupling in units of the qubit frequency (0.01)
    model.detuning_ratio   (omega_qub - omega_cav) / omega_qub (0)
    model.rwa       true for JC/TC, false for Rabi (true)
    tau_grid.points        >= 100 (2002)
    tau_grid.g_tau_max     positive or null for the window-adaptive range (null)
    window_objective       max_snr | max_fidelity (max_snr)
    cavity_dim      int >= 2 or null for automatic truncation (null)
    sweep.axis      n_th | attenuation_p | detuning_ratio | qubit_q | mean_photons | coupling_delta
    sweep.values    sorted list of numbers
    sweep.mean_photons     list of ints (1..5)
    sweep.r_grid    squeezing magnitudes (0, 0.05, ..., 1.2)
    sweep.snr_cap   finite substitute for divergent SNR maxima, or null
    speed.qubit_counts     list of ints (2..6)
    speed.q, speed.detuning_ratio, speed.n_th, speed.attenuation_p
                    sequential-branch imperfections (1e-3, 1e-3, 1e-2, 1)
    rwa.couplings   list of g values (0.01, 0.001)
    rwa.gaussian    cavity text spec ("squeezed:0.6,3.905")
    coupling_profile.deltas   list of g*delta values
    coupling_profile.gaussian cavity text spec ("squeezed:0.6,3.905")
    output.path     output file (qbatt_<scenario>.<format>)
    output.format   csv | json (csv)
    numerics.ode_tol       integrator tolerance (1e-10)
    numerics.threads       worker processes (1)
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

from qbatt.dynamics import ModelParams
from qbatt.errors import ConfigError
from qbatt.protocols import MAX_DENSE_DIM, MAX_FIDELITY, MAX_SNR, PARALLEL, SEQUENTIAL, ProtocolSpec, TauGrid
from qbatt.states import QubitStateSpec, choose_cavity_dim, parse_cavity
from qbatt.sweeps import AXIS_PARAMETERS, DEFAULT_MEAN_PHOTONS, DEFAULT_R_GRID

SCENARIOS = ("jc-single", "sequential", "parallel", "noise-sweep", "speed-compare", "rwa-compare", "coupling-profile")
FORMATS = ("csv", "json")


@dataclass
class SweepConfig:
    axis: str | None = None
    values: list[float] = field(default_factory=list)
    mean_photons: list[int] = field(default_factory=lambda: list(DEFAULT_MEAN_PHOTONS))
    r_grid: list[float] = field(default_factory=lambda: list(DEFAULT_R_GRID))
    snr_cap: float | None = None


@dataclass
class SpeedConfig:
    qubit_counts: list[int] = field(default_factory=lambda: [2, 3, 4, 5, 6])
    q: float = 1e-3
    detuning_ratio: float = 1e-3
    n_th: float = 1e-2
    attenuation_p: float = 1.0


@dataclass
class RwaConfig:
    couplings: list[float] = field(default_factory=lambda: [1e-2, 1e-3])
    gaussian: str = "squeezed:0.6,3.905"


@dataclass
class ProfileConfig:
    deltas: list[float] = field(default_factory=list)
    gaussian: str = "squeezed:0.6,3.905"


@dataclass
class RunConfig:
    scenario: str
    num_qubits: int = 5
    cavity: str | None = None
    comparators: list[str] = field(default_factory=list)
    qubit_q: float = 0.0
    g: float = 1e-2
    detuning_ratio: float = 0.0
    rwa: bool = True
    points: int = 2002
    g_tau_max: float | None = None
    window_objective: str = MAX_SNR
    cavity_dim: int | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)
    speed: SpeedConfig = field(default_factory=SpeedConfig)
    rwa_compare: RwaConfig = field(default_factory=RwaConfig)
    coupling_profile: ProfileConfig = field(default_factory=ProfileConfig)
    output_path: str | None = None
    output_format: str = "csv"
    ode_tol: float = 1e-10
    threads: int = 1

    # --- derived objects ---
    def params(self) -> ModelParams:
        return ModelParams.from_ratio(self.g, self.detuning_ratio, self.rwa)

    def protocol(self, cavity_text: str | None = None, kind: str | None = None) -> ProtocolSpec:
        kind = kind or (PARALLEL if self.scenario == "parallel" else SEQUENTIAL)
        M = 1 if self.scenario == "jc-single" else self.num_qubits
        return ProtocolSpec(
            kind, M, parse_cavity(cavity_text or self.cavity), QubitStateSpec(self.qubit_q), self.params(),
            TauGrid(self.points, self.g_tau_max), self.window_objective, self.cavity_dim,
        )

    def resolved_output(self) -> str:
        return self.output_path or f"qbatt_{self.scenario}.{self.output_format}"

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# --- validation ----------------------------------------------------------------------

_SECTIONS = {
    "qubit": {"q"},
    "model": {"g", "detuning_ratio", "rwa"},
    "tau_grid": {"points", "g_tau_max"},
    "sweep": {"axis", "values", "mean_photons", "r_grid", "snr_cap"},
    "speed": {"qubit_counts", "q", "detuning_ratio", "n_th", "attenuation_p"},
    "rwa": {"couplings", "gaussian"},
    "coupling_profile": {"deltas", "gaussian"},
    "output": {"path", "format"},
    "numerics": {"ode_tol", "threads"},
}
_TOP = {"scenario", "num_qubits", "cavity", "comparators", "window_objective", "cavity_dim"} | set(_SECTIONS)


class _Checker:
    def __init__(self):
        self.errors: list[str] = []

    def fail(self, path: str, msg: str):
        self.errors.append(f"{path}: {msg}")

    def number(self, path, v, lo=-math.inf, hi=math.inf, lo_open=False, integer=False, nullable=False):
        if v is None and nullable:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(path, f"expected a finite {'integer' if integer else 'number'}, got {v!r}")
            return None
        if integer and int(v) != v:
            self.fail(path, f"expected an integer, got {v!r}")
            return None
        if v < lo or v > hi or (lo_open and v == lo):
            left = "(" if lo_open else "["
            self.fail(path, f"must lie in {left}{lo:g}, {hi:g}], got {v!r}")
            return None
        return int(v) if integer else float(v)

    def numbers(self, path, v, integer=False, **kw):
        if not isinstance(v, list) or not v:
            self.fail(path, f"expected a nonempty list, got {v!r}")
            return None
        out = [self.number(f"{path}[{i}]", x, integer=integer, **kw) for i, x in enumerate(v)]
        return None if any(x is None for x in out) else out

    def cavity(self, path, v):
        if not isinstance(v, str):
            self.fail(path, f"expected a cavity spec string, got {v!r}")
            return None
        try:
            parse_cavity(v)
        except ValueError as exc:
            self.fail(path, str(exc))
            return None
        return v

    def choice(self, path, v, options):
        if v not in options:
            self.fail(path, f"must be one of {', '.join(options)}; got {v!r}")
            return None
        return v


def parse_config(text: str) -> RunConfig:
    """Validate JSON config text; raises :class:`ConfigError` listing every problem."""
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<root>: invalid JSON ({exc})"]) from None
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    c = _Checker()
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    for k in raw:
        if k not in _TOP:
            c.fail(k, "unknown key")
    for sec, keys in _SECTIONS.items():
        if sec in raw:
            if not isinstance(raw[sec], dict):
                c.fail(sec, "expected an object")
                continue
            for k in raw[sec]:
                if k not in keys:
                    c.fail(f"{sec}.{k}", "unknown key")

    def sub(sec, key, default):
        s = raw.get(sec)
        return s.get(key, default) if isinstance(s, dict) else default

    scenario = c.choice("scenario", raw.get("scenario"), SCENARIOS) if "scenario" in raw else None
    if scenario is None and "scenario" not in raw:
        c.fail("scenario", "missing required field")
    cfg = RunConfig(scenario=scenario or "")
    cfg.num_qubits = c.number("num_qubits", raw.get("num_qubits", 1 if scenario == "jc-single" else 5), 1, integer=True) or 1
    if "cavity" in raw:
        cfg.cavity = c.cavity("cavity", raw["cavity"])
    comps = raw.get("comparators", [])
    if not isinstance(comps, list):
        c.fail("comparators", "expected a list")
    else:
        cfg.comparators = [c.cavity(f"comparators[{i}]", s) for i, s in enumerate(comps)]
    cfg.qubit_q = _or(c.number("qubit.q", sub("qubit", "q", 0.0), 0.0, 1.0), 0.0)
    cfg.g = c.number("model.g", sub("model", "g", 1e-2), 0.0, lo_open=True) or 1e-2
    cfg.detuning_ratio = c.number("model.detuning_ratio", sub("model", "detuning_ratio", 0.0), -math.inf, 1.0) or 0.0
    if cfg.detuning_ratio == 1.0:
        c.fail("model.detuning_ratio", "must be below 1 (cavity frequency must stay positive)")
    rwa = sub("model", "rwa", True)
    if not isinstance(rwa, bool):
        c.fail("model.rwa", f"expected true or false, got {rwa!r}")
    cfg.rwa = rwa if isinstance(rwa, bool) else True
    cfg.points = c.number("tau_grid.points", sub("tau_grid", "points", 2002), 100, integer=True) or 2002
    cfg.g_tau_max = c.number("tau_grid.g_tau_max", sub("tau_grid", "g_tau_max", None), 0.0, lo_open=True, nullable=True)
    cfg.window_objective = c.choice("window_objective", raw.get("window_objective", MAX_SNR), (MAX_SNR, MAX_FIDELITY)) or MAX_SNR
    cfg.cavity_dim = c.number("cavity_dim", raw.get("cavity_dim"), 2, integer=True, nullable=True)

    sw = cfg.sweep
    if sub("sweep", "axis", None) is not None:
        sw.axis = c.choice("sweep.axis", sub("sweep", "axis", None), AXIS_PARAMETERS)
    if sub("sweep", "values", None) is not None:
        sw.values = c.numbers("sweep.values", sub("sweep", "values", None)) or []
        if sw.values and sw.values != sorted(sw.values):
            c.fail("sweep.values", "must be sorted in increasing order")
    sw.mean_photons = c.numbers("sweep.mean_photons", sub("sweep", "mean_photons", list(DEFAULT_MEAN_PHOTONS)), integer=True, lo=1) or []
    sw.r_grid = c.numbers("sweep.r_grid", sub("sweep", "r_grid", list(DEFAULT_R_GRID)), lo=0.0) or []
    sw.snr_cap = c.number("sweep.snr_cap", sub("sweep", "snr_cap", None), 0.0, lo_open=True, nullable=True)
    if sw.axis in ("attenuation_p", "qubit_q") and sw.values and not all(0 <= v <= 1 for v in sw.values):
        c.fail("sweep.values", f"{sw.axis} values must lie in [0, 1]")
    if sw.axis == "n_th" and sw.values and min(sw.values) < 0:
        c.fail("sweep.values", "n_th values must be non-negative")

    sp = cfg.speed
    sp.qubit_counts = c.numbers("speed.qubit_counts", sub("speed", "qubit_counts", sp.qubit_counts), integer=True, lo=1) or []
    sp.q = _or(c.number("speed.q", sub("speed", "q", sp.q), 0.0, 1.0), sp.q)
    sp.detuning_ratio = _or(c.number("speed.detuning_ratio", sub("speed", "detuning_ratio", sp.detuning_ratio), hi=1.0), sp.detuning_ratio)
    sp.n_th = _or(c.number("speed.n_th", sub("speed", "n_th", sp.n_th), 0.0), sp.n_th)
    sp.attenuation_p = _or(c.number("speed.attenuation_p", sub("speed", "attenuation_p", sp.attenuation_p), 0.0, 1.0), sp.attenuation_p)

    rc = cfg.rwa_compare
    rc.couplings = c.numbers("rwa.couplings", sub("rwa", "couplings", rc.couplings), 0.0, lo_open=True) or []
    rc.gaussian = c.cavity("rwa.gaussian", sub("rwa", "gaussian", rc.gaussian)) or rc.gaussian
    pc = cfg.coupling_profile
    if sub("coupling_profile", "deltas", None) is not None:
        pc.deltas = c.numbers("coupling_profile.deltas", sub("coupling_profile", "deltas", None), 0.0, lo_open=True) or []
    pc.gaussian = c.cavity("coupling_profile.gaussian", sub("coupling_profile", "gaussian", pc.gaussian)) or pc.gaussian

    path = sub("output", "path", None)
    if path is not None and not isinstance(path, str):
        c.fail("output.path", "expected a string")
        path = None
    cfg.output_path = path
    cfg.output_format = c.choice("output.format", sub("output", "format", "csv"), FORMATS) or "csv"
    cfg.ode_tol = c.number("numerics.ode_tol", sub("numerics", "ode_tol", 1e-10), 0.0, lo_open=True) or 1e-10
    cfg.threads = c.number("numerics.threads", sub("numerics", "threads", 1), 1, integer=True) or 1

    _scenario_requirements(cfg, c)
    if c.errors:
        raise ConfigError(c.errors)
    return cfg


def _or(v, default):
    return default if v is None else v


def _scenario_requirements(cfg: RunConfig, c: _Checker):
    s = cfg.scenario
    if s in ("jc-single", "sequential", "parallel", "rwa-compare", "coupling-profile") and cfg.cavity is None:
        if not any(e.startswith("cavity:") for e in c.errors):
            c.fail("cavity", f"missing required field for scenario {s}")
    if s == "noise-sweep":
        if cfg.sweep.axis is None:
            c.fail("sweep.axis", "missing required field for scenario noise-sweep")
        if not cfg.sweep.values:
            c.fail("sweep.values", "missing required field for scenario noise-sweep")
    if s == "coupling-profile" and not cfg.coupling_profile.deltas:
        c.fail("coupling_profile.deltas", "missing required field for scenario coupling-profile")
    if s == "coupling-profile" and not cfg.rwa:
        c.fail("model.rwa", "the coupling-profile scenario uses the JC model")
    if s == "parallel" and cfg.cavity is not None and not c.errors:
        for text in [cfg.cavity] + [x for x in cfg.comparators if x]:
            d = cfg.cavity_dim or _safe_dim(parse_cavity(text), cfg.num_qubits)
            if d is not None and 2**cfg.num_qubits * d > MAX_DENSE_DIM:
                c.fail("num_qubits", f"2^{cfg.num_qubits} x cavity_dim {d} exceeds the dense limit {MAX_DENSE_DIM} for {text}")
    if s == "speed-compare" and cfg.speed.attenuation_p < 1.0 and cfg.speed.n_th > 0.0:
        c.fail("speed", "choose either thermal noise (n_th) or attenuation (attenuation_p < 1), not both")
    if s == "speed-compare" and cfg.speed.qubit_counts:
        for M in cfg.speed.qubit_counts:
            if 2**M * (M + M + 3) > MAX_DENSE_DIM:
                c.fail("speed.qubit_counts", f"M={M} exceeds the dense limit {MAX_DENSE_DIM}")


def _safe_dim(spec, M):
    try:
        return choose_cavity_dim(spec, M)
    except ValueError:
        return None
