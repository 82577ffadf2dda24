"""``qbatt`` command-line entry point.

    qbatt <scenario> [--config FILE] [--out PATH] [--format csv|json] [--threads K]

Settings are resolved as flags > ``QBATT_THREADS`` (thread count only) >
config file > built-in defaults.  Each run writes its table and a
``<out>.manifest.json`` sidecar; JSON output also carries the manifest
inline.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, fields
from importlib import metadata

from qbatt.config import FORMATS, SCENARIOS, RunConfig, config_from_dict
from qbatt.dynamics import ModelParams
from qbatt.errors import ConfigError, QbattError
from qbatt.protocols import (
    PARALLEL,
    SEQUENTIAL,
    ChargeReport,
    ProtocolSpec,
    TauGrid,
    run_parallel,
    run_sequential,
    snr_per_time,
)
from qbatt.states import (
    AttenuatedFock,
    Fock,
    PhaseRandomizedSqueezed,
    QubitStateSpec,
    ThermalizedFock,
    format_cavity,
    materialize,
    parse_cavity,
)
from qbatt.sweeps import SweepAxis, sweep_D, sweep_coupling_profile, sweep_rwa_comparison

UNITS = {
    "window_index": "1", "num_qubits": "1", "chosen": "flag", "capped": "flag", "mean_photons": "photons", "axis_value": "axis units",
    "g_tau": "g*tau", "g_tau_charge": "g*tau", "mean": "hbar*omega", "variance": "(hbar*omega)^2",
    "snr": "1", "fidelity": "1", "avg_max_snr": "1", "snr_per_time": "1/(g*tau)",
    "D": "1", "fock_avg_snr": "1", "gaussian_avg_snr": "1", "r_opt": "1", "alpha_opt": "sqrt(photons)",
    "g": "omega_qub", "g_delta": "1", "fock_max_snr": "1", "gaussian_max_snr": "1", "gap": "1",
    "fock_max_snr_jc": "1", "fock_max_snr_rabi": "1", "gaussian_max_snr_jc": "1", "gaussian_max_snr_rabi": "1",
    "gap_rabi": "1", "deviation_gaussian_snr": "1", "deviation_fock_mean": "hbar*omega",
}


class Table:
    def __init__(self, columns: list[str]):
        self.columns = columns
        self.rows: list[list] = []
        self.truncation: list[dict] = []
        self.warnings: list[str] = []

    def add(self, *row):
        self.rows.append(list(row))

    def note_state(self, label: str, cavity_dim: int, tail_mass: float):
        entry = {"state": label, "cavity_dim": int(cavity_dim), "tail_mass": float(tail_mass)}
        if entry not in self.truncation:
            self.truncation.append(entry)

    def note_report(self, report: ChargeReport):
        self.note_state(format_cavity(report.spec.cavity), report.cavity_dim, report.tail_mass)


# --- scenarios ----------------------------------------------------------------------------

def _states(cfg: RunConfig) -> list[str]:
    return [cfg.cavity] + [c for c in cfg.comparators if c]


def _window_rows(table: Table, label: str, w, *prefix):
    for i in range(w.g_tau.size):
        table.add(label, *prefix, w.g_tau[i], w.mean[i], w.variance[i], w.snr[i], w.fidelity[i], int(i == w.chosen))


def run_jc_single(cfg: RunConfig) -> Table:
    t = Table(["state", "g_tau", "mean", "variance", "snr", "fidelity", "chosen"])
    for text in _states(cfg):
        rep = run_sequential(cfg.protocol(text, SEQUENTIAL), tol=cfg.ode_tol)
        t.note_report(rep)
        _window_rows(t, text, rep.windows[0])
    return t


def run_sequential_scenario(cfg: RunConfig) -> Table:
    t = Table(["state", "window_index", "g_tau", "mean", "variance", "snr", "fidelity", "chosen"])
    for text in _states(cfg):
        rep = run_sequential(cfg.protocol(text, SEQUENTIAL), tol=cfg.ode_tol)
        t.note_report(rep)
        for w in rep.windows:
            _window_rows(t, text, w, w.index)
    return t


def run_parallel_scenario(cfg: RunConfig) -> Table:
    t = Table(["state", "observable", "g_tau", "mean", "variance", "snr", "fidelity", "chosen"])
    for text in _states(cfg):
        rep = run_parallel(cfg.protocol(text, PARALLEL), tol=cfg.ode_tol)
        t.note_report(rep)
        _window_rows(t, text, rep.windows[0], "single")
        if rep.collective is not None:
            _window_rows(t, text, rep.collective, "collective")
    return t


def run_noise_sweep(cfg: RunConfig) -> Table:
    sw = cfg.sweep
    base = cfg.protocol(cfg.cavity or "fock:1", SEQUENTIAL)
    res = sweep_D(SweepAxis(sw.axis, tuple(sw.values)), base, tuple(sw.r_grid), tuple(sw.mean_photons),
                  cfg.threads, sw.snr_cap)
    t = Table(["axis", "axis_value", "mean_photons", "D", "fock_avg_snr", "gaussian_avg_snr", "r_opt", "alpha_opt", "capped"])
    for r in res.rows:
        t.add(res.parameter, r.axis_value, r.mean_photons, r.D, r.fock_avg_snr, r.gaussian_avg_snr,
              r.r_opt, r.alpha_opt, int(r.capped))
        spec = PhaseRandomizedSqueezed(r.r_opt, r.alpha_opt)
        st = materialize(spec, None, base.num_qubits)
        t.note_state(format_cavity(spec), st.layout.cavity_dim, st.meta.get("tail_mass", 0.0))
    t.warnings.extend(res.notes)
    return t


def _speed_cavity(cfg: RunConfig, M: int):
    """Noisy Fock preparation for the sequential branch (thermal or attenuated)."""
    sp = cfg.speed
    if sp.attenuation_p < 1.0:
        return AttenuatedFock(M, sp.attenuation_p)
    return ThermalizedFock(M, sp.n_th)


def run_speed_compare(cfg: RunConfig) -> Table:
    sp = cfg.speed
    t = Table(["num_qubits", "protocol", "avg_max_snr", "g_tau_charge", "snr_per_time"])
    noisy = ModelParams.from_ratio(cfg.g, sp.detuning_ratio, cfg.rwa)
    ideal = ModelParams.from_ratio(cfg.g, 0.0, cfg.rwa)
    grid = TauGrid(cfg.points, cfg.g_tau_max)
    for M in sp.qubit_counts:
        par = run_parallel(ProtocolSpec(PARALLEL, M, Fock(M), QubitStateSpec(0.0), ideal, grid), collective=False)
        seq = run_sequential(ProtocolSpec(SEQUENTIAL, M, _speed_cavity(cfg, M), QubitStateSpec(sp.q), noisy, grid),
                             tol=cfg.ode_tol)
        for name, rep in (("parallel", par), ("sequential", seq)):
            t.note_report(rep)
            g_tc = rep.spec.params.g * rep.tau_charge
            t.add(M, name, float(rep.window_max_snr.mean()), g_tc, snr_per_time(rep))
    return t


def run_rwa_compare(cfg: RunConfig) -> Table:
    spec = cfg.protocol(cfg.cavity, SEQUENTIAL)
    spec = ProtocolSpec(SEQUENTIAL, 1, spec.cavity, spec.qubit, spec.params, spec.tau_grid, spec.window_objective, spec.cavity_dim)
    rows = sweep_rwa_comparison(spec, parse_cavity(cfg.rwa_compare.gaussian), cfg.rwa_compare.couplings, cfg.threads)
    cols = [f.name for f in fields(rows[0])] if rows else []
    t = Table(cols)
    for r in rows:
        t.add(*asdict(r).values())
    return t


def run_coupling_profile(cfg: RunConfig) -> Table:
    spec = cfg.protocol(cfg.cavity, SEQUENTIAL)
    spec = ProtocolSpec(SEQUENTIAL, 1, spec.cavity, spec.qubit, spec.params, spec.tau_grid, spec.window_objective, spec.cavity_dim)
    rows = sweep_coupling_profile(spec, parse_cavity(cfg.coupling_profile.gaussian), cfg.coupling_profile.deltas, cfg.threads)
    t = Table(["g_delta", "fock_max_snr", "gaussian_max_snr", "gap"])
    for r in rows:
        t.add(r.g_delta, r.fock_max_snr, r.gaussian_max_snr, r.gap)
    return t


RUNNERS = {
    "jc-single": run_jc_single,
    "sequential": run_sequential_scenario,
    "parallel": run_parallel_scenario,
    "noise-sweep": run_noise_sweep,
    "speed-compare": run_speed_compare,
    "rwa-compare": run_rwa_compare,
    "coupling-profile": run_coupling_profile,
}


# --- output ---------------------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, int)) and not isinstance(v, float):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _json_cell(v):
    if isinstance(v, str) or isinstance(v, int):
        return v
    v = float(v)
    if math.isinf(v):
        return {"sentinel": "inf" if v > 0 else "-inf"}
    return v


def header(columns: list[str]) -> list[str]:
    return [f"{c}[{UNITS[c]}]" if c in UNITS else c for c in columns]


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header(table.columns))
    for row in table.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def build_manifest(cfg: RunConfig, table: Table) -> dict:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    return {
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "artifact_version": version,
        "truncation": table.truncation,
        "warnings": table.warnings,
    }


def render_json(cfg: RunConfig, table: Table) -> str:
    payload = {
        "manifest": build_manifest(cfg, table),
        "columns": header(table.columns),
        "rows": [[_json_cell(v) for v in row] for row in table.rows],
    }
    return json.dumps(payload, indent=1) + "\n"


def execute(cfg: RunConfig) -> tuple[str, str]:
    """Run the scenario and write its outputs; returns ``(table path, manifest path)``."""
    start = time.perf_counter()
    table = RUNNERS[cfg.scenario](cfg)
    elapsed = time.perf_counter() - start
    out = cfg.resolved_output()
    text = render_csv(table) if cfg.output_format == "csv" else render_json(cfg, table)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)
    manifest = build_manifest(cfg, table)
    manifest["output"] = out
    manifest["wall_clock_s"] = elapsed
    mpath = out + ".manifest.json"
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return out, mpath


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbatt", description="Fock-state quantum battery charging statistics")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output path (default qbatt_<scenario>.<format>)")
    p.add_argument("--format", choices=FORMATS, help="table format")
    p.add_argument("--threads", type=int, help="worker processes for sweeps (also QBATT_THREADS)")
    return p


def load_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    raw: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        try:
            raw = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<root>: invalid JSON in {args.config} ({exc})"]) from None
        if not isinstance(raw, dict):
            raise ConfigError(["<root>: expected a JSON object"])
    raw["scenario"] = args.scenario
    threads = args.threads
    if threads is None and environ.get("QBATT_THREADS"):
        try:
            threads = int(environ["QBATT_THREADS"])
        except ValueError:
            raise ConfigError([f"QBATT_THREADS: expected an integer, got {environ['QBATT_THREADS']!r}"]) from None
    if threads is not None:
        raw.setdefault("numerics", {})
        if isinstance(raw["numerics"], dict):
            raw["numerics"]["threads"] = threads
    for key, val in (("path", args.out), ("format", args.format)):
        if val is not None:
            raw.setdefault("output", {})
            if isinstance(raw["output"], dict):
                raw["output"][key] = val
    if args.out and args.format is None and "format" not in raw.get("output", {}):
        ext = os.path.splitext(args.out)[1].lstrip(".").lower()
        if ext in FORMATS:
            raw["output"]["format"] = ext
    return config_from_dict(raw)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"qbatt: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"qbatt: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        out, mpath = execute(cfg)
    except (QbattError, ValueError, OSError) as exc:
        print(f"qbatt: {cfg.scenario} failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out} and {mpath}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
