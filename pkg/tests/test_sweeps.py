import math

import numpy as np
import pytest

from qbatt.dynamics import Constant, ModelParams
from qbatt.errors import ParameterError, SentinelError
from qbatt.fcs import VAR_FLOOR
from qbatt.protocols import SEQUENTIAL, ProtocolSpec, TauGrid, averaged_snr, run_sequential
from qbatt.states import Coherent, Fock, QubitStateSpec, SqueezedCoherent
from qbatt.sweeps import (
    DEFAULT_R_GRID,
    GaussianSearchSpace,
    SweepAxis,
    _single_window,
    coupling_profile_params,
    optimize_gaussian,
    parallel_map,
    resolve_workers,
    sweep_coupling_profile,
    sweep_D,
    sweep_rwa_comparison,
)

FAST = TauGrid(200)


def base(M=2, **kw):
    return ProtocolSpec(SEQUENTIAL, M, Fock(1), tau_grid=FAST, **kw)


def test_axis_validation():
    assert SweepAxis("n_th", [0.02, 0.1]).values == (0.02, 0.1)
    for parameter, values in [
        ("temperature", [1.0]),
        ("n_th", []),
        ("n_th", [0.2, 0.1]),
        ("n_th", [-0.1]),
        ("attenuation_p", [1.1]),
        ("qubit_q", [2.0]),
        ("coupling_delta", [0.0]),
        ("mean_photons", [1.5]),
        ("detuning_ratio", [float("nan")]),
    ]:
        with pytest.raises(ParameterError):
            SweepAxis(parameter, values)


def test_default_search_grid():
    assert len(DEFAULT_R_GRID) == 25
    assert DEFAULT_R_GRID[0] == 0.0 and DEFAULT_R_GRID[-1] == 1.2


def test_search_space_skips_infeasible_r():
    cands, notes = GaussianSearchSpace(1, (0.0, 0.5, 1.0)).candidates()
    assert [r for r, _ in cands] == [0.0, 0.5]
    assert len(notes) == 1 and "r=1" in notes[0]
    for r, a in cands:
        assert a**2 * math.exp(-2 * r) + math.sinh(r) ** 2 == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        GaussianSearchSpace(1, ())
    with pytest.raises(ParameterError):
        optimize_gaussian(GaussianSearchSpace(0.1, (1.0,)), base())


def test_degenerate_search_is_coherent():
    spec = base()
    opt = optimize_gaussian(GaussianSearchSpace(2, (0.0,)), spec)
    assert opt.r == 0.0 and opt.alpha == pytest.approx(math.sqrt(2))
    coh = averaged_snr(run_sequential(spec.with_cavity(Coherent(math.sqrt(2)))), 2)
    assert opt.averaged_snr == pytest.approx(coh, rel=1e-12)
    wider = optimize_gaussian(GaussianSearchSpace(2, (0.0, 0.2, 0.4, 0.6)), spec)
    assert wider.averaged_snr >= opt.averaged_snr


def test_search_self_convergence():
    spec = ProtocolSpec(SEQUENTIAL, 5, Fock(5), tau_grid=TauGrid(200))
    coarse = optimize_gaussian(GaussianSearchSpace(5), spec, threads=4)
    fine_grid = tuple(round(0.005 * k, 3) for k in range(241))
    fine = optimize_gaussian(GaussianSearchSpace(5, fine_grid), spec, threads=4)
    assert abs(coarse.averaged_snr - fine.averaged_snr) <= 0.05 * fine.averaged_snr


def test_worst_case_gaussian_branch_is_fixed():
    res = sweep_D(SweepAxis("n_th", (0.02, 0.2)), base(), search_grid=(0.0, 0.3), mean_photons=(1, 2))
    assert len(res.rows) == 4
    by_n = {}
    for row in res.rows:
        by_n.setdefault(row.mean_photons, set()).add(row.gaussian_avg_snr)
        assert math.isfinite(row.D) and not row.capped
        assert row.D == row.fock_avg_snr - row.gaussian_avg_snr
    assert all(len(v) == 1 for v in by_n.values())


def test_shared_axes_move_both_branches():
    res = sweep_D(SweepAxis("detuning_ratio", (1e-3, 5e-3)), base(), search_grid=(0.0, 0.3), mean_photons=(2,))
    g = [row.gaussian_avg_snr for row in res.rows]
    assert g[0] != g[1]


def test_sweep_notes_and_cap():
    res = sweep_D(SweepAxis("qubit_q", (0.0, 0.01)), base(1), search_grid=(0.0, 1.2), mean_photons=(1,),
                  snr_cap=1 / VAR_FLOOR)
    assert any("r=1.2 skipped" in n for n in res.notes)
    assert res.rows[0].capped and not res.rows[1].capped
    assert res.rows[0].D > res.rows[1].D
    with pytest.raises(SentinelError):
        sweep_D(SweepAxis("qubit_q", (0.0,)), base(1), search_grid=(0.0,), mean_photons=(1,))


def test_mean_photons_axis():
    res = sweep_D(SweepAxis("mean_photons", (1, 2)), base(1, qubit=QubitStateSpec(0.01)),
                  search_grid=(0.0, 0.3))
    assert [r.mean_photons for r in res.rows] == [1, 2]
    assert [r.axis_value for r in res.rows] == [1.0, 2.0]


def test_sweeps_are_deterministic_across_workers():
    axis = SweepAxis("attenuation_p", (0.9, 0.95))
    a = sweep_D(axis, base(), search_grid=(0.0, 0.3), mean_photons=(1, 2), threads=1)
    b = sweep_D(axis, base(), search_grid=(0.0, 0.3), mean_photons=(1, 2), threads=2)
    assert a.rows == b.rows


def test_worker_resolution(monkeypatch):
    monkeypatch.setenv("QBATT_THREADS", "3")
    assert resolve_workers(None) == 3
    assert resolve_workers(2) == 2
    monkeypatch.delenv("QBATT_THREADS")
    assert resolve_workers(None) == 1
    with pytest.raises(ParameterError):
        resolve_workers(0)
    assert parallel_map(abs, [-1, 2, -3], threads=2) == [1, 2, 3]


def test_rwa_comparison_shape_and_flag_equivalence():
    spec = ProtocolSpec(SEQUENTIAL, 1, Fock(2), params=ModelParams.from_ratio(detuning_ratio=5e-3), tau_grid=FAST)
    rows = sweep_rwa_comparison(spec, SqueezedCoherent(0.3, 1.5), [1e-2, 1e-3])
    assert [r.g for r in rows] == [1e-2, 1e-3]
    assert rows[1].deviation_gaussian_snr < rows[0].deviation_gaussian_snr
    # the RWA branch is the plain JC window
    _, _, jc = _single_window(spec)
    assert rows[0].fock_max_snr_jc == float(jc.max())
    with pytest.raises(ParameterError):
        sweep_rwa_comparison(ProtocolSpec(SEQUENTIAL, 2, Fock(2)), Coherent(1.0), [1e-2])


def test_constant_profile_limit_matches_analytic():
    spec = ProtocolSpec(SEQUENTIAL, 1, Fock(3), params=ModelParams(profile=Constant(1e-2)), tau_grid=TauGrid(100))
    _, m1, s1 = _single_window(spec, "spectral")
    _, m2, s2 = _single_window(spec, "ode")
    assert np.max(np.abs(m1 - m2)) <= 1e-6


def test_coupling_profile_sweep():
    params = ModelParams.from_ratio(detuning_ratio=5e-3)
    p = coupling_profile_params(params, 1e-2, 5)
    assert p.profile.t_tilde == pytest.approx(math.pi / (4 * 1e-2 * math.sqrt(5)))
    spec = ProtocolSpec(SEQUENTIAL, 1, Fock(2), params=params, tau_grid=TauGrid(100))
    rows = sweep_coupling_profile(spec, SqueezedCoherent(0.3, 1.5), [3e-2])
    assert rows[0].gap == rows[0].fock_max_snr - rows[0].gaussian_max_snr
    with pytest.raises(ParameterError):
        sweep_coupling_profile(ProtocolSpec(SEQUENTIAL, 2, Fock(2)), Coherent(1.0), [1e-2])
