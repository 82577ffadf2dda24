import math

import numpy as np
import pytest

from qbatt.dynamics import ModelParams, SmoothedSquare
from qbatt.errors import ParameterError, ResourceError, SentinelError, TruncationError
from qbatt.fockspace import HilbertLayout
from qbatt.protocols import (
    MAX_FIDELITY,
    PARALLEL,
    SEQUENTIAL,
    ProtocolSpec,
    TauGrid,
    _initial_state,
    advantage_D,
    averaged_snr,
    check_parallel_resources,
    describe,
    run_parallel,
    run_protocol,
    run_sequential,
    snr_per_time,
    window_series,
)
from qbatt.states import (
    AttenuatedFock,
    Coherent,
    Fock,
    QubitStateSpec,
    SqueezedCoherent,
    ThermalizedFock,
    materialize,
)
from qbatt.tavis2 import oracle_snr

SMALL = TauGrid(300)


def photons(dm):
    return float(np.arange(dm.entries.shape[0]) @ dm.diagonal())


def test_spec_validation():
    with pytest.raises(ParameterError):
        ProtocolSpec("hybrid", 2, Fock(2))
    with pytest.raises(ParameterError):
        ProtocolSpec(SEQUENTIAL, 0, Fock(2))
    with pytest.raises(ParameterError):
        ProtocolSpec(SEQUENTIAL, 1, Fock(2), window_objective="fastest")
    with pytest.raises(ParameterError):
        TauGrid(50)
    with pytest.raises(ParameterError):
        run_parallel(ProtocolSpec(SEQUENTIAL, 1, Fock(1)))
    with pytest.raises(ParameterError):
        run_sequential(ProtocolSpec(PARALLEL, 1, Fock(1)))
    assert describe(ProtocolSpec(SEQUENTIAL, 3, Fock(3))) == "sequential M=3 cavity=fock:3 q=0"


def test_window_grid_shrinks_with_photons():
    g = TauGrid()
    assert g.window(5, 1)[-1] == pytest.approx(1.5 * math.pi / math.sqrt(5))
    assert g.window(5, 5)[-1] == pytest.approx(1.5 * math.pi)
    assert g.window(0.5, 1)[-1] == pytest.approx(1.5 * math.pi)
    assert TauGrid(100, 3.0).window(5, 2)[-1] == 3.0


def test_ideal_fock_sequential_energy_ledger():
    r = run_sequential(ProtocolSpec(SEQUENTIAL, 3, Fock(3)))
    absorbed = 0.0
    for w in r.windows:
        absorbed += w.mean[w.chosen]
        assert photons(w.cavity_after) + absorbed == pytest.approx(3.0, abs=1e-6)
        assert abs(np.trace(w.cavity_after.entries) - 1) <= 1e-10
        # fidelity peak and SNR divergence share the grid index
        assert w.chosen == int(np.argmax(w.fidelity))
        assert math.isinf(w.max_snr)
    assert len(r.windows) == 3


def test_report_ranges_with_thermal_qubits():
    q = 0.2
    r = run_sequential(ProtocolSpec(SEQUENTIAL, 2, Coherent(1.2), qubit=QubitStateSpec(q), tau_grid=SMALL))
    for w in r.windows:
        assert np.all((w.fidelity >= 0) & (w.fidelity <= 1))
        assert np.all(w.mean >= -q - 1e-12) and np.all(w.mean <= 1 + 1e-12)
        assert w.g_tau_star in w.g_tau


def test_coherent_peak_fidelities_decrease():
    r = run_sequential(ProtocolSpec(SEQUENTIAL, 5, Coherent(math.sqrt(5))))
    peaks = [w.max_fidelity for w in r.windows]
    assert all(a > b for a, b in zip(peaks, peaks[1:]))


def test_single_qubit_parallel_equals_first_sequential_window():
    for cav in (Fock(3), SqueezedCoherent(0.4, 1.5)):
        seq = run_sequential(ProtocolSpec(SEQUENTIAL, 1, cav, tau_grid=SMALL))
        par = run_parallel(ProtocolSpec(PARALLEL, 1, cav, tau_grid=SMALL))
        a, b = seq.windows[0], par.windows[0]
        for field in ("mean", "variance", "fidelity"):
            assert np.max(np.abs(getattr(a, field) - getattr(b, field))) <= 1e-12
        assert par.collective is None


def test_parallel_two_qubits_matches_oracle():
    r = run_parallel(ProtocolSpec(PARALLEL, 2, Fock(2), tau_grid=TauGrid(300, 3.0)))
    w = r.windows[0]
    ref = np.array([oracle_snr(2, x) for x in w.g_tau])
    assert np.array_equal(np.isinf(ref), np.isinf(w.snr))
    fin = np.isfinite(ref)
    assert np.max(np.abs(ref[fin] - w.snr[fin])) <= 1e-6
    assert np.allclose(r.collective.mean, 2 * w.mean, atol=1e-12)


def test_analytic_and_spectral_paths_agree():
    spec = ProtocolSpec(PARALLEL, 2, Coherent(1.0), tau_grid=SMALL)
    a = run_parallel(spec, method="tc2").windows[0]
    b = run_parallel(spec, method="spectral").windows[0]
    assert np.max(np.abs(a.mean - b.mean)) <= 1e-10
    assert np.max(np.abs(a.variance - b.variance)) <= 1e-10
    with pytest.raises(ParameterError):
        run_sequential(ProtocolSpec(SEQUENTIAL, 1, Fock(1)), method="tc2")


def test_ode_path_agrees_with_spectral():
    params = ModelParams.from_ratio(detuning_ratio=2e-3)
    lay = HilbertLayout(1, 6)
    rho0 = _initial_state(QubitStateSpec(0.1), materialize(Fock(2), 6), 1)
    gts = np.linspace(0, 2, 21)
    a, _ = window_series(params, lay, rho0, gts, 1, 1, "spectral")
    b, _ = window_series(params, lay, rho0, gts, 1, 1, "ode", tol=1e-11)
    assert np.max(np.abs(a.mean - b.mean)) <= 1e-7
    assert np.max(np.abs(a.variance - b.variance)) <= 1e-7


@pytest.mark.parametrize("M", [2, 3])
def test_parallel_permutation_symmetry(M):
    params = ModelParams.from_ratio(detuning_ratio=1e-3)
    d = 3 + M + 3
    lay = HilbertLayout(M, d)
    rho0 = _initial_state(QubitStateSpec(0.05), materialize(Fock(3), d), M)
    gts = np.linspace(0, 2.5, 40)
    a, _ = window_series(params, lay, rho0, gts, 1, 1)
    b, _ = window_series(params, lay, rho0, gts, 2, 2)
    assert np.max(np.abs(a.mean - b.mean)) <= 1e-10
    assert np.max(np.abs(a.variance - b.variance)) <= 1e-10
    assert np.max(np.abs(a.fidelity - b.fidelity)) <= 1e-10


def test_initial_state_must_commute_with_energy():
    lay = HilbertLayout(1, 4)
    rho0 = _initial_state(QubitStateSpec(0.0), materialize(Fock(1), 4), 1)
    rho0 = rho0.copy()
    rho0[0, 4] = rho0[4, 0] = 0.01
    with pytest.raises(ValueError):
        window_series(ModelParams(), lay, rho0, np.linspace(0, 1, 5), 1, 1)


def test_averaged_snr_and_sentinels():
    ideal = run_sequential(ProtocolSpec(SEQUENTIAL, 2, Fock(2), tau_grid=SMALL))
    with pytest.raises(SentinelError, match="snr_cap"):
        averaged_snr(ideal)
    assert averaged_snr(ideal, snr_cap=10.0) == pytest.approx(10.0)
    noisy = run_sequential(ProtocolSpec(SEQUENTIAL, 1, ThermalizedFock(1, 0.05), tau_grid=SMALL))
    assert averaged_snr(noisy) == pytest.approx(noisy.windows[0].max_snr)
    with pytest.raises(ParameterError):
        averaged_snr(noisy, mean_photons=0.0)


def test_averaged_snr_zero_when_nothing_charges():
    r = run_sequential(ProtocolSpec(SEQUENTIAL, 1, Fock(0), tau_grid=SMALL))
    assert averaged_snr(r, mean_photons=1.0) == 0.0


def test_advantage_D():
    spec = ProtocolSpec(SEQUENTIAL, 2, AttenuatedFock(2, 0.9), tau_grid=SMALL)
    a = run_sequential(spec)
    assert advantage_D(a, a) == 0.0
    other = run_sequential(ProtocolSpec(SEQUENTIAL, 2, Coherent(math.sqrt(2)), tau_grid=TauGrid(400)))
    with pytest.raises(ParameterError):
        advantage_D(a, other)


def test_snr_per_time_single_window():
    r = run_sequential(ProtocolSpec(SEQUENTIAL, 1, ThermalizedFock(2, 0.05), tau_grid=SMALL))
    w = r.windows[0]
    assert snr_per_time(r) == pytest.approx(w.max_snr / w.g_tau_star)
    assert r.tau_charge == pytest.approx(w.g_tau_star / r.spec.params.g)
    zero = run_sequential(ProtocolSpec(SEQUENTIAL, 1, Fock(0), tau_grid=SMALL))
    with pytest.raises(ParameterError):
        snr_per_time(zero)


def test_snr_per_time_grid_stability():
    def value(points):
        spec = ProtocolSpec(SEQUENTIAL, 3, ThermalizedFock(3, 1e-2), qubit=QubitStateSpec(1e-3),
                            params=ModelParams.from_ratio(detuning_ratio=1e-3), tau_grid=TauGrid(points))
        return snr_per_time(run_sequential(spec))

    a, b = value(2002), value(4004)
    assert abs(a - b) / abs(b) < 0.01


def test_resource_guard():
    with pytest.raises(ResourceError):
        check_parallel_resources(7, 10)
    with pytest.raises(ResourceError):
        check_parallel_resources(6, 70)
    with pytest.raises(ResourceError):
        run_parallel(ProtocolSpec(PARALLEL, 7, Fock(7)))


def test_truncation_overflow_names_window():
    # an excited qubit would push the cavity above its top level
    spec = ProtocolSpec(SEQUENTIAL, 1, Fock(3), qubit=QubitStateSpec(0.5), tau_grid=SMALL, cavity_dim=4)
    with pytest.raises(TruncationError, match="window 1"):
        run_sequential(spec)


def test_max_fidelity_objective_and_dispatch():
    spec = ProtocolSpec(SEQUENTIAL, 2, Coherent(1.4), tau_grid=SMALL, window_objective=MAX_FIDELITY)
    r = run_protocol(spec)
    for w in r.windows:
        assert w.chosen == int(np.argmax(w.fidelity))


def test_time_dependent_window():
    prof = SmoothedSquare(1e-2, 1.0, 60.0)
    params = ModelParams(profile=prof)
    r = run_sequential(ProtocolSpec(SEQUENTIAL, 1, Fock(2), params=params, tau_grid=TauGrid(100, 1.2)))
    w = r.windows[0]
    assert np.all(np.isfinite(w.mean)) and w.max_fidelity > 0.1
