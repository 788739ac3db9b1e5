"""Diagnostics tests: energy functionals against equilibrium/scaling/grid
oracles, report plumbing on synthetic exact-power data, series round-trips."""

import json
import math

import numpy as np
import pytest

from swell.diagnostics import (
    EnergySnapshot,
    conservation_report,
    energy_k,
    energy_snapshot,
    fit_loglog,
    load_expectations,
    read_series,
    scaling_report,
    total_energy,
    write_expectations,
    write_series,
)
from swell.errors import IOFormatError
from swell.evolution import RunConfig, config_hash, make_initial_data, run
from swell.grid import Field, GridSpec, norm_linf
from swell.quantities import WaveState, compute_aux

SM = dict(profile="single-mode", carrier_wavenumber=4, solver_tol=1e-12)


def single_mode_state(n, eps):
    return make_initial_data(RunConfig(n=n, epsilon=eps, t_end=0.0, **SM))


@pytest.fixture(scope="module")
def state():
    return single_mode_state(128, 1e-2)


@pytest.fixture(scope="module")
def aux(state):
    return compute_aux(state, tol=1e-12)


# ------------------------------------------------------------------- energies


def test_equilibrium_energies_are_exactly_zero():
    spec = GridSpec(n=64, length=2.0)
    zero = Field(spec, np.zeros(spec.n))
    st = WaveState(t=0.0, zeta_offset=zero, u=zero, grid=spec)
    snap = energy_snapshot(st, compute_aux(st))
    assert snap.E_total == 0.0
    assert all(e == 0 for e in snap.E_theta + snap.E_sigma)
    assert not snap.anomalous


def test_energy_k_guards(state, aux):
    with pytest.raises(ValueError, match="theta"):
        energy_k(state, aux, 0, "momentum")
    with pytest.raises(ValueError, match=">= 0"):
        energy_k(state, aux, -1)


def test_energies_are_real_to_roundoff(state, aux):
    snap = energy_snapshot(state, aux)
    for e in snap.E_theta + snap.E_sigma:
        assert abs(e.imag) <= 1e-12 * (1.0 + abs(e.real))
    assert not snap.anomalous and snap.E_total > 0.0


def test_energy_is_quadratic_in_amplitude():
    ea = total_energy(*[single_mode_state(64, 1e-3)] * 0,
                      *(lambda s: (s, compute_aux(s, tol=1e-12)))(
                          single_mode_state(64, 1e-3)))
    eb = total_energy(*(lambda s: (s, compute_aux(s, tol=1e-12)))(
        single_mode_state(64, 5e-4)))
    assert ea / eb == pytest.approx(4.0, rel=1e-4)


def test_energy_is_resolution_independent():
    vals = []
    for n in (64, 128):
        st = single_mode_state(n, 1e-3)
        vals.append(total_energy(st, compute_aux(st, tol=1e-12)))
    assert abs(vals[0] / vals[1] - 1.0) < 1e-10


def test_single_mode_manifold_degeneracy():
    """One holomorphic exponential: A == 1 exactly, b quadratic, a_t/a cubic.

    This degeneracy is why the generic power-law fits run on packet data;
    here it doubles as a precision anchor for the solved coefficients.
    """
    quantities = {}
    for eps in (1e-3, 5e-4):
        st = single_mode_state(64, eps)
        aux = compute_aux(st, tol=1e-13)
        assert norm_linf(aux.A - 1.0) < 1e-14
        quantities[eps] = (norm_linf(aux.b), norm_linf(aux.at_over_a))
    b_ratio = quantities[1e-3][0] / quantities[5e-4][0]
    c_ratio = quantities[1e-3][1] / quantities[5e-4][1]
    assert b_ratio == pytest.approx(4.0, abs=0.1)
    assert c_ratio == pytest.approx(8.0, abs=0.5)


def test_energy_snapshot_computes_aux_when_missing(state):
    snap = energy_snapshot(state)
    assert set(snap.solver) >= {"b", "A", "at_over_a", "theta_gap"}
    assert set(snap.constraint) == {"zeta", "u", "zeta_const", "u_const"}
    assert "theta_minus_2zeta_l2" in snap.norms


# ------------------------------------------------------- reports on synthetic


def fake_snap(t, e_total, norms=None):
    return EnergySnapshot(t=t, E_theta=(complex(e_total),), E_sigma=(0j,),
                          E_total=e_total, norms=norms or {}, constraint={},
                          solver={})


class FakeTraj:
    def __init__(self, config, snaps):
        self.config = config
        self.config_hash = config_hash(config)
        self.snapshots = tuple(snaps)
        self.step_count = 0
        self.terminated_early = None


def power_traj(eps, drift_power=4.0):
    cfg = RunConfig(n=64, epsilon=eps, t_end=1.0, **SM)
    norms = {"b_linf": 3.0 * eps ** 2, "A_minus_1_linf": 0.5 * eps ** 2,
             "at_over_a_linf": eps ** 2, "G_l2": 2.0 * eps ** 3,
             "theta_minus_2zeta_l2": eps ** 2}
    e0 = eps ** 2
    snaps = [fake_snap(0.0, e0, norms),
             fake_snap(1.0, e0 + eps ** drift_power, norms)]
    return FakeTraj(cfg, snaps)


def test_fit_loglog_exact_on_power_laws():
    x = [1e-2, 5e-3, 2.5e-3]
    assert fit_loglog(x, [7.0 * v ** 2 for v in x]) == pytest.approx(2.0)
    assert fit_loglog(x, [0.1 * v ** 3.5 for v in x]) == pytest.approx(3.5)
    assert math.isnan(fit_loglog(x, [1.0, -1.0, 2.0]))
    assert math.isnan(fit_loglog(x, [1.0, 0.0, 2.0]))


def test_scaling_report_recovers_exact_exponents():
    rep = scaling_report([power_traj(e) for e in (1e-2, 5e-3, 2.5e-3)])
    for name, want in rep["expected"].items():
        assert rep["slopes"][name] == pytest.approx(want, abs=1e-9), name
    assert rep["epsilons"] == (1e-2, 5e-3, 2.5e-3)


def test_scaling_report_needs_two_amplitudes():
    with pytest.raises(ValueError, match="two distinct"):
        scaling_report([power_traj(1e-2), power_traj(1e-2)])


def test_conservation_report_drift_arithmetic():
    tr = power_traj(1e-2)
    rep = conservation_report(tr)
    assert rep["E0"] == pytest.approx(1e-4)
    assert rep["max_drift"] == pytest.approx(1e-8)
    assert rep["rel_drift"] == pytest.approx(1e-4)
    assert rep["t_span"] == (0.0, 1.0)


def test_conservation_report_quartic_pairing():
    rep = conservation_report(power_traj(1e-2), paired=power_traj(5e-3))
    assert rep["pair"]["drift_ratio"] == pytest.approx(16.0)
    assert rep["pair"]["expected_ratio"] == pytest.approx(16.0)


def test_conservation_report_rejects_bad_pairs():
    with pytest.raises(ValueError, match="two snapshots"):
        conservation_report(FakeTraj(RunConfig(n=64, **SM),
                                     [fake_snap(0.0, 1.0)]))
    with pytest.raises(ValueError, match="share epsilon"):
        conservation_report(power_traj(1e-2), paired=power_traj(1e-2))
    other = power_traj(5e-3)
    other.config = RunConfig(n=128, epsilon=5e-3, t_end=1.0, **SM)
    with pytest.raises(ValueError, match="differ in 'n'"):
        conservation_report(power_traj(1e-2), paired=other)


def test_conservation_report_on_equilibrium_run():
    tr = run(RunConfig(n=64, epsilon=0.0, t_end=0.5, snapshot_dt=0.25))
    rep = conservation_report(tr)
    assert rep["max_drift"] == 0.0 and rep["rel_drift"] == 0.0


# --------------------------------------------------------------------- series


@pytest.fixture(scope="module")
def small_traj():
    return run(RunConfig(n=64, epsilon=1e-3, t_end=0.5, snapshot_dt=0.25,
                         **SM))


def test_series_roundtrip_is_exact(small_traj, tmp_path):
    p = tmp_path / "series.csv"
    write_series(small_traj, p)
    cols, data = read_series(p)
    assert data.shape == (len(small_traj.snapshots), len(cols))
    ts = data[:, cols.index("t")]
    assert list(ts) == [s.t for s in small_traj.snapshots]
    etot = data[:, cols.index("E_total")]
    assert list(etot) == [s.E_total for s in small_traj.snapshots]  # %.17g
    rz = data[:, cols.index("r_zeta")]
    assert list(rz) == [s.constraint["zeta"] for s in small_traj.snapshots]


def test_series_bytes_deterministic(small_traj, tmp_path):
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_series(small_traj, pa)
    write_series(small_traj, pb)
    assert pa.read_bytes() == pb.read_bytes()
    assert (tmp_path / "a.csv.meta.jsonl").read_bytes() == \
           (tmp_path / "b.csv.meta.jsonl").read_bytes()


def test_series_meta_sidecar(small_traj, tmp_path):
    p = tmp_path / "series.csv"
    write_series(small_traj, p)
    lines = (tmp_path / "series.csv.meta.jsonl").read_text().splitlines()
    assert len(lines) == 1 + len(small_traj.snapshots)
    head = json.loads(lines[0])
    assert head["config"] == small_traj.config.to_dict()
    assert head["config_hash"] == small_traj.config_hash
    assert head["step_count"] == small_traj.step_count
    snap_meta = json.loads(lines[1])
    assert set(snap_meta) == {"t", "solver", "constraint"}


def test_series_read_errors(tmp_path):
    with pytest.raises(IOFormatError, match="cannot read"):
        read_series(tmp_path / "absent.csv")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(IOFormatError, match="empty"):
        read_series(empty)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,E_total\n0.0,zero\n")
    with pytest.raises(IOFormatError, match="malformed"):
        read_series(bad)


def test_series_write_error_on_bad_path(small_traj, tmp_path):
    with pytest.raises(IOFormatError, match="cannot write"):
        write_series(small_traj, tmp_path / "no_such_dir" / "series.csv")


# --------------------------------------------------------------- expectations


def test_expectations_ship_with_package():
    exp = load_expectations()
    assert exp["version"] == 1
    assert set(exp) >= {"rel_energy_drift_max", "energy_drift_pair_ratio_min",
                        "energy_drift_pair_ratio_max",
                        "cubic_residual_rel_max", "scaling_slope_tol"}
    assert exp["energy_drift_pair_ratio_min"] < 16.0 < \
        exp["energy_drift_pair_ratio_max"]


def test_expectations_roundtrip(tmp_path):
    p = tmp_path / "exp.json"
    data = {"version": 1, "answer": 42.0}
    write_expectations(data, p)
    assert load_expectations(p) == data
    p.write_text("{broken")
    with pytest.raises(IOFormatError, match="malformed"):
        load_expectations(p)
