import numpy as np
import pytest

import resodrift as rd
from resodrift.errors import FlowEscapeError
from resodrift.integrate import (
    IntegratorConfig,
    StopEvent,
    flow_points,
    integrate,
    lie_flow,
    symplecticity_defect,
)
from resodrift.systems import ActionWindow, star_window
from resodrift.torus import PhaseState


def moser_closed_form(eps, t):
    """Orbit of the saddle system from the origin: u = theta1 - theta2 stays
    pinned at the cosine maximum, so the actions drift linearly."""
    t = np.asarray(t, dtype=float)
    I = np.stack([-eps * t, eps * t], axis=-1)
    th = np.stack([-0.5 * eps * t**2, -0.5 * eps * t**2], axis=-1)
    return th, I


def test_moser_matches_closed_form():
    eps = 1e-3
    b = rd.make_bundle("moser", eps)
    rec = integrate(b.rhs(), [0.0, 0.0, 0.0, 0.0], (0.0, 50.0), energy_fn=b.energy_of)
    th_exact, I_exact = moser_closed_form(eps, rec.t)
    assert np.max(np.abs(rec.actions - I_exact)) < 1e-10
    # angles are recorded wrapped; compare on the torus
    d = np.abs(np.mod(rec.theta - th_exact + 0.5, 1.0) - 0.5)
    assert np.max(d) < 1e-10


def test_zero_epsilon_keeps_actions_bitwise_constant():
    b = rd.make_bundle("generic3", 0.0)
    y0 = [0.3, 0.7, 1.1, 0.004]
    rec = integrate(b.rhs(), y0, (0.0, 25.0))
    assert np.all(rec.actions[:, 0] == y0[2])
    assert np.all(rec.actions[:, 1] == y0[3])
    # and the angles advance at the frozen frequencies
    om = b.system.omega(y0[2], y0[3])
    d1 = np.abs(np.mod(rec.theta[:, 0] - (y0[0] + om[0] * rec.t) + 0.5, 1.0) - 0.5)
    assert np.max(d1) < 1e-9


def test_energy_is_conserved_along_orbits():
    b = rd.make_bundle("generic3", 1e-3)
    rec = integrate(
        b.rhs(), [0.1, 0.2, 1.0, 0.0], (0.0, 200.0), energy_fn=b.energy_of
    )
    assert np.max(np.abs(rec.energy - rec.energy[0])) < 1e-9
    # without an energy callback the column is NaN, not zero
    rec2 = integrate(b.rhs(), [0.1, 0.2, 1.0, 0.0], (0.0, 1.0))
    assert np.all(np.isnan(rec2.energy))


def test_low_order_integrator_is_less_accurate():
    # the saddle oracle is polynomial in t and both pairs nail it, so the
    # order comparison needs a genuinely nonlinear orbit and a reference run
    b = rd.make_bundle("generic3", 1e-2)
    y0 = [0.1, 0.3, 1.0, 0.01]
    t1 = 40.0
    ref_cfg = IntegratorConfig(order=8, rtol=1e-13, atol=1e-13)
    ref = integrate(b.rhs(), y0, (0.0, t1), config=ref_cfg).y_end
    err = {}
    for order, rtol in ((4, 1e-6), (8, 1e-11)):
        cfg = IntegratorConfig(order=order, rtol=rtol, atol=rtol)
        rec = integrate(b.rhs(), y0, (0.0, t1), config=cfg)
        err[order] = np.max(np.abs(rec.y_end - ref))
    assert err[8] < 1e-8
    assert err[8] < err[4] < 1e-3


def test_integrator_config_validation():
    assert IntegratorConfig(order=8).method == "DOP853"
    assert IntegratorConfig(order=4).method == "RK45"
    with pytest.raises(ValueError):
        _ = IntegratorConfig(order=6).method


def test_time_reversal_recovers_initial_state():
    b = rd.make_bundle("generic3", 1e-2)
    y0 = np.array([0.05, 0.9, 1.2, 0.01])
    fwd = integrate(b.rhs(), y0, (0.0, 40.0))
    back = integrate(b.rhs(), fwd.y_end, (40.0, 0.0))
    # local error control at 1e-10 accumulates to a few 1e-8 over the round trip
    assert np.max(np.abs(back.y_end - y0)) < 1e-7


def test_sampling_and_record_shapes():
    b = rd.make_bundle("generic3", 1e-3)
    rec = integrate(b.rhs(), [0.0, 0.0, 1.0, 0.0], (0.0, 10.0), n_samples=41)
    assert rec.t.shape == (41,)
    assert rec.theta.shape == (41, 2)
    assert rec.actions.shape == (41, 2)
    assert rec.t[0] == 0.0 and rec.t[-1] == 10.0
    assert rec.t_end == 10.0
    assert rec.stop_event is None and not rec.flagged
    assert rec.n_steps > 0 and rec.n_rhs_evals > rec.n_steps
    s0 = rec.initial_state
    assert s0.angles.theta1 == 0.0 and s0.actions.I1 == 1.0
    s1 = rec.final_state
    assert abs(s1.actions.I1 - rec.actions[-1, 0]) < 1e-15


def test_channel_distance_diagnostic():
    b = rd.make_bundle("moser", 1e-3)
    rec = integrate(
        b.rhs(),
        [0.0, 0.0, 1.0, 0.0],
        (0.0, 20.0),
        channel_interval=(1.0, 1.05),
    )
    # I2 grows like eps*t here, so the distance is |I2| until I1 leaves the slab
    expect = np.maximum(
        np.abs(rec.actions[:, 1]),
        np.maximum(0.0, np.maximum(1.0 - rec.actions[:, 0], rec.actions[:, 0] - 1.05)),
    )
    assert np.max(np.abs(rec.dist_channel - expect)) < 1e-14


def test_domain_exit_flags_and_roots_the_crossing():
    eps = 1e-3
    b = rd.make_bundle("moser", eps)
    rec = integrate(
        b.rhs(), [0.0, 0.0, 0.0, 0.0], (0.0, 800.0), domain_radius=0.5
    )
    assert rec.stop_event == "domain_exit"
    assert rec.flagged and rec.flag == "domain_exit"
    # |I| = eps * t reaches 0.5 at t = 500
    assert rec.t_end == pytest.approx(500.0, abs=1e-6)
    assert max(abs(rec.y_end[2]), abs(rec.y_end[3])) == pytest.approx(0.5, abs=1e-9)
    # samples past the stop are not recorded
    assert rec.t[-1] == pytest.approx(rec.t_end, abs=1e-12)


def test_custom_stop_event_is_not_a_failure():
    eps = 1e-3
    b = rd.make_bundle("moser", eps)
    target = StopEvent("target_drift", lambda _t, y: y[3] - 0.1, direction=1.0)
    rec = integrate(
        b.rhs(), [0.0, 0.0, 0.0, 0.0], (0.0, 800.0), stop_events=(target,)
    )
    assert rec.stop_event == "target_drift"
    assert not rec.flagged and rec.flag is None
    assert rec.t_end == pytest.approx(100.0, abs=1e-6)


def test_orbit_csv_round_trip(tmp_path):
    b = rd.make_bundle("generic3", 1e-3)
    rec = integrate(
        b.rhs(),
        [0.0, 0.0, 1.0, 0.0],
        (0.0, 5.0),
        n_samples=17,
        energy_fn=b.energy_of,
        channel_interval=(0.5, 1.5),
    )
    path = tmp_path / "orbit.csv"
    rec.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,theta1,theta2,I1,I2,energy,absI2,dist_channel"
    assert len(lines) == 1 + 17
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.max(np.abs(data[:, 0] - rec.t)) == 0.0
    assert np.max(np.abs(data[:, 3] - rec.actions[:, 0])) == 0.0
    assert np.max(np.abs(data[:, 5] - rec.energy)) == 0.0


# -- generator flows ----------------------------------------------------------


@pytest.fixture(scope="module")
def generic3_chi():
    b = rd.make_bundle("generic3", 1e-3)
    window = star_window(b.system.resonance, 0.01)
    chi = rd.solve_homological(b.system, b.perturbation, 8, window)
    return b, window, chi


def test_lie_flow_zero_time_is_identity(generic3_chi):
    _, _, chi = generic3_chi
    s = PhaseState.make(0.3, 0.4, 1.0, 0.001)
    assert lie_flow(chi, 1e-3, 0.0, s) is s


def test_lie_flow_is_invertible(generic3_chi):
    _, window, chi = generic3_chi
    s = PhaseState.make(0.3, 0.4, 1.0, 0.001)
    fwd = lie_flow(chi, 1e-3, 1.0, s, window=window)
    back = lie_flow(chi, 1e-3, -1.0, fwd, window=window)
    assert s.distance(back) < 1e-10
    # the time-1 map of a Hamiltonian generator is symplectic
    defect = symplecticity_defect(lambda st: lie_flow(chi, 1e-3, 1.0, st), s)
    assert defect < 1e-6


def test_lie_flow_enforces_displacement_budget(generic3_chi):
    _, _, chi = generic3_chi
    s = PhaseState.make(0.3, 0.4, 1.0, 0.001)
    moved = lie_flow(chi, 1e-3, 1.0, s, displacement_bound=1.0)
    assert s.distance(moved) > 0.0
    with pytest.raises(FlowEscapeError):
        lie_flow(chi, 1e-3, 1.0, s, displacement_bound=1e-12)


def test_lie_flow_detects_window_escape(generic3_chi):
    _, _, chi = generic3_chi
    s = PhaseState.make(0.3, 0.4, 1.0, 0.001)
    # a slab much narrower than the flow displacement cannot contain the orbit
    tight = ActionWindow(1.0 - 1e-7, 1.0 + 1e-7, 0.001 - 1e-7, 0.001 + 1e-7)
    with pytest.raises(FlowEscapeError):
        lie_flow(chi, 1e-2, 1.0, s, window=tight)


def test_flow_points_matches_single_state_flow(generic3_chi):
    _, window, chi = generic3_chi
    rng = np.random.default_rng(11)
    th1 = rng.uniform(0, 1, 6)
    th2 = rng.uniform(0, 1, 6)
    I1 = rng.uniform(0.8, 1.2, 6)
    I2 = rng.uniform(-0.005, 0.005, 6)
    T1, T2, J1, J2 = flow_points(chi, 1e-3, 1.0, th1, th2, I1, I2, window=window)
    assert T1.shape == (6,)
    for i in range(6):
        s = lie_flow(chi, 1e-3, 1.0, PhaseState.make(th1[i], th2[i], I1[i], I2[i]))
        assert abs(s.actions.I1 - J1[i]) < 1e-10
        assert abs(s.actions.I2 - J2[i]) < 1e-10
        d1 = abs((np.mod(T1[i] - s.angles.theta1 + 0.5, 1.0)) - 0.5)
        assert d1 < 1e-10


def test_flow_points_window_escape(generic3_chi):
    _, _, chi = generic3_chi
    tight = ActionWindow(1.0 - 1e-7, 1.0 + 1e-7, -1e-7, 1e-7)
    with pytest.raises(FlowEscapeError):
        flow_points(chi, 1e-2, 1.0, 0.3, 0.4, 1.0, 0.0, window=tight)


def test_hamiltonian_time_t_map_is_symplectic():
    b = rd.make_bundle("generic3", 1e-2)
    rhs = b.rhs()

    def time_one(state: PhaseState) -> PhaseState:
        rec = integrate(rhs, state.as_array(), (0.0, 1.0), n_samples=2)
        y = rec.y_end
        return PhaseState.make(y[0], y[1], y[2], y[3])

    s = PhaseState.make(0.2, 0.6, 1.0, 0.002)
    assert symplecticity_defect(time_one, s) < 1e-6
