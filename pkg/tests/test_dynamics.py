import numpy as np
import pytest

from geophase.classical import oscillator_chart
from geophase.errors import AdiabaticityError, DomainError
from geophase.geometry import make_cap_circuit, make_disc_circuit
from geophase.quantum import AnalyticOscillatorBackend, GridBackend, oscillator_grid
from geophase.dynamics import (PROFILES, Schedule, convergence_table, evolve_classical,
                               evolve_quantum, loglog_slope, mixed_phase_numeric)

HANNAY = np.pi * (np.cosh(1.0) - 1.0)
ENSEMBLE = np.linspace(0, 2 * np.pi, 16, endpoint=False)


def gamma_exact(n):
    return -(n + 0.5) * HANNAY


def angle_diff(a, b):
    return abs(np.angle(np.exp(1j * (a - b))))


@pytest.fixture(scope="module")
def cap():
    return make_cap_circuit(1.0, 1.0, 256)


@pytest.fixture(scope="module")
def backend(cap):
    return AnalyticOscillatorBackend(1.0, oscillator_grid(cap.points(), 1.0, 2))


@pytest.fixture(scope="module")
def chart():
    return oscillator_chart()


# -- schedules --------------------------------------------------------------------------

def test_schedule_step_and_scaling(cap):
    s = Schedule.with_step(cap, 160.0, 0.1)
    assert s.time_steps == 1600 and s.dt == pytest.approx(0.1)
    s4 = s.scaled(4)
    assert s4.total_time == 640.0 and s4.dt == pytest.approx(0.1)
    assert s.time_steps * s.dt == pytest.approx(s.total_time)


@pytest.mark.parametrize("profile", sorted(PROFILES))
def test_schedule_endpoints(cap, profile):
    s = Schedule(cap, 10.0, 100, profile)
    assert s.progress(0.0) == 0.0
    assert s.progress(10.0) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(s.X(0.0), s.X(10.0), atol=1e-12)
    assert np.all(np.diff(s.progress(np.linspace(0, 10, 101))) >= 0)


def test_smooth_profile_starts_and_stops_at_rest():
    rate = PROFILES["smooth"][1]
    assert rate(np.array([0.0, 1.0])) == pytest.approx([0.0, 0.0], abs=1e-15)
    h = 1e-4
    assert (rate(h) - rate(0.0)) / h == pytest.approx(0.0, abs=1e-2)


def test_schedule_time_average_and_reversal(cap):
    s = Schedule(cap, 5.0, 10)
    # the cap circuit keeps XZ - Y^2 = 1
    assert s.time_average(lambda P: P[:, 0] * P[:, 2] - P[:, 1] ** 2) == pytest.approx(1.0, abs=1e-12)
    r = s.reversed()
    t = np.linspace(0, 5, 7)
    assert np.allclose(r.X(t), s.circuit.path(1 - s.progress(t)), atol=1e-12)


@pytest.mark.parametrize("kwargs", [dict(total_time=0.0, time_steps=10),
                                    dict(total_time=1.0, time_steps=0),
                                    dict(total_time=1.0, time_steps=10, profile="cubic")])
def test_schedule_validation(cap, kwargs):
    with pytest.raises(DomainError):
        Schedule(cap, **kwargs)


def test_schedule_speed(cap):
    s = Schedule(cap, 100.0, 10, "linear")
    pts = cap.points(4096)
    length = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
    assert s.speed() >= length.sum() / 100.0 * 0.99


# -- quantum ----------------------------------------------------------------------------

@pytest.mark.parametrize("n", [0, 2])
def test_constant_circuit_has_no_phase(n):
    c = make_cap_circuit(1.3, 0.0, 16)
    b = AnalyticOscillatorBackend(1.0, oscillator_grid(c.points(), 1.0, 3))
    r = evolve_quantum(b, n, Schedule(c, 37.0, 200))
    assert abs(r["gamma"]) < 1e-8
    assert r["leakage"] < 1e-12
    assert r["dynamical_phase_continuum"] == pytest.approx(37.0 * 1.3 * (n + 0.5), rel=1e-12)


def test_constant_circuit_on_grid_backend():
    c = make_cap_circuit(1.0, 0.0, 16)
    g = oscillator_grid(c.points(), 1.0, 2)
    r = evolve_quantum(GridBackend(1.0, g), 1, Schedule(c, 20.0, 100))
    assert abs(r["gamma"]) < 1e-8


def test_cap_ground_state_moderate_time(backend, cap):
    r = evolve_quantum(backend, 0, Schedule.with_step(cap, 160.0, 0.1))
    assert r["norm_error"] < 1e-8
    assert r["leakage"] < 1e-3
    assert angle_diff(r["gamma"], gamma_exact(0)) < 0.04
    assert r["slowness"] > 0 and r["min_gap"] == pytest.approx(1.0, abs=1e-9)


def test_reversal_negates_phase(backend, cap):
    s = Schedule.with_step(cap, 160.0, 0.2)
    fwd = evolve_quantum(backend, 0, s)["gamma"]
    rev = evolve_quantum(backend, 0, s.reversed())["gamma"]
    assert angle_diff(rev, -gamma_exact(0)) < 4e-2
    # the leading 1/T correction is even in the direction of travel, so it
    # cancels from the antisymmetric part
    assert angle_diff(0.5 * (fwd - rev), gamma_exact(0)) < 5e-3


def test_too_fast_schedule_raises(backend, cap):
    with pytest.raises(AdiabaticityError, match="increase the total time"):
        evolve_quantum(backend, 0, Schedule.with_step(cap, 1.0, 0.05))
    r = evolve_quantum(backend, 0, Schedule.with_step(cap, 1.0, 0.05), raise_on_leakage=False)
    assert r["leakage"] > 0.01


@pytest.mark.slow
def test_cap_ground_state_slow(backend, cap):
    s = Schedule.with_step(cap, 640.0, 0.2)
    for sched, sign in ((s, 1), (s.reversed(), -1)):
        r = evolve_quantum(backend, 0, sched)
        assert r["leakage"] < 1e-3
        assert angle_diff(r["gamma"], sign * gamma_exact(0)) < 1e-2


@pytest.mark.slow
def test_convergence_is_first_order(backend, cap):
    table = convergence_table(backend, 0, Schedule.with_step(cap, 80.0, 0.2), exact=gamma_exact(0))
    errors = [row["error"] for row in table["rows"]]
    assert errors[0] > errors[1] > errors[2]
    assert table["slope"] == pytest.approx(-1.0, abs=0.3)


def test_loglog_slope():
    T = np.array([1.0, 2.0, 4.0])
    assert loglog_slope(T, 3.0 / T) == pytest.approx(-1.0, abs=1e-12)


# -- classical --------------------------------------------------------------------------

def test_classical_constant_circuit(chart):
    c = make_cap_circuit(1.0, 0.0, 16)
    r = evolve_classical(chart, 1.0, ENSEMBLE, Schedule(c, 50.0, 1))
    assert np.abs(r["shifts"]).max() < 1e-6
    assert r["dynamical_angle"] == pytest.approx(50.0, rel=1e-12)
    assert r["action_drift"] < 1e-8


def test_classical_cap(chart, cap):
    r = evolve_classical(chart, 1.0, ENSEMBLE, Schedule(cap, 1000.0, 1))
    assert angle_diff(r["delta_theta"], HANNAY) < 2e-2
    assert r["action_drift"] < 0.01


def test_classical_doubling_time(chart, cap):
    a = evolve_classical(chart, 1.0, ENSEMBLE, Schedule(cap, 600.0, 1))
    b = evolve_classical(chart, 1.0, ENSEMBLE, Schedule(cap, 1200.0, 1))
    assert angle_diff(a["delta_theta"], b["delta_theta"]) < 2e-2
    assert b["dynamical_angle"] == pytest.approx(2 * a["dynamical_angle"], rel=1e-12)


def test_classical_planar_circuit(chart):
    c = make_disc_circuit([2.0, 0.0, 1.5], 0.6, (0, 2), 64)
    r = evolve_classical(chart, 1.0, ENSEMBLE, Schedule(c, 400.0, 1))
    assert abs(r["delta_theta"]) < 1e-2


def test_classical_fast_schedule_raises(chart, cap):
    with pytest.raises(AdiabaticityError):
        evolve_classical(chart, 1.0, ENSEMBLE, Schedule(cap, 0.5, 1))


@pytest.mark.slow
def test_quantum_classical_consistency(backend, chart, cap):
    s = Schedule.with_step(cap, 640.0, 0.2)
    g0 = evolve_quantum(backend, 0, s)["gamma"]
    g1 = evolve_quantum(backend, 1, s)["gamma"]
    dtheta = evolve_classical(chart, 1.0, ENSEMBLE, Schedule(cap, 640.0, 1))["delta_theta"]
    assert angle_diff(dtheta, -(g1 - g0)) < 3e-2


# -- mixed states -----------------------------------------------------------------------

def test_mixed_pure_weight(backend, cap):
    s = Schedule.with_step(cap, 80.0, 0.2)
    m = mixed_phase_numeric([1.0], s, backend)
    assert m["geometric"] == pytest.approx(evolve_quantum(backend, 0, s)["gamma"], abs=1e-12)
    assert m["visibility"] == pytest.approx(1.0, abs=1e-12)


def test_mixed_weights_validated(backend, cap):
    s = Schedule.with_step(cap, 80.0, 0.2)
    with pytest.raises(DomainError):
        mixed_phase_numeric([0.5, 0.4], s, backend)
    with pytest.raises(DomainError):
        mixed_phase_numeric([1.2, -0.2], s, backend)


@pytest.mark.slow
def test_mixed_two_levels(backend, cap):
    s = Schedule.with_step(cap, 640.0, 0.2)
    expected = np.angle(0.5 * np.exp(1j * gamma_exact(0)) + 0.5 * np.exp(1j * gamma_exact(1)))
    m = mixed_phase_numeric([0.5, 0.5], s, backend)
    assert angle_diff(m["geometric"], expected) < 2e-2
    rev = mixed_phase_numeric([0.5, 0.5], s.reversed(), backend)
    assert angle_diff(rev["geometric"], -expected) < 2e-2
