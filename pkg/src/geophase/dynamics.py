"""Adiabatic transport by direct time evolution.

Quantum: i hbar dpsi/dt = H(X(t)) psi with the implicit-midpoint (Cayley)
step, and gamma = arg<psi(0)|psi(T)> + (accumulated dynamical phase).
Classical: Hamilton's equations along the same schedule, with the Hannay
angle read off as theta(T) - theta0 - integral of omega dt.

Dynamical phase
---------------
One Cayley step multiplies an instantaneous eigenstate of energy E by
exp(-2i arctan(E dt / 2 hbar)) rather than exp(-i E dt / hbar). The
subtracted dynamical phase uses the former so that the per-step cubic
phase error cancels and does not masquerade as geometry; the continuum
value (1/hbar) integral E dt is reported alongside. Both are integrals of
smooth functions of t/T and are computed by Gauss-Legendre quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .errors import AdiabaticityError, DomainError, NumericalError
from .geometry import Circuit
from .specfun import quadrature

__all__ = [
    "Schedule",
    "PROFILES",
    "evolve_quantum",
    "evolve_classical",
    "mixed_phase_numeric",
    "convergence_table",
    "loglog_slope",
]


def _smooth(tau):
    return tau - np.sin(2 * np.pi * tau) / (2 * np.pi)


def _smooth_rate(tau):
    return 1.0 - np.cos(2 * np.pi * tau)


PROFILES = {
    "linear": (lambda tau: tau, lambda tau: np.ones_like(tau)),
    # s'(0) = s'(1) = 0 and s''(0) = s''(1) = 0
    "smooth": (_smooth, _smooth_rate),
}


@dataclass
class Schedule:
    """Traverse ``circuit`` once in time ``total_time`` using ``time_steps`` steps."""

    circuit: Circuit
    total_time: float
    time_steps: int
    profile: str = "smooth"

    def __post_init__(self):
        if not self.total_time > 0:
            raise DomainError(f"total time must be positive, got {self.total_time}")
        if int(self.time_steps) < 1:
            raise DomainError(f"need at least one time step, got {self.time_steps}")
        if self.profile not in PROFILES:
            raise DomainError(f"unknown schedule profile {self.profile!r}; "
                              f"choose from {sorted(PROFILES)}")
        self.time_steps = int(self.time_steps)

    @classmethod
    def with_step(cls, circuit, total_time, dt, profile="smooth"):
        """Schedule whose step is at most ``dt``."""
        return cls(circuit, total_time, max(1, math.ceil(total_time / dt - 1e-9)), profile)

    @property
    def dt(self):
        return self.total_time / self.time_steps

    def progress(self, t):
        return PROFILES[self.profile][0](np.asarray(t, dtype=float) / self.total_time)

    def X(self, t):
        return self.circuit.path(self.progress(t))

    def reversed(self):
        return Schedule(self.circuit.reversed(), self.total_time, self.time_steps, self.profile)

    def scaled(self, factor):
        """Same circuit, ``factor`` times slower, same step size."""
        return Schedule(self.circuit, self.total_time * factor,
                        int(round(self.time_steps * factor)), self.profile)

    def speed(self, samples=513, step=1e-6):
        """max over t of |dX/dt|."""
        tau = np.linspace(0.0, 1.0, samples)
        s = PROFILES[self.profile][0](tau)
        ds = PROFILES[self.profile][1](tau)
        path = self.circuit.path
        dXds = (path(np.clip(s + step, 0, 1)) - path(np.clip(s - step, 0, 1))) / (
            np.clip(s + step, 0, 1) - np.clip(s - step, 0, 1))[:, None]
        return float(np.max(np.linalg.norm(dXds, axis=-1) * ds) / self.total_time)

    def time_average(self, f: Callable[[np.ndarray], np.ndarray], order=64):
        """(1/T) integral_0^T f(X(t)) dt; ``f`` maps points ``(m, d)`` to ``(m,)``."""
        rule = quadrature("legendre", order, (0.0, 1.0))
        return float(np.dot(rule.weights, f(self.circuit.path(PROFILES[self.profile][0](rule.nodes)))))


def _level_energy(backend, n):
    def f(points):
        return np.array([backend.eigenstates(x, [n]).energies[0] for x in points])
    return f


def _gap(backend, n, schedule, samples=33):
    levels = [n + 1] if n == 0 else [n - 1, n, n + 1]
    levels = sorted(set(levels) | {n})
    gaps = []
    for x in schedule.X(np.linspace(0, schedule.total_time, samples)):
        E = backend.eigenstates(x, levels).energies
        gaps.append(np.min(np.diff(E)))
    return float(min(gaps))


def evolve_quantum(backend, n, schedule: Schedule, hbar=None, leakage_tol=0.01,
                   energy_order=64, raise_on_leakage=True):
    """Adiabatically transport eigenstate ``n`` around ``schedule.circuit``.

    ``backend`` supplies ``hamiltonian(X)`` (dense matrix on its grid) and
    ``eigenstates(X, levels)``. Returns a dict with the final state,
    ``gamma`` (wrapped to (-pi, pi]), leakage, norm error, both dynamical
    phases and the slowness ratio (max |dX/dt|) / (min gap / hbar).

    Raises :class:`AdiabaticityError` when the leakage exceeds
    ``leakage_tol`` (pass ``raise_on_leakage=False`` to only report it).
    """
    hbar = backend.hbar if hbar is None else float(hbar)
    grid = backend.grid
    x0 = schedule.X(0.0)
    psi0 = backend.eigenstates(x0, [n]).states[0].astype(complex)
    psi = psi0.copy()
    dt = schedule.dt
    a = 1j * dt / (2 * hbar)
    eye = np.eye(psi.size)
    for k in range(schedule.time_steps):
        H = backend.hamiltonian(schedule.X((k + 0.5) * dt))
        psi = sla.solve(eye + a * H, psi - a * (H @ psi), assume_a="gen", check_finite=False)

    h = grid.h
    norm_error = abs(math.sqrt(h * np.vdot(psi, psi).real) - 1.0)
    final = backend.eigenstates(schedule.X(schedule.total_time), [n]).states[0]
    leakage = max(0.0, 1.0 - abs(h * np.vdot(final, psi)) ** 2)

    energy = _level_energy(backend, n)
    dyn_cont = schedule.total_time / hbar * schedule.time_average(energy, energy_order)
    dyn_step = schedule.time_steps * schedule.time_average(
        lambda pts: 2 * np.arctan(energy(pts) * dt / (2 * hbar)), energy_order)
    overlap = h * np.vdot(psi0, psi)
    # only gamma mod 2 pi is observable
    gamma = float(np.angle(overlap * np.exp(1j * dyn_step)))
    gap = _gap(backend, n, schedule)
    result = {
        "level": n,
        "total_time": schedule.total_time,
        "time_steps": schedule.time_steps,
        "dt": dt,
        "state": psi,
        "overlap": complex(overlap),
        "gamma": gamma,
        "dynamical_phase": dyn_step,
        "dynamical_phase_continuum": dyn_cont,
        "leakage": float(leakage),
        "norm_error": float(norm_error),
        "min_gap": gap,
        "slowness": schedule.speed() * hbar / gap,
    }
    if norm_error > 1e-8:
        raise NumericalError(f"norm drifted by {norm_error:.2e} during propagation")
    if raise_on_leakage and leakage > leakage_tol:
        raise AdiabaticityError(
            f"leakage 1 - |<n;X(T)|psi(T)>|^2 = {leakage:.3e} exceeds {leakage_tol:g} "
            f"(T = {schedule.total_time:g}, slowness {result['slowness']:.3g}); "
            f"increase the total time")
    return result


def _circular_mean(angles):
    return float(np.angle(np.mean(np.exp(1j * np.asarray(angles)))))


def evolve_classical(chart, I0, theta0, schedule: Schedule, rtol=1e-11, atol=1e-12,
                     drift_tol=0.05, omega_order=64):
    """Carry an ensemble of tori points around the circuit with Hamilton's equations.

    ``theta0`` is a scalar or an array of initial angles (the ensemble).
    Returns the per-member and circular-mean angle shifts, wrapped to
    (-pi, pi], the dynamical angle and the action drift.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    x0 = schedule.X(0.0)
    chart.validate(x0)
    q0, p0 = chart.to_phase(I0, theta0, x0)
    m = theta0.size

    def rhs(t, y):
        dq, dp = chart.vector_field(y[:m], y[m:], schedule.X(t))
        return np.concatenate([np.broadcast_to(dq, (m,)), np.broadcast_to(dp, (m,))])

    sol = solve_ivp(rhs, (0.0, schedule.total_time), np.concatenate([q0, p0]),
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericalError(f"trajectory integration failed: {sol.message}")
    qT, pT = sol.y[:m, -1], sol.y[m:, -1]
    xT = schedule.X(schedule.total_time)
    IT, thetaT = chart.to_action_angle(qT, pT, xT)
    dyn = schedule.total_time * schedule.time_average(
        lambda pts: np.array([float(np.squeeze(chart.frequency(I0, x))) for x in pts]),
        omega_order)
    raw = thetaT - theta0 - dyn
    shifts = np.angle(np.exp(1j * raw))
    drift = float(np.max(np.abs(np.asarray(IT) - I0)) / I0)
    result = {
        "q": qT,
        "p": pT,
        "shifts": shifts,
        "delta_theta": _circular_mean(shifts),
        "dynamical_angle": dyn,
        "action_drift": drift,
        "ensemble_spread": float(np.std(np.angle(np.exp(1j * (shifts - _circular_mean(shifts)))))),
    }
    if drift > drift_tol:
        raise AdiabaticityError(f"relative action drift {drift:.3e} exceeds {drift_tol:g}; "
                                f"increase the total time")
    return result


def mixed_phase_numeric(weights: Sequence[float], schedule: Schedule, backend, hbar=None,
                        tail_tol=1e-10, **kwargs):
    """Phase of Tr[U(T) rho] for rho diagonal in the eigenbasis at X(0).

    ``weights[k]`` is the population of level k. Returns the raw phase
    ``total`` = arg sum_n p_n <n|U(T)|n> and ``geometric`` = arg sum_n
    p_n exp(i gamma_n), where the per-level dynamical factors are removed.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0):
        raise DomainError("weights must be a non-empty list of non-negative numbers")
    if abs(w.sum() - 1.0) > tail_tol:
        raise DomainError(f"weights sum to {w.sum():.15g}; truncation tail exceeds {tail_tol:g}")
    runs = {}
    for n, p in enumerate(w):
        if p > 0:
            runs[n] = evolve_quantum(backend, n, schedule, hbar, **kwargs)
    total = sum(w[n] * r["overlap"] for n, r in runs.items())
    geometric = sum(w[n] * np.exp(1j * r["gamma"]) for n, r in runs.items())
    return {
        "total": float(np.angle(total)),
        "geometric": float(np.angle(geometric)),
        "visibility": float(abs(geometric)),
        "levels": {n: r["gamma"] for n, r in runs.items()},
        "leakage": {n: r["leakage"] for n, r in runs.items()},
    }


def loglog_slope(x, y):
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def convergence_table(backend, n, schedule: Schedule, factors=(1, 2, 4), exact=None, **kwargs):
    """Run ``evolve_quantum`` at total times T0 * factor (fixed dt).

    Returns rows ``(T, leakage, gamma, error)`` and, when ``exact`` is
    given, the fitted log-log slope of the error against T.
    """
    rows = []
    for f in factors:
        r = evolve_quantum(backend, n, schedule.scaled(f), **kwargs)
        err = float("nan") if exact is None else abs(np.angle(np.exp(1j * (r["gamma"] - exact))))
        rows.append({"T": r["total_time"], "leakage": r["leakage"], "gamma": r["gamma"],
                     "error": err})
    slope = None
    if exact is not None:
        slope = loglog_slope([r["T"] for r in rows], [r["error"] for r in rows])
    return {"rows": rows, "slope": slope}
