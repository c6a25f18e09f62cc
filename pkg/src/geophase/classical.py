"""Action-angle charts for 1-DOF integrable systems, the torus-averaged
two-form <dp ^ dq> and the Hannay angle.

Angle-origin convention: theta = 0 sits where the orbit crosses the
equilibrium position moving in the positive q direction. For the
generalized oscillator this is q = 0 with the shifted momentum
p + Yq/Z maximal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, NumericalError
from .geometry import TwoFormField, check_oscillator_domain, oscillator_frequency, surface_integral
from .specfun import quadrature

__all__ = [
    "ActionAngleChart",
    "OscillatorChart",
    "NumericalChart",
    "ClassicalTwoFormSamples",
    "oscillator_chart",
    "oscillator_two_form",
    "torus_average",
    "classical_two_form",
    "classical_two_form_field",
    "sample_two_form",
    "hannay_angle",
    "PARAM_STEP",
    "ACTION_STEP",
]

PARAM_STEP = 1e-4
ACTION_STEP = 1e-4


class ActionAngleChart:
    """Family over parameter points X of maps (I, theta) -> (q, p).

    Subclasses implement :meth:`to_phase`, :meth:`frequency`,
    :meth:`hamiltonian` and :meth:`vector_field`; :meth:`to_action_angle`
    is needed only for reading trajectories back through the chart.
    """

    dim = 3
    valid_I = (0.0, np.inf)

    def validate(self, X):
        pass

    def to_phase(self, I, theta, X):
        raise NotImplementedError

    def to_action_angle(self, q, p, X):
        raise NotImplementedError

    def frequency(self, I, X):
        raise NotImplementedError

    def hamiltonian(self, q, p, X):
        raise NotImplementedError

    def vector_field(self, q, p, X):
        """Hamilton's equations (dq/dt, dp/dt)."""
        raise NotImplementedError


class OscillatorChart(ActionAngleChart):
    """Chart for H = (X q^2 + 2 Y q p + Z p^2) / 2 with XZ > Y^2, Z > 0.

    q = sqrt(2IZ/w) sin(theta), p = sqrt(2Iw/Z) cos(theta) - (Y/Z) q.

    ``origin_shift`` optionally moves the angle origin by an X-dependent
    amount (used to probe how conventions affect the two-form).
    """

    def __init__(self, origin_shift: Optional[Callable[[np.ndarray], float]] = None):
        self.origin_shift = origin_shift

    def validate(self, X):
        check_oscillator_domain(X)

    def _split(self, X):
        X = np.asarray(X, dtype=float)
        return X[..., 0], X[..., 1], X[..., 2]

    def to_phase(self, I, theta, X):
        x, y, z = self._split(X)
        w = np.sqrt(x * z - y * y)
        if self.origin_shift is not None:
            theta = theta + self.origin_shift(np.asarray(X, dtype=float))
        I = np.asarray(I, dtype=float)
        q = np.sqrt(2 * I * z / w) * np.sin(theta)
        p = np.sqrt(2 * I * w / z) * np.cos(theta) - (y / z) * q
        return q, p

    def to_action_angle(self, q, p, X):
        x, y, z = self._split(X)
        w = np.sqrt(x * z - y * y)
        pt = p + y * q / z
        I = 0.5 * (z * pt * pt + w * w * q * q / z) / w
        theta = np.arctan2(q * np.sqrt(w / z), pt * np.sqrt(z / w))
        if self.origin_shift is not None:
            theta = theta - self.origin_shift(np.asarray(X, dtype=float))
        return I, np.mod(theta, 2 * np.pi)

    def frequency(self, I, X):
        return oscillator_frequency(X) + 0.0 * np.asarray(I, dtype=float)

    def hamiltonian(self, q, p, X):
        x, y, z = self._split(X)
        return 0.5 * (x * q * q + 2 * y * q * p + z * p * p)

    def vector_field(self, q, p, X):
        x, y, z = self._split(X)
        return y * q + z * p, -(x * q + y * p)


def oscillator_chart(origin_shift=None):
    """Action-angle chart of the generalized harmonic oscillator."""
    return OscillatorChart(origin_shift)


def oscillator_two_form(I, X):
    """Closed form F^c = -(I / 4w^3)(X dY^dZ + Y dZ^dX + Z dX^dY)."""
    X = np.asarray(X, dtype=float)
    w = oscillator_frequency(X)
    c = -np.asarray(I, dtype=float) / (4 * w ** 3)
    x, y, z = X
    F = np.zeros(np.shape(I) + (3, 3))
    F[..., 1, 2], F[..., 2, 0], F[..., 0, 1] = c * x, c * y, c * z
    return F - np.swapaxes(F, -1, -2)


class NumericalChart(ActionAngleChart):
    """Numerically constructed chart for H = p^2 / (2 m(X)) + V(q; X).

    Only bound motion inside a single well is supported. ``well = (a, b)``
    must bracket exactly one minimum of V for every admissible X; orbits must
    stay strictly inside ``(a, b)``.

    Turning points come from bracketed root finding, the action from
    Gauss-Legendre quadrature between turning points and the angle from the
    time needed to reach q along the orbit (all after the substitution
    q = c + (D/2) sin(phi), which removes the turning-point singularities).
    """

    def __init__(self, potential, well, mass=1.0, dim=1, force=None, order=64,
                 validate=None, xtol=1e-15):
        self.potential = potential
        self.force = force
        self.well = tuple(float(v) for v in well)
        self.mass = mass
        self.dim = dim
        self._rule = quadrature("legendre", order, (-1.0, 1.0))
        self._validate = validate
        self.xtol = xtol

    def validate(self, X):
        if self._validate is not None:
            self._validate(X)

    # -- helpers ------------------------------------------------------------
    def _m(self, X):
        return float(self.mass(X)) if callable(self.mass) else float(self.mass)

    def _V(self, q, X):
        return self.potential(q, X)

    def _dV(self, q, X):
        if self.force is not None:
            return -self.force(q, X)
        h = 1e-6 * max(1.0, abs(q))
        return (self._V(q + h, X) - self._V(q - h, X)) / (2 * h)

    def _minimum(self, X):
        a, b = self.well
        res = minimize_scalar(lambda q: self._V(q, X), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-10})
        q0 = res.x
        span = 1e-3 * (b - a)
        lo, hi = max(a, q0 - span), min(b, q0 + span)
        while self._dV(lo, X) > 0 and lo > a:
            lo = max(a, lo - 10 * span)
        while self._dV(hi, X) < 0 and hi < b:
            hi = min(b, hi + 10 * span)
        if not (self._dV(lo, X) <= 0 <= self._dV(hi, X)):
            raise DomainError(f"no isolated minimum of the potential inside {self.well}")
        return brentq(lambda q: self._dV(q, X), lo, hi, xtol=self.xtol, rtol=1e-15)

    def _energy_range(self, X):
        a, b = self.well
        qm = self._minimum(X)
        return qm, float(self._V(qm, X)), float(min(self._V(a, X), self._V(b, X)))

    def _turning_points(self, E, X, qm):
        a, b = self.well
        f = lambda q: self._V(q, X) - E
        if f(a) <= 0 or f(b) <= 0:
            raise DomainError("orbit leaves the declared well")
        return (brentq(f, a, qm, xtol=self.xtol, rtol=1e-15),
                brentq(f, qm, b, xtol=self.xtol, rtol=1e-15))

    def _orbit(self, E, X, qm):
        ql, qr = self._turning_points(E, X, qm)
        c, half = 0.5 * (ql + qr), 0.5 * (qr - ql)
        m = self._m(X)

        def momentum(phi):
            kin = np.maximum(E - self._V(c + half * np.sin(phi), X), 0.0)
            return np.sqrt(2 * m * kin)

        def dtime(phi):
            # dt/dphi = m (dq/dphi) / p
            cos = np.cos(phi)
            p = momentum(phi)
            return np.where(p > 0, m * half * cos / np.where(p > 0, p, 1.0), 0.0)

        return c, half, momentum, dtime

    def _gl(self, fn, lo, hi):
        lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
        x, w = self._rule.nodes, self._rule.weights
        mid, rad = 0.5 * (hi + lo), 0.5 * (hi - lo)
        nodes = mid[..., None] + rad[..., None] * x
        return rad * (fn(nodes) @ w)

    def _action_of_energy(self, E, X, qm):
        c, half, momentum, _ = self._orbit(E, X, qm)
        integrand = lambda phi: momentum(phi) * half * np.cos(phi)
        return float(self._gl(integrand, -np.pi / 2, np.pi / 2)) / np.pi

    def _energy_of_action(self, I, X):
        qm, vmin, emax = self._energy_range(X)
        if I <= 0:
            return qm, vmin
        top = emax - 1e-12 * max(1.0, abs(emax))
        if self._action_of_energy(top, X, qm) < I:
            raise DomainError(f"action {I:g} exceeds the largest orbit inside the well")
        E = brentq(lambda e: self._action_of_energy(e, X, qm) - I, vmin, top,
                   xtol=1e-15, rtol=1e-15)
        return qm, E

    def _timing(self, E, X, qm):
        c, half, momentum, dtime = self._orbit(E, X, qm)
        half_period = float(self._gl(dtime, -np.pi / 2, np.pi / 2))
        phi_min = np.arcsin(np.clip((qm - c) / half, -1.0, 1.0))
        t_min = float(self._gl(dtime, -np.pi / 2, phi_min))
        return c, half, momentum, dtime, 2 * half_period, t_min

    # -- public API ---------------------------------------------------------
    def action(self, E, X):
        """Action I(E) = (1/2 pi) closed integral of p dq."""
        qm, vmin, _ = self._energy_range(X)
        return 0.0 if E <= vmin else self._action_of_energy(E, X, qm)

    def frequency(self, I, X):
        I_arr = np.atleast_1d(np.asarray(I, dtype=float))
        out = []
        for Ik in I_arr:
            qm, E = self._energy_of_action(max(Ik, 1e-12), X)
            out.append(2 * np.pi / self._timing(E, X, qm)[4])
        out = np.array(out)
        return out.reshape(np.shape(I)) if np.ndim(I) else float(out[0])

    def hamiltonian(self, q, p, X):
        return np.asarray(p) ** 2 / (2 * self._m(X)) + self._V(np.asarray(q), X)

    def vector_field(self, q, p, X):
        return np.asarray(p) / self._m(X), -self._dV_array(np.asarray(q), X)

    def _dV_array(self, q, X):
        if self.force is not None:
            return -self.force(q, X)
        h = 1e-6 * np.maximum(1.0, np.abs(q))
        return (self._V(q + h, X) - self._V(q - h, X)) / (2 * h)

    def to_phase(self, I, theta, X):
        I_arr = np.asarray(I, dtype=float)
        theta = np.asarray(theta, dtype=float)
        I_b, th_b = np.broadcast_arrays(I_arr, theta)
        q_out, p_out = np.empty(I_b.shape), np.empty(I_b.shape)
        for Ik in np.unique(I_b):
            sel = I_b == Ik
            q_out[sel], p_out[sel] = self._to_phase_fixed_I(float(Ik), th_b[sel], X)
        return q_out, p_out

    def _to_phase_fixed_I(self, I, theta, X):
        qm, E = self._energy_of_action(I, X)
        if I <= 0:
            return np.full(theta.shape, qm), np.zeros(theta.shape)
        c, half, momentum, dtime, T, t_min = self._timing(E, X, qm)
        tau = np.mod(theta / (2 * np.pi) * T + t_min, T)
        upper = tau <= T / 2
        target = np.where(upper, tau, T - tau)
        lo = np.full(theta.shape, -np.pi / 2)
        hi = np.full(theta.shape, np.pi / 2)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self._gl(dtime, -np.pi / 2, mid) < target
            lo, hi = np.where(below, mid, lo), np.where(below, hi, mid)
        phi = 0.5 * (lo + hi)
        q = c + half * np.sin(phi)
        p = momentum(phi) * np.where(upper, 1.0, -1.0)
        return q, p

    def to_action_angle(self, q, p, X):
        q_arr, p_arr = np.broadcast_arrays(np.asarray(q, float), np.asarray(p, float))
        I_out, th_out = np.empty(q_arr.shape), np.empty(q_arr.shape)
        for idx in np.ndindex(q_arr.shape):
            E = float(self.hamiltonian(q_arr[idx], p_arr[idx], X))
            qm, vmin, _ = self._energy_range(X)
            I_out[idx] = self._action_of_energy(E, X, qm)
            c, half, momentum, dtime, T, t_min = self._timing(E, X, qm)
            phi = np.arcsin(np.clip((q_arr[idx] - c) / half, -1.0, 1.0))
            t = float(self._gl(dtime, -np.pi / 2, phi))
            tau = t if p_arr[idx] >= 0 else T - t
            th_out[idx] = np.mod(2 * np.pi * (tau - t_min) / T, 2 * np.pi)
        return I_out, th_out


def _theta_rule(rule):
    if rule is None:
        return quadrature("periodic", 256)
    if isinstance(rule, int):
        return quadrature("periodic", rule)
    return rule


def torus_average(f, chart, I, X, rule=None):
    """(1/2 pi) closed integral of f(q(I, theta; X), p(I, theta; X)) d theta."""
    rule = _theta_rule(rule)
    q, p = chart.to_phase(I, rule.nodes, X)
    vals = np.asarray(f(q, p), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("non-finite values in torus average")
    period = rule.domain[1] - rule.domain[0]
    return float(rule.integrate(vals)) / period


def classical_two_form(chart, I, X, step=PARAM_STEP, rule=None):
    """Torus average of dp ^ dq over parameter differentials at fixed (I, theta).

    Component ``F[i, j] = < d_i p d_j q - d_j p d_i q >`` with central
    differences of step ``step * |X|`` in each parameter direction. ``I`` may
    be an array, giving shape ``I.shape + (d, d)``.
    """
    rule = _theta_rule(rule)
    X = np.asarray(X, dtype=float)
    chart.validate(X)
    d = X.shape[-1]
    h = step * max(np.linalg.norm(X), 1.0)
    I_arr = np.asarray(I, dtype=float)
    I_col = I_arr.reshape(-1, 1)
    th = rule.nodes[None, :]

    dq, dp = [], []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        try:
            chart.validate(X + e)
            chart.validate(X - e)
        except DomainError as exc:
            raise DomainError(f"finite-difference stencil leaves the domain at {X}: {exc}") from exc
        qp, pp = chart.to_phase(I_col, th, X + e)
        qm, pm = chart.to_phase(I_col, th, X - e)
        dq.append((qp - qm) / (2 * h))
        dp.append((pp - pm) / (2 * h))

    period = rule.domain[1] - rule.domain[0]
    F = np.zeros((I_col.shape[0], d, d))
    for i in range(d):
        for j in range(i + 1, d):
            integrand = dp[i] * dq[j] - dp[j] * dq[i]
            F[:, i, j] = rule.integrate(integrand, axis=-1) / period
            F[:, j, i] = -F[:, i, j]
    return F.reshape(I_arr.shape + (d, d))


def classical_two_form_field(chart, I, step=PARAM_STEP, rule=None):
    """F^c(I; .) at fixed action as a :class:`TwoFormField`."""
    return TwoFormField(lambda X: classical_two_form(chart, I, X, step, rule), chart.dim)


@dataclass
class ClassicalTwoFormSamples:
    """F^c(I; X) tabulated on an action grid at a fixed parameter point."""

    I_grid: np.ndarray
    forms: np.ndarray
    X: np.ndarray

    def linearity_defect(self):
        """Largest relative deviation from the least-squares line through the origin."""
        I = self.I_grid
        slope = np.tensordot(I, self.forms, axes=(0, 0)) / np.dot(I, I)
        fit = I[:, None, None] * slope
        scale = np.abs(self.forms).max()
        return float(np.abs(self.forms - fit).max() / scale) if scale > 0 else 0.0


def sample_two_form(chart, X, I_grid, step=PARAM_STEP, rule=None):
    I_grid = np.asarray(I_grid, dtype=float)
    return ClassicalTwoFormSamples(I_grid, classical_two_form(chart, I_grid, X, step, rule),
                                   np.asarray(X, dtype=float))


def hannay_angle(chart, I, surface, dI=ACTION_STEP, order=32, step=PARAM_STEP, rule=None):
    """Hannay angle -d/dI of the surface integral of F^c(I; X), by central difference."""
    lo, hi = chart.valid_I
    if not (lo < I - dI and I + dI < hi):
        raise DomainError(f"I +- dI = {I} +- {dI} outside the chart's action range {chart.valid_I}")

    def flux(action):
        return surface_integral(classical_two_form_field(chart, action, step, rule), surface, order)

    return -(flux(I + dI) - flux(I - dI)) / (2 * dI)
