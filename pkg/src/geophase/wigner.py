"""Wigner and cross-Wigner transforms, radial action profiles W(I).

Grid transform
--------------
States are first interpolated (band-limited, via FFT) to a grid of spacing
h/2, so that q +- s lands on grid points for every s = k h/2. The offset sum
runs over k in [-N, N) with zero padding beyond the box, which gives 2N
momenta p_m = m pi hbar / (N h) spanning the grid's full momentum range
[-pi hbar/h, pi hbar/h). The discrete marginal sum_m W(q, p_m) dp equals
|psi(q)|^2 to round-off.

Radial profiles
---------------
A :class:`RadialWigner` is stored as a discrete measure: action nodes I_k
and coefficients c_k (already multiplied by quadrature weights), so that
``integral W(I) g(I) dI = sum_k c_k g(I_k)``. Closed-form, sampled,
concentrated and mixed profiles all share this representation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import brentq

from .errors import AliasingError, DomainError, NumericalError
from .quantum import SpatialGrid, _check_edges
from .specfun import QuadratureRule, laguerre, quadrature

__all__ = [
    "PhaseSpaceGrid",
    "RadialWigner",
    "wigner_transform",
    "cross_wigner",
    "wigner_matrix",
    "wigner_matrices",
    "oscillator_radial_wigner",
    "concentrated_radial_wigner",
    "radial_reduce",
    "mixed_radial_wigner",
    "thermal_weights",
    "covered_action",
]


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Tensor grid of positions (from the spatial grid) and momenta."""

    q: np.ndarray
    p: np.ndarray
    hbar: float

    @property
    def dq(self):
        return self.q[1] - self.q[0]

    @property
    def dp(self):
        return self.p[1] - self.p[0]

    def integrate(self, W):
        """Riemann sum over the last two axes (exact for the grid transform)."""
        return np.sum(W, axis=(-2, -1)) * self.dq * self.dp


def _upsample(psi, grid, alias_tol=1e-8):
    """Band-limited interpolation to spacing h/2 (2N points)."""
    psi = np.asarray(psi, dtype=complex)
    n = grid.n_points
    spectrum = np.fft.fft(psi, axis=-1)
    mag = np.abs(spectrum)
    k = np.abs(np.fft.fftfreq(n))
    top = mag[..., k > 0.45].max() if np.any(k > 0.45) else 0.0
    if top > alias_tol * mag.max():
        raise AliasingError(
            f"state has relative momentum content {top / mag.max():.1e} near the grid's "
            f"momentum limit; refine the grid spacing")
    padded = np.zeros(psi.shape[:-1] + (2 * n,), dtype=complex)
    half = n // 2
    padded[..., :half] = spectrum[..., :half]
    padded[..., -half:] = spectrum[..., -half:]
    # split the Nyquist bin symmetrically
    padded[..., half] = 0.5 * spectrum[..., half]
    padded[..., -half] = 0.5 * spectrum[..., half]
    return 2.0 * np.fft.ifft(padded, axis=-1)


def _offset_products(fa, fb, n):
    """C[..., j, k] = sum_components conj(fa(2j + k)) fb(2j - k), k in FFT order."""
    m = 2 * n
    k = np.fft.fftfreq(m, d=1.0 / m).astype(int)
    j2 = 2 * np.arange(n)[:, None]
    plus, minus = j2 + k[None, :], j2 - k[None, :]
    valid = (plus >= 0) & (plus < m) & (minus >= 0) & (minus < m)
    plus_c, minus_c = np.clip(plus, 0, m - 1), np.clip(minus, 0, m - 1)
    fa = np.atleast_2d(fa)
    fb = np.atleast_2d(fb)
    prod = np.einsum("cjk,cjk->jk", fa[:, plus_c].conj(), fb[:, minus_c])
    return np.where(valid, prod, 0.0)


def _transform(C, grid, hbar):
    n = grid.n_points
    m = 2 * n
    W = (grid.h / 2) / (np.pi * hbar) * m * np.fft.ifft(C, axis=-1)
    W = np.fft.fftshift(W, axes=-1)
    p = np.pi * hbar / (n * grid.h) * np.arange(-n, n)
    return W, PhaseSpaceGrid(grid.q, p, float(hbar))


def cross_wigner(psi_a, psi_b, grid, hbar):
    """(1/pi hbar) int ds conj(psi_a(q+s)) psi_b(q-s) exp(2 i p s / hbar), complex."""
    fa = _upsample(psi_a, grid)
    fb = _upsample(psi_b, grid)
    return _transform(_offset_products(fa, fb, grid.n_points), grid, hbar)


def wigner_transform(psi, grid, hbar, imag_tol=1e-12):
    """Wigner function of a normalized state on the grid; returns ``(W, psgrid)``."""
    _check_edges(np.asarray(psi), grid)
    W, ps = cross_wigner(psi, psi, grid, hbar)
    scale = np.abs(W).max()
    resid = np.abs(W.imag).max()
    if resid > imag_tol * max(scale, 1.0):
        raise NumericalError(f"Wigner function has imaginary residue {resid:.2e}")
    return W.real, ps


def wigner_matrices(states, grid, hbar):
    """All cross-Wigner functions W_ab of a family; shape ``(N, N, nq, np)``."""
    states = np.asarray(states)
    if states.ndim == 2:
        states = states[:, None, :]
    up = [_upsample(s, grid) for s in states]
    N = len(up)
    out = None
    for a in range(N):
        for b in range(N):
            W, ps = _transform(_offset_products(up[a], up[b], grid.n_points), grid, hbar)
            if out is None:
                out = np.empty((N, N) + W.shape, dtype=complex)
            out[a, b] = W
    return out, ps


def wigner_matrix(family, X, a, b, hbar):
    """Entry W_ab(q, p) of the Wigner matrix of ``family`` at X."""
    S = np.asarray(family.states(np.asarray(X, dtype=float)))
    if S.ndim == 2:
        S = S[:, None, :]
    return cross_wigner(S[a], S[b], family.grid, hbar)


# -- radial profiles -----------------------------------------------------------

@dataclass
class RadialWigner:
    """Radial profile W(I) as a discrete measure on action nodes.

    ``coeffs`` has shape ``(nI,)`` (scalar kind) or ``(nI, N, N)``
    (hermitian kind). ``tail`` estimates the profile mass outside the nodes.
    """

    hbar: float
    nodes: np.ndarray
    coeffs: np.ndarray
    kind: str = "scalar"
    descriptor: dict = field(default_factory=dict)
    values: Optional[np.ndarray] = None
    func: Optional[Callable] = None
    tail: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def size(self):
        return 1 if self.kind == "scalar" else self.coeffs.shape[-1]

    def __call__(self, I):
        if self.func is None:
            raise NumericalError("sampled profile has no closed form; use .values")
        return self.func(np.asarray(I, dtype=float))

    def integrate(self, g):
        """``integral W(I) g(I) dI``; ``g`` maps an action array to ``(nI, ...)``."""
        uniq, inv = np.unique(self.nodes, return_inverse=True)
        G = np.asarray(g(uniq))
        G = G[inv.ravel()]
        return np.tensordot(self.coeffs, G, axes=(0, 0))

    def normalization(self):
        """2 pi integral W dI (identity matrix for an orthonormal family)."""
        return 2 * np.pi * self.integrate(np.ones_like)

    def moment(self, k):
        return self.integrate(lambda I: I ** k)

    def check(self, tol=1e-8):
        norm = self.normalization()
        target = 1.0 if self.kind == "scalar" else np.eye(self.size)
        defect = np.abs(norm - target).max()
        if defect > tol:
            raise NumericalError(f"radial profile normalization off by {defect:.2e}")
        if self.kind != "scalar":
            herm = np.abs(self.coeffs - np.conj(np.swapaxes(self.coeffs, -1, -2))).max()
            if herm > tol:
                raise NumericalError(f"matrix profile not hermitian (defect {herm:.2e})")


def oscillator_radial_wigner(n, hbar, order=64):
    """W_n(I) = ((-1)^n / pi hbar) exp(-2I/hbar) L_n(4I/hbar), Gauss-Laguerre in u = 2I/hbar."""
    if n < 0:
        raise DomainError(f"level must be non-negative, got {n}")
    if hbar <= 0:
        raise DomainError("hbar must be positive")
    u, w = np.polynomial.laguerre.laggauss(order)
    sign = -1.0 if n % 2 else 1.0
    nodes = 0.5 * hbar * u
    # folded weight exp(u) cancels exp(-2I/hbar) analytically
    coeffs = 0.5 * hbar * w * sign / (np.pi * hbar) * laguerre(n, 2 * u)

    def func(I):
        return sign / (np.pi * hbar) * np.exp(-2 * I / hbar) * laguerre(n, 4 * I / hbar)

    return RadialWigner(float(hbar), nodes, coeffs, "scalar",
                        {"closed_form": "oscillator", "n": int(n), "order": order},
                        values=None, func=func)


def concentrated_radial_wigner(I0, hbar):
    """Classical-limit surrogate W(I) = delta(I - I0) / (2 pi)."""
    return RadialWigner(float(hbar), np.array([float(I0)]), np.array([1 / (2 * np.pi)]), "scalar",
                        {"concentrated": float(I0)})


def covered_action(chart, X, psgrid, fraction=0.98, n_theta=256):
    """Largest action whose torus stays inside ``fraction`` of the phase-space box."""
    qlim = fraction * min(-psgrid.q[0], psgrid.q[-1])
    plim = fraction * min(-psgrid.p[0], psgrid.p[-1])
    theta = 2 * np.pi * np.arange(n_theta) / n_theta

    def excess(I):
        q, p = chart.to_phase(I, theta, X)
        return max(np.abs(q).max() / qlim, np.abs(p).max() / plim) - 1.0

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2
        if hi > 1e8:
            raise NumericalError("could not bracket the covered action")
    return brentq(excess, 0.0 if excess(0.0) < 0 else 1e-300, hi, xtol=1e-10)


def radial_reduce(W, psgrid, chart, X, I_grid=None, n_theta=128, I_max=None, order=48,
                  spline_degree=5):
    """Average W(q, p) over the tori of ``chart`` at X.

    ``I_grid`` may be a :class:`QuadratureRule` (its weights are used), an
    array of actions (trapezoid weights), or ``None`` for a Gauss-Legendre
    rule of ``order`` nodes on ``[0, I_max]`` with ``I_max`` defaulting to
    the largest torus covered by the grid. ``W`` may be ``(nq, np)`` or
    ``(N, N, nq, np)``. The largest deviation of W from its torus mean is
    stored as ``diagnostics['theta_residual']``.
    """
    W = np.asarray(W)
    X = np.asarray(X, dtype=float)
    I_cover = covered_action(chart, X, psgrid)
    if I_grid is None:
        I_grid = quadrature("legendre", order, (0.0, I_cover if I_max is None else I_max))
    if isinstance(I_grid, QuadratureRule):
        I_nodes, weights = I_grid.nodes, I_grid.weights
    else:
        I_nodes = np.atleast_1d(np.asarray(I_grid, dtype=float))
        weights = np.gradient(I_nodes) if I_nodes.size > 1 else np.ones(1)
    if I_nodes.max() > I_cover * (1 + 1e-9):
        raise DomainError(f"action {I_nodes.max():g} exceeds the grid's covered shell "
                          f"(I <= {I_cover:g})")

    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    q, p = chart.to_phase(I_nodes[:, None], theta[None, :], X)

    def reduce(component):
        spline = RectBivariateSpline(psgrid.q, psgrid.p, component, kx=spline_degree,
                                     ky=spline_degree)
        vals = spline.ev(q, p)
        mean = vals.mean(axis=1)
        return mean, np.abs(vals - mean[:, None]).max()

    if W.ndim == 2:
        mean, resid = reduce(W.real)
        values, kind = mean, "scalar"
    else:
        N = W.shape[0]
        values = np.empty((len(I_nodes), N, N), dtype=complex)
        resid = 0.0
        for a in range(N):
            for b in range(N):
                re, r1 = reduce(W[a, b].real)
                im, r2 = reduce(W[a, b].imag)
                values[:, a, b] = re + 1j * im
                resid = max(resid, r1, r2)
        kind = "hermitian"

    wshape = (-1,) + (1,) * (values.ndim - 1)
    coeffs = weights.reshape(wshape) * values
    edge = np.abs(values[-1]).max()
    return RadialWigner(psgrid.hbar, I_nodes, coeffs, kind, {"sampled": True},
                        values=values, tail=float(np.pi * psgrid.hbar * edge),
                        diagnostics={"theta_residual": float(resid), "I_cover": float(I_cover)})


def mixed_radial_wigner(weights: Sequence[float], profiles: Sequence[RadialWigner]):
    """Convex combination sum_n p_n W_n(I)."""
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(profiles) or len(profiles) == 0:
        raise ValueError("need one weight per profile")
    if np.any(weights < 0):
        raise DomainError("mixture weights must be non-negative")
    if abs(weights.sum() - 1.0) > 1e-10:
        raise DomainError(f"mixture weights sum to {weights.sum():.15g}, not 1")
    hbar = profiles[0].hbar
    kind = profiles[0].kind
    if any(abs(p.hbar - hbar) > 1e-15 * hbar or p.kind != kind for p in profiles):
        raise DomainError("mixed profiles must share hbar and kind")
    nodes = np.concatenate([p.nodes for p in profiles])
    coeffs = np.concatenate([w * p.coeffs for w, p in zip(weights, profiles)])
    funcs = [p.func for p in profiles]
    func = None
    if all(f is not None for f in funcs):
        def func(I):
            return sum(w * f(I) for w, f in zip(weights, funcs))
    return RadialWigner(hbar, nodes, coeffs, kind,
                        {"mixture": [p.descriptor for p in profiles], "weights": weights.tolist()},
                        func=func, tail=float(np.dot(weights, [p.tail for p in profiles])))


def thermal_weights(beta, hbar, omega, tail=1e-12):
    """Boltzmann weights p_n proportional to exp(-beta hbar omega (n + 1/2)),
    truncated once the remaining mass drops below ``tail``."""
    x = np.exp(-beta * hbar * omega)
    if not 0 < x < 1:
        raise DomainError("thermal weights need beta * hbar * omega > 0")
    n_max = int(np.ceil(np.log(tail) / np.log(x)))
    p = (1 - x) * x ** np.arange(n_max + 1)
    return p / p.sum()
