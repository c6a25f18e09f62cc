"""Eigenstates of the quantized oscillator, plaquette Berry curvature,
Berry phases and non-abelian loop holonomies.

States live on a periodic spatial grid and are normalized in the grid inner
product ``<a|b> = h * sum(conj(a) * b)``. Vector-valued states (an internal
factor tensored onto the orbital wavefunction) carry the component axis
before the grid axis.

Curvature sign: ``F_ij = +arg(loop product)/delta^2`` for the loop
X -> X + d e_i -> X + d e_i + d e_j -> X + d e_j -> X, so that the Berry phase
is ``gamma = -(surface integral of F)`` and agrees with the phase picked up
in an adiabatic time evolution around the same circuit.
"""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, GapError, GridTooNarrowError, NumericalError, OverlapError
from .geometry import TwoFormField, check_oscillator_domain, oscillator_frequency, surface_integral
from .specfun import hermite_function, hermite_functions

__all__ = [
    "SpatialGrid",
    "EigenstateSet",
    "AnalyticOscillatorBackend",
    "GridBackend",
    "DegenerateFamily",
    "oscillator_extent",
    "oscillator_grid",
    "analytic_oscillator_state",
    "grid_hamiltonian",
    "berry_curvature_plaquette",
    "berry_curvature",
    "berry_curvature_field",
    "berry_phase",
    "oscillator_family",
    "wz_connection_loop",
    "inner",
    "EDGE_TOL",
]

EDGE_TOL = 1e-12


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic grid ``q_k = q_min + k h``, ``k = 0..n_points-1``."""

    q_min: float
    q_max: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if n < 128 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 128, got {n}")
        if not self.q_max > self.q_min:
            raise ValueError("q_max must exceed q_min")

    @classmethod
    def centered(cls, half_width, n_points):
        """Grid on [-L, L) whose nodes include q = 0."""
        return cls(-float(half_width), float(half_width), int(n_points))

    @property
    def h(self):
        return (self.q_max - self.q_min) / self.n_points

    @property
    def q(self):
        return self.q_min + self.h * np.arange(self.n_points)

    def wavenumbers(self):
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.h)

    def p_max(self, hbar):
        """Largest representable momentum."""
        return np.pi * hbar / self.h


def inner(a, b, grid):
    """Grid inner product, summing over any leading component axes."""
    return grid.h * np.vdot(a, b)


# -- grid sizing ------------------------------------------------------------

@lru_cache(maxsize=256)
def _xi_edge(n, tol=1e-14):
    xi = np.linspace(0.0, 60.0, 6001)
    chi = np.abs(hermite_function(n, xi))
    above = np.flatnonzero(chi > tol)
    return float(xi[above[-1] + 1])


def oscillator_extent(n_max, X, hbar):
    """Phase-space half-extents (q, p) of the oscillator states n <= n_max at X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    check_oscillator_domain(X)
    w = oscillator_frequency(X)
    alpha_max = np.sqrt(w / (X[:, 2] * hbar)).max()
    xi = _xi_edge(n_max, 1e-13 / max(1.0, np.sqrt(alpha_max)))
    q_ext = xi * np.sqrt(hbar * X[:, 2] / w)
    p_ext = xi * np.sqrt(hbar * X[:, 0] / w)
    return float(q_ext.max()), float(p_ext.max())


def oscillator_grid(points, hbar, n_max, margin=1.08, p_margin=1.15, min_points=128):
    """Smallest power-of-two grid resolving levels ``0..n_max`` at all ``points``."""
    q_ext, p_ext = oscillator_extent(n_max, points, hbar)
    half = margin * q_ext
    h_needed = np.pi * hbar / (p_margin * p_ext)
    n = max(min_points, 1 << int(np.ceil(np.log2(2 * half / h_needed))))
    return SpatialGrid.centered(half, n)


# -- states and Hamiltonians ------------------------------------------------

def _check_edges(psi, grid, what="state"):
    edge = max(np.abs(psi[..., 0]).max(), np.abs(psi[..., -1]).max())
    if edge > EDGE_TOL:
        raise GridTooNarrowError(
            f"{what} has amplitude {edge:.2e} at the grid edge (limit {EDGE_TOL:g}); "
            f"widen the grid beyond [{grid.q_min:g}, {grid.q_max:g}]")


def analytic_oscillator_state(n, X, hbar, grid):
    """psi_n(q; X) = sqrt(a) chi_n(a q) exp(-i Y q^2 / (2 Z hbar)), a = sqrt(w / (Z hbar))."""
    X = np.asarray(X, dtype=float)
    check_oscillator_domain(X)
    if n < 0:
        raise DomainError(f"level must be non-negative, got {n}")
    if hbar <= 0:
        raise DomainError("hbar must be positive")
    x, y, z = X
    w = np.sqrt(x * z - y * y)
    alpha = np.sqrt(w / (z * hbar))
    q = grid.q
    psi = np.sqrt(alpha) * hermite_function(n, alpha * q) * np.exp(-1j * y * q * q / (2 * z * hbar))
    _check_edges(psi, grid)
    return psi


def _analytic_states(levels, X, hbar, grid):
    x, y, z = X
    w = np.sqrt(x * z - y * y)
    alpha = np.sqrt(w / (z * hbar))
    q = grid.q
    chi = hermite_functions(max(levels), alpha * q)[list(levels)]
    psi = np.sqrt(alpha) * chi * np.exp(-1j * y * q * q / (2 * z * hbar))
    _check_edges(psi, grid)
    return psi


class GridOperators:
    """Dense matrices of q^2/2, (qp + pq)/2 and p^2/2 on a grid (spectral p)."""

    def __init__(self, grid, hbar):
        n = grid.n_points
        F = np.fft.fft(np.eye(n), axis=0) / np.sqrt(n)
        k = grid.wavenumbers()
        P = F.conj().T @ (hbar * k[:, None] * F)
        P = 0.5 * (P + P.conj().T)
        Q = grid.q
        self.q = Q
        self.P = P
        self.half_q2 = np.diag(0.5 * Q * Q).astype(complex)
        cross = 0.5 * (Q[:, None] * P + P * Q[None, :])
        self.half_cross = 0.5 * (cross + cross.conj().T)
        kin = F.conj().T @ (0.5 * (hbar * k[:, None]) ** 2 * F)
        self.half_p2 = 0.5 * (kin + kin.conj().T)

    def oscillator(self, X):
        x, y, z = X
        return x * self.half_q2 + y * self.half_cross + z * self.half_p2


_ops_lock = threading.Lock()
_ops_cache: "OrderedDict[tuple, GridOperators]" = OrderedDict()


def grid_operators(grid, hbar):
    key = (grid.q_min, grid.q_max, grid.n_points, float(hbar))
    with _ops_lock:
        ops = _ops_cache.get(key)
        if ops is not None:
            _ops_cache.move_to_end(key)
            return ops
    ops = GridOperators(grid, hbar)
    with _ops_lock:
        _ops_cache[key] = ops
        while len(_ops_cache) > 8:
            _ops_cache.popitem(last=False)
    return ops


def grid_hamiltonian(X, hbar, grid):
    """H = (X q^2 + Y (qp + pq) + Z p^2) / 2 as a dense hermitian matrix."""
    X = np.asarray(X, dtype=float)
    check_oscillator_domain(X)
    return grid_operators(grid, hbar).oscillator(X)


@dataclass
class EigenstateSet:
    """Energies (ascending) and grid states for the requested levels at X."""

    X: np.ndarray
    hbar: float
    levels: tuple
    energies: np.ndarray
    states: np.ndarray
    backend: str

    def gram(self, grid):
        return grid.h * self.states.conj() @ self.states.T


class AnalyticOscillatorBackend:
    """Closed-form oscillator eigenfunctions sampled on a grid."""

    name = "analytic-oscillator"
    dim = 3

    def __init__(self, hbar, grid):
        self.hbar = float(hbar)
        self.grid = grid

    def validate(self, X):
        check_oscillator_domain(X)

    def hamiltonian(self, X):
        return grid_hamiltonian(X, self.hbar, self.grid)

    def eigenstates(self, X, levels):
        X = np.asarray(X, dtype=float)
        check_oscillator_domain(X)
        levels = tuple(int(n) for n in levels)
        w = oscillator_frequency(X)
        E = self.hbar * w * (np.array(levels) + 0.5)
        return EigenstateSet(X, self.hbar, levels, E,
                             _analytic_states(levels, X, self.hbar, self.grid), self.name)


class GridBackend:
    """Numerical diagonalization of a grid Hamiltonian.

    ``hamiltonian(X)`` defaults to the generalized oscillator. The phase of
    every eigenvector is fixed by making its largest-magnitude component
    real and positive.
    """

    name = "grid"

    def __init__(self, hbar, grid, hamiltonian: Optional[Callable] = None, dim=3,
                 validate: Optional[Callable] = None, cache_size=32):
        self.hbar = float(hbar)
        self.grid = grid
        self.dim = dim
        if hamiltonian is None:
            ops = grid_operators(grid, hbar)
            hamiltonian = ops.oscillator
            validate = validate or check_oscillator_domain
        self._hamiltonian = hamiltonian
        self._validate = validate
        self._cache: "OrderedDict[tuple, tuple]" = OrderedDict()
        self._lock = threading.Lock()
        self._cache_size = cache_size

    def validate(self, X):
        if self._validate is not None:
            self._validate(X)

    def hamiltonian(self, X):
        self.validate(X)
        return self._hamiltonian(np.asarray(X, dtype=float))

    def _solve(self, X):
        key = tuple(np.asarray(X, dtype=float).tolist())
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        E, V = np.linalg.eigh(self.hamiltonian(X))
        V = V.T / np.sqrt(self.grid.h)
        idx = np.argmax(np.abs(V), axis=1)
        lead = V[np.arange(V.shape[0]), idx]
        V = V * (np.abs(lead) / lead)[:, None]
        with self._lock:
            self._cache[key] = (E, V)
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return E, V

    def eigenstates(self, X, levels):
        X = np.asarray(X, dtype=float)
        levels = tuple(int(n) for n in levels)
        E, V = self._solve(X)
        states = V[list(levels)]
        _check_edges(states, self.grid, "grid eigenstate")
        return EigenstateSet(X, self.hbar, levels, E[list(levels)], states, self.name)


# -- Berry curvature ----------------------------------------------------------

def _plaquette_step(X, delta):
    return delta * max(np.abs(X).max(), 1e-12)


def berry_curvature_plaquette(backend, n, X, delta=1e-2, plane=(0, 1)):
    """Component F_ij of the Berry curvature of level ``n`` from a centred plaquette.

    The square has edge ``delta * max|X_k|`` and is centred on X. Raises
    :class:`GapError` when the gap to a neighbouring level falls below
    ``10 * d * |grad E_n|``, with ``d`` the plaquette edge and the in-plane
    gradient estimated from the corners, and :class:`OverlapError` when
    neighbouring corner states have overlap magnitude below 0.1.
    """
    X = np.asarray(X, dtype=float)
    i, j = plane
    d = _plaquette_step(X, delta)
    ei = np.zeros_like(X)
    ej = np.zeros_like(X)
    ei[i] = ej[j] = 0.5 * d
    corners = [X - ei - ej, X + ei - ej, X + ei + ej, X - ei + ej]
    levels = [m for m in (n - 1, n, n + 1) if m >= 0]
    sets = [backend.eigenstates(c, levels) for c in corners]
    k = levels.index(n)

    En = np.array([s.energies[k] for s in sets])
    # in-plane energy gradient from the corner values
    grad = np.hypot(En[1] + En[2] - En[0] - En[3], En[2] + En[3] - En[0] - En[1]) / (2 * d)
    gap = min(abs(s.energies[k] - s.energies[m]) for s in sets for m in range(len(levels)) if m != k)
    if gap < 10 * d * grad:
        raise GapError(f"level {n} at {X}: gap {gap:.3e} is below 10 d |grad E| = "
                       f"{10 * d * grad:.3e}; the plaquette is unreliable here")

    # the loop phase is O(d^2), so accumulate in extended precision to keep
    # round-off well below the 1/d^2 amplification
    states = [np.asarray(s.states[k]).ravel().astype(np.clongdouble) for s in sets]
    h = backend.grid.h
    prod = np.clongdouble(1.0)
    for a in range(4):
        ov = np.dot(states[a].conj(), states[(a + 1) % 4])
        if abs(complex(h * ov)) < 0.1:
            raise OverlapError(f"plaquette overlap {abs(complex(h * ov)):.3f} < 0.1 at {X}; "
                               f"reduce delta")
        prod *= ov
    angle = np.arctan2(prod.imag, prod.real)
    return float(angle / np.longdouble(d) ** 2)


def berry_curvature(backend, n, X, delta=1e-2):
    """All components of the plaquette curvature as an antisymmetric matrix."""
    X = np.asarray(X, dtype=float)
    dim = X.shape[-1]
    F = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(i + 1, dim):
            F[i, j] = berry_curvature_plaquette(backend, n, X, delta, (i, j))
            F[j, i] = -F[i, j]
    return F


def berry_curvature_field(backend, n, delta=1e-2):
    dim = getattr(backend, "dim", 3)
    return TwoFormField(lambda X: berry_curvature(backend, n, X, delta), dim)


def berry_phase(backend, n, surface, delta=1e-2, order=24):
    """gamma_n = -(surface integral of the plaquette curvature) (raw, not wrapped)."""
    return -surface_integral(berry_curvature_field(backend, n, delta), surface, order)


# -- degenerate families ------------------------------------------------------

@dataclass
class DegenerateFamily:
    """N orthonormal states per parameter point, smooth in X.

    ``states(X)`` returns an array ``(N, n_components, n_points)`` (or
    ``(N, n_points)``) normalized in the grid inner product.
    """

    states: Callable[[np.ndarray], np.ndarray]
    grid: SpatialGrid
    size: int
    labels: tuple = field(default=())

    def gram(self, X):
        S = np.asarray(self.states(np.asarray(X, dtype=float)))
        S = S.reshape(S.shape[0], -1)
        return self.grid.h * S.conj() @ S.T

    def check(self, X, tol=1e-9):
        defect = np.abs(self.gram(X) - np.eye(self.size)).max()
        if defect > tol:
            raise NumericalError(f"family not orthonormal at {X}: Gram defect {defect:.2e}")

    def regauge(self, U):
        """New family |n~_a> = sum_b U(X)_ab |n_b> for a unitary field U."""
        base = self.states

        def states(X):
            S = np.asarray(base(X))
            return np.tensordot(np.asarray(U(X)), S, axes=(1, 0))

        return DegenerateFamily(states, self.grid, self.size, self.labels)


def oscillator_family(levels: Sequence[int], hbar, grid, frame: Optional[Callable] = None):
    """Family |n_a; X> (x) frame(X)[:, a].

    With ``frame=None`` the internal factor is dropped (one component); with
    a frame, ``frame(X)`` must return an ``(N, N)`` unitary whose columns are
    the internal states. Members are treated as one degenerate multiplet
    (the internal energies are assumed to compensate the orbital ones).
    """
    levels = tuple(int(n) for n in levels)
    size = len(levels)

    def states(X):
        X = np.asarray(X, dtype=float)
        orb = _analytic_states(levels, X, hbar, grid)
        if frame is None:
            return orb[:, None, :]
        V = np.asarray(frame(X))
        return V.T[:, :, None] * orb[:, None, :]

    return DegenerateFamily(states, grid, size, levels)


def _polar_unitary(M, what):
    U, s, Vh = np.linalg.svd(M)
    if s.min() < 0.1:
        raise OverlapError(f"{what}: smallest singular value {s.min():.3f} < 0.1; "
                           f"refine the circuit sampling")
    return U @ Vh


def wz_connection_loop(family, circuit, samples=None):
    """Non-abelian holonomy of ``family`` around ``circuit``.

    Ordered product of polar-unitarized overlap matrices
    ``M_ab = <a; X_k | b; X_{k+1}>``; the returned matrix ``W`` maps initial
    expansion coefficients to final ones, so for a single level it equals
    ``exp(i gamma)``.
    """
    pts = circuit.points(samples)
    first = np.asarray(family.states(pts[0]))
    first = first.reshape(family.size, -1)
    h = family.grid.h
    prod = np.eye(family.size, dtype=complex)
    cur = first
    for k in range(len(pts)):
        nxt = first if k == len(pts) - 1 else np.asarray(family.states(pts[k + 1])).reshape(family.size, -1)
        M = h * cur.conj() @ nxt.T
        prod = prod @ _polar_unitary(M, f"overlap at circuit sample {k}")
        cur = nxt
    return prod.conj().T
