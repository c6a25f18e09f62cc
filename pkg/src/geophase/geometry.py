"""Parameter-space geometry: circuits, spanning surfaces, two-form fields.

Orientation convention
----------------------
A :class:`Surface` is a map of the unit square ``(u, v)`` into parameter
space and is oriented by ``du ^ dv``. Factory surfaces put their boundary
circuit on the edge ``u = 1`` traversed with increasing ``v``; the remaining
edges are either collapsed to a point (``u = 0``) or glued together
(``v = 0`` and ``v = 1``). With this convention Stokes' theorem holds with
the circuit in its natural direction, and ``gamma = -(surface integral of F)``
refers to that direction. Traversing the circuit backwards flips every sign.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .specfun import quadrature

__all__ = [
    "Circuit",
    "Surface",
    "TwoFormField",
    "oscillator_frequency",
    "check_oscillator_domain",
    "make_cap_circuit",
    "make_cap_surface",
    "make_disc_surface",
    "make_disc_circuit",
    "surface_integral",
    "PULLBACK_STEP",
]

PULLBACK_STEP = 1e-5
OSCILLATOR_LABELS = ("X", "Y", "Z")


def oscillator_frequency(X):
    """omega = sqrt(XZ - Y^2); NaN outside the oscillatory domain."""
    X = np.asarray(X, dtype=float)
    disc = X[..., 0] * X[..., 2] - X[..., 1] ** 2
    with np.errstate(invalid="ignore"):
        return np.sqrt(disc)


def check_oscillator_domain(X):
    """Raise :class:`DomainError` unless every point has XZ > Y^2 and Z > 0."""
    X = np.asarray(X, dtype=float)
    pts = X.reshape(-1, X.shape[-1])
    if pts.shape[-1] != 3:
        raise DomainError(f"oscillator parameters are (X, Y, Z), got dimension {pts.shape[-1]}")
    if not np.all(np.isfinite(pts)):
        raise DomainError("non-finite parameter point")
    disc = pts[:, 0] * pts[:, 2] - pts[:, 1] ** 2
    bad = np.flatnonzero((disc <= 0) | (pts[:, 2] <= 0))
    if bad.size:
        p = pts[bad[0]]
        raise DomainError(
            f"parameter point (X, Y, Z) = ({p[0]:g}, {p[1]:g}, {p[2]:g}) violates "
            f"XZ - Y^2 > 0 and Z > 0")


@dataclass
class Circuit:
    """Closed loop ``s in [0, 1] -> point``; ``path`` must accept arrays of s."""

    path: Callable[[np.ndarray], np.ndarray]
    samples: int = 256
    name: str = "circuit"

    def __post_init__(self):
        start, end = self.path(np.array([0.0, 1.0]))
        if not np.allclose(start, end, rtol=0, atol=1e-12):
            raise DomainError(f"circuit {self.name!r} is not closed: {start} != {end}")

    def points(self, samples=None, endpoint=False):
        """Sample the loop at uniformly spaced parameter values."""
        m = self.samples if samples is None else samples
        s = np.linspace(0.0, 1.0, m + 1 if endpoint else m, endpoint=endpoint)
        return self.path(s)

    def reversed(self):
        return Circuit(lambda s: self.path(1.0 - np.asarray(s)), self.samples,
                       self.name + "-reversed")


@dataclass
class Surface:
    """Map ``(u, v) in [0, 1]^2 -> point`` spanning ``boundary``.

    ``map`` must broadcast over array arguments and return shape
    ``broadcast(u, v).shape + (d,)``. ``validate`` (optional) raises
    :class:`DomainError` for points outside the admissible parameter domain.
    """

    map: Callable[[np.ndarray, np.ndarray], np.ndarray]
    boundary: Optional[Circuit] = None
    validate: Optional[Callable[[np.ndarray], None]] = None
    name: str = "surface"

    def check_boundary(self, samples=64, atol=1e-9):
        """Verify that the edge ``u = 1`` traces ``boundary`` (see module doc)."""
        if self.boundary is None:
            return
        s = np.linspace(0.0, 1.0, samples)
        edge = self.map(np.ones_like(s), s)
        loop = self.boundary.path(s)
        if not np.allclose(edge, loop, rtol=0, atol=atol):
            raise DomainError(f"surface {self.name!r} does not span its boundary circuit")

    def swapped(self):
        """Same image with ``u`` and ``v`` exchanged: the opposite orientation."""
        return Surface(lambda u, v: self.map(v, u), None, self.validate, self.name + "-swapped")

    def restrict(self, u0, u1, v0=0.0, v1=1.0):
        """Sub-surface over ``[u0, u1] x [v0, v1]`` reparameterized to the unit square."""
        return Surface(
            lambda u, v: self.map(u0 + (u1 - u0) * np.asarray(u), v0 + (v1 - v0) * np.asarray(v)),
            None, self.validate, f"{self.name}[{u0}:{u1},{v0}:{v1}]")

    def reparameterized(self, fu, fv):
        """Compose with monotone increasing maps of [0, 1] in each variable."""
        return Surface(lambda u, v: self.map(fu(np.asarray(u)), fv(np.asarray(v))),
                       self.boundary, self.validate, self.name + "-reparam")


@dataclass
class TwoFormField:
    """Two-form on parameter space.

    ``func(X)`` returns a ``(d, d)`` array (or ``(d, d, N, N)`` for the
    matrix-valued variant). Only the strict upper triangle ``i < j`` is read;
    the rest is filled in so that ``F[j, i] = -F[i, j]`` holds exactly.
    ``batch`` optionally evaluates many points at once (shape ``(m, d)`` in,
    ``(m, d, d, ...)`` out) and is preferred by :func:`surface_integral`.
    """

    func: Optional[Callable[[np.ndarray], np.ndarray]]
    dim: int
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    labels: tuple = field(default=())

    def __call__(self, X):
        return self.evaluate_many(np.asarray(X, dtype=float)[None])[0]

    def evaluate_many(self, points):
        points = np.asarray(points, dtype=float)
        if self.batch is not None:
            raw = np.asarray(self.batch(points))
        else:
            raw = np.stack([np.asarray(self.func(x)) for x in points])
        return _antisymmetrize(raw, self.dim)

    def components(self, X):
        """Upper-triangle components ``{(i, j): F_ij}``."""
        F = self(X)
        return {(i, j): F[i, j] for i in range(self.dim) for j in range(i + 1, self.dim)}


def _antisymmetrize(raw, d):
    out = np.zeros_like(raw)
    for i in range(d):
        for j in range(i + 1, d):
            out[:, i, j] = raw[:, i, j]
            out[:, j, i] = -raw[:, i, j]
    return out


def _cap_point(omega0, rho, phi):
    rho, phi = np.broadcast_arrays(np.asarray(rho, float), np.asarray(phi, float))
    ch, sh = np.cosh(rho), np.sinh(rho)
    return omega0 * np.stack([ch + sh * np.cos(phi), sh * np.sin(phi), ch - sh * np.cos(phi)],
                             axis=-1)


def make_cap_circuit(omega0, r, samples=256):
    """Constant-frequency loop X = w0(cosh r + sinh r cos phi), Y = w0 sinh r sin phi,
    Z = w0(cosh r - sinh r cos phi) with phi = 2 pi s; XZ - Y^2 = w0^2 throughout."""
    if omega0 <= 0 or r < 0:
        raise DomainError(f"cap circuit needs omega0 > 0 and r >= 0 (got {omega0}, {r})")
    return Circuit(lambda s: _cap_point(omega0, r, 2 * np.pi * np.asarray(s)), samples,
                   f"cap(omega0={omega0:g}, r={r:g})")


def make_cap_surface(omega0, r):
    """Spanning cap of :func:`make_cap_circuit`: rho = r u, phi = 2 pi v."""
    circuit = make_cap_circuit(omega0, r)
    return Surface(lambda u, v: _cap_point(omega0, r * np.asarray(u), 2 * np.pi * np.asarray(v)),
                   circuit, check_oscillator_domain, f"cap-surface(omega0={omega0:g}, r={r:g})")


def _disc_point(center, radius, plane, u, v):
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    center = np.asarray(center, dtype=float)
    out = np.broadcast_to(center, u.shape + center.shape).copy()
    i, j = plane
    out[..., i] += radius * u * np.cos(2 * np.pi * v)
    out[..., j] += radius * u * np.sin(2 * np.pi * v)
    return out


def make_disc_circuit(center, radius, plane, samples=256):
    """Circle of given radius around ``center`` in the coordinate plane ``(i, j)``."""
    return Circuit(lambda s: _disc_point(center, radius, plane, np.ones_like(np.asarray(s, float)), s),
                   samples, f"disc-circuit{tuple(center)}-r{radius:g}-{plane}")


def make_disc_surface(center, radius, plane, validate=None):
    """Flat disc spanning :func:`make_disc_circuit` (polar parameterization)."""
    circuit = make_disc_circuit(center, radius, plane)
    return Surface(lambda u, v: _disc_point(center, radius, plane, u, v), circuit, validate,
                   f"disc{tuple(center)}-r{radius:g}-{plane}")


def surface_integral(F, surface, order=32, step=PULLBACK_STEP):
    """Integrate the two-form ``F`` over ``surface``.

    The pullback uses central differences of the surface map with step
    ``step`` in ``(u, v)`` and a tensor-product Gauss-Legendre rule of the
    given order on the unit square. Parameter-domain validation happens at
    the quadrature nodes. Returns a float, or an ``(N, N)`` array for a
    matrix-valued field.
    """
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    rule = quadrature("legendre", order, (0.0, 1.0))
    U, V = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
    W = np.outer(rule.weights, rule.weights)
    u, v, w = U.ravel(), V.ravel(), W.ravel()

    pts = surface.map(u, v)
    if surface.validate is not None:
        surface.validate(pts)
    du = (surface.map(u + step, v) - surface.map(u - step, v)) / (2 * step)
    dv = (surface.map(u, v + step) - surface.map(u, v - step)) / (2 * step)
    jac = du[:, :, None] * dv[:, None, :] - dv[:, :, None] * du[:, None, :]

    vals = F.evaluate_many(pts)
    d = F.dim
    iu, ju = np.triu_indices(d, 1)
    # sum over nodes in fixed order, components i<j
    density = np.einsum("mk...,mk->m...", vals[:, iu, ju], jac[:, iu, ju])
    total = np.tensordot(w, density, axes=(0, 0))
    return float(total) if np.ndim(total) == 0 else total
