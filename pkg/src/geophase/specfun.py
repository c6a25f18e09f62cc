"""Weighted Hermite functions, Laguerre polynomials and quadrature rules.

Everything here is pure and reentrant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "QuadratureRule",
    "hermite_function",
    "hermite_functions",
    "laguerre",
    "quadrature",
    "DEFAULT_ORDERS",
]

DEFAULT_ORDERS = {"legendre": 64, "laguerre": 64, "periodic": 256}

_PI_M14 = np.pi ** -0.25


def hermite_functions(n_max, xi):
    """All normalized Hermite functions chi_0..chi_{n_max} at `xi`.

    Returns an array of shape ``(n_max + 1,) + np.shape(xi)``. The recurrence
    runs on the weighted functions, so nothing overflows for large orders.
    """
    if n_max < 0:
        raise DomainError(f"Hermite order must be non-negative, got {n_max}")
    xi = np.asarray(xi, dtype=float)
    out = np.empty((n_max + 1,) + xi.shape)
    out[0] = _PI_M14 * np.exp(-0.5 * xi * xi)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for k in range(1, n_max):
        out[k + 1] = (np.sqrt(2.0 / (k + 1)) * xi * out[k]
                      - np.sqrt(k / (k + 1)) * out[k - 1])
    return out


def hermite_function(n, xi):
    """Normalized Hermite function chi_n(xi) = N_n exp(-xi^2/2) H_n(xi)."""
    if n < 0:
        raise DomainError(f"Hermite order must be non-negative, got {n}")
    return hermite_functions(n, xi)[n]


def laguerre(n, x):
    """Laguerre polynomial L_n(x) by the three-term recurrence."""
    if n < 0:
        raise DomainError(f"Laguerre order must be non-negative, got {n}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev
    cur = 1.0 - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
    return cur


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights approximating an integral.

    ``kind`` is one of ``"legendre"`` (finite interval), ``"laguerre"``
    (half-line, weight already folded into ``weights``) or ``"periodic"``
    (uniform trapezoid on a period).
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    domain: tuple

    def __post_init__(self):
        if len(self.nodes) != len(self.weights):
            raise ValueError("nodes and weights differ in length")
        if not np.all(self.weights > 0):
            raise ValueError("quadrature weights must be positive")

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values, axis=0):
        """Weighted sum of samples taken at ``nodes`` along ``axis``."""
        values = np.moveaxis(np.asarray(values), axis, -1)
        return values @ self.weights


_KIND_ALIASES = {
    "legendre": "legendre",
    "legendre-on-interval": "legendre",
    "laguerre": "laguerre",
    "laguerre-on-halfline": "laguerre",
    "periodic": "periodic",
    "trapezoid-periodic": "periodic",
}


def quadrature(kind, order=None, domain=None):
    """Build a quadrature rule.

    Parameters
    ----------
    kind : str
        ``"legendre"``, ``"laguerre"`` or ``"periodic"`` (long names
        such as ``"trapezoid-periodic"`` are accepted too).
    order : int, optional
        Number of nodes. Defaults to :data:`DEFAULT_ORDERS`.
    domain : tuple, optional
        ``(a, b)`` for legendre (default ``(-1, 1)``), ``(a, a + period)`` for
        periodic (default ``(0, 2*pi)``), and ``(origin, scale)`` for
        laguerre: the rule integrates ``f`` over ``[origin, inf)`` exactly
        when ``f(origin + scale*u) * exp(u)`` is a polynomial of degree
        ``< 2*order`` in ``u``. Pick ``scale`` equal to the integrand's decay
        length (default 1).
    """
    try:
        kind = _KIND_ALIASES[kind]
    except KeyError:
        raise ValueError(f"unsupported quadrature kind {kind!r}") from None
    if order is None:
        order = DEFAULT_ORDERS[kind]
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")

    if kind == "legendre":
        a, b = domain if domain is not None else (-1.0, 1.0)
        x, w = np.polynomial.legendre.leggauss(order)
        half = 0.5 * (b - a)
        return QuadratureRule(a + half * (x + 1.0), half * w, kind, (a, b))

    if kind == "periodic":
        a, b = domain if domain is not None else (0.0, 2.0 * np.pi)
        period = b - a
        nodes = a + period * np.arange(order) / order
        return QuadratureRule(nodes, np.full(order, period / order), kind, (a, b))

    origin, scale = domain if domain is not None else (0.0, 1.0)
    if scale <= 0:
        raise ValueError("laguerre scale must be positive")
    u, w = np.polynomial.laguerre.laggauss(order)
    folded = np.exp(np.log(w) + u)
    return QuadratureRule(origin + scale * u, scale * folded, kind, (origin, scale))
