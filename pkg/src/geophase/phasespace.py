"""Berry-type curvatures from classical two-forms weighted by radial Wigner
profiles, and the semiclassical Hannay/Berry correspondence.

hbar bookkeeping
----------------
The curvature is ``F = -(2 pi / hbar) * integral W(I) F^c(I; X) dI``. With
hbar = 1 this is the familiar ``-2 pi integral W F^c dI``; for general hbar
the extra 1/hbar is what makes the oscillator curvature hbar-independent,
as the Hilbert-space route requires, and what gives F = -F^c(I0)/hbar for
a profile concentrated on the torus I0. ``literal=True`` drops the 1/hbar.

Signs: the Berry phase is ``gamma = -(surface integral of F)``; the mixed
state phase is ``phi = +(surface integral of F_rho)``, so for a pure state
``phi = -gamma``. Both are reported as computed, never silently reconciled.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .classical import ActionAngleChart, classical_two_form, hannay_angle, oscillator_chart
from .errors import DomainError, NumericalError
from .geometry import TwoFormField, surface_integral
from .wigner import RadialWigner, concentrated_radial_wigner, oscillator_radial_wigner

__all__ = [
    "PhaseReport",
    "chart_two_form",
    "curvature_from_wigner",
    "curvature_separable",
    "wz_curvature_from_wigner",
    "mixed_curvature",
    "mixed_phase",
    "phase_space_curvature_field",
    "phase_space_berry_phase",
    "conjugate_two_form",
    "semiclassical_check",
    "wrap_phase",
    "TAIL_TOL",
]

TAIL_TOL = 1e-10

ProfileLike = Union[RadialWigner, Callable[[np.ndarray], RadialWigner]]


def wrap_phase(x):
    """Map an angle to (-pi, pi]."""
    return float(np.pi - np.mod(np.pi - x, 2 * np.pi))


def chart_two_form(chart: ActionAngleChart, theta_order=64, step=None):
    """F^c(I; X) from a chart as a function ``(I_array, X) -> (nI, d, d)``."""
    kwargs = {} if step is None else {"step": step}

    def Fc(I, X):
        return classical_two_form(chart, np.asarray(I, dtype=float), X, rule=theta_order, **kwargs)

    return Fc


def _as_Fc(Fc):
    if isinstance(Fc, ActionAngleChart):
        return chart_two_form(Fc)
    return Fc


def _check_support(profile):
    if profile.tail > TAIL_TOL:
        raise NumericalError(f"profile mass outside the quadrature support is ~{profile.tail:.1e} "
                             f"(> {TAIL_TOL:g}); extend the action range")


def _weighted_two_form(profile, Fc, X, hbar, literal):
    _check_support(profile)
    hbar = profile.hbar if hbar is None else float(hbar)
    if abs(hbar - profile.hbar) > 1e-12 * hbar:
        raise DomainError(f"profile built for hbar={profile.hbar}, asked for hbar={hbar}")
    X = np.asarray(X, dtype=float)
    integral = profile.integrate(lambda I: _as_Fc(Fc)(I, X))
    prefactor = -2 * np.pi if literal else -2 * np.pi / hbar
    return prefactor * integral


def _antisym(F):
    # F has shape (d, d, ...) with the two-form indices first
    return 0.5 * (F - np.swapaxes(F, 0, 1))


def curvature_from_wigner(profile: RadialWigner, Fc, X, hbar=None, literal=False):
    """Curvature -(2 pi / hbar) integral W(I) F^c(I; X) dI for a scalar profile.

    ``Fc`` is a chart or a function ``(I_array, X) -> (nI, d, d)``.
    """
    if profile.kind != "scalar":
        raise DomainError("curvature_from_wigner needs a scalar profile")
    return _antisym(_weighted_two_form(profile, Fc, X, hbar, literal))


def curvature_separable(profiles: Sequence[RadialWigner], Fcs: Sequence, X, hbar=None):
    """Curvature of a separable product of 1-DOF modes.

    The N-fold integral over the product profile factorizes into a sum over
    modes of the single-mode curvature times the normalizations of all other
    modes. Those normalizations are computed and must equal 1 to 1e-8.
    """
    if len(profiles) != len(Fcs) or not profiles:
        raise DomainError(f"got {len(profiles)} profiles for {len(Fcs)} mode two-forms")
    norms = np.array([float(p.normalization()) for p in profiles])
    if np.abs(norms - 1).max() > 1e-8:
        raise NumericalError(f"mode profiles are not normalized: {norms}")
    total = 0.0
    for k, (prof, Fc) in enumerate(zip(profiles, Fcs)):
        others = np.prod(np.delete(norms, k))
        total = total + others * curvature_from_wigner(prof, Fc, X, hbar)
    return total


def wz_curvature_from_wigner(profile: RadialWigner, Fc, X, hbar=None, herm_tol=1e-8):
    """Matrix-valued curvature from a hermitian N x N radial profile.

    Returns shape ``(d, d, N, N)``; each component is hermitian.
    """
    if profile.kind != "hermitian":
        raise DomainError("wz_curvature_from_wigner needs a hermitian matrix profile")
    herm = np.abs(profile.coeffs - np.conj(np.swapaxes(profile.coeffs, -1, -2))).max()
    if herm > herm_tol:
        raise NumericalError(f"matrix profile hermiticity defect {herm:.2e} > {herm_tol:g}")
    raw = _weighted_two_form(profile, Fc, X, hbar, literal=False)  # (N, N, d, d)
    F = np.moveaxis(raw, (0, 1), (2, 3))
    return _antisym(F)


def conjugate_two_form(F, U):
    """Pointwise U F U^dagger on every component of a matrix-valued two-form."""
    return np.einsum("ab,ijbc,dc->ijad", U, F, np.conj(U))


def mixed_curvature(profile: RadialWigner, Fc, X, hbar=None):
    """F_rho for a (mixed) radial profile; identical in form to the pure case."""
    return curvature_from_wigner(profile, Fc, X, hbar)


def phase_space_curvature_field(profile: ProfileLike, Fc, hbar=None, dim=3, literal=False):
    """The phase-space curvature as a :class:`TwoFormField`.

    ``profile`` may depend on X (pass a callable returning a profile).
    """
    def at(X):
        prof = profile(X) if callable(profile) and not isinstance(profile, RadialWigner) else profile
        return curvature_from_wigner(prof, Fc, X, hbar, literal)

    return TwoFormField(at, dim)


def phase_space_berry_phase(profile: ProfileLike, Fc, surface, hbar=None, order=24, dim=3):
    """gamma = -(surface integral of the phase-space curvature)."""
    return -surface_integral(phase_space_curvature_field(profile, Fc, hbar, dim), surface, order)


def mixed_phase(profile: RadialWigner, Fc, surface, hbar=None, order=24, dim=3):
    """phi = +(surface integral of F_rho), with the sign as displayed for mixed states."""
    return surface_integral(phase_space_curvature_field(profile, Fc, hbar, dim), surface, order)


def semiclassical_check(surface, n, hbar, mu=0.5, chart=None, Fc=None, order=24, dI=1e-4,
                        profile_order=64):
    """Three estimates of the Hannay angle at I = hbar (n + mu).

    * ``hannay``: -d/dI of the surface integral of F^c (classical route);
    * ``level_difference``: -(gamma_{n+1} - gamma_n) with gamma from the
      Wigner-weighted curvature of consecutive levels;
    * ``action_derivative``: -hbar d(gamma)/dI where gamma(I) uses a profile
      concentrated on the torus I.
    """
    chart = oscillator_chart() if chart is None else chart
    Fc = chart_two_form(chart) if Fc is None else Fc
    I = hbar * (n + mu)
    if surface_is_degenerate(surface):
        zeros = {"hannay": 0.0, "level_difference": 0.0, "action_derivative": 0.0}
        return {**zeros, "I": I, "max_pairwise_difference": 0.0}

    hannay = hannay_angle(chart, I, surface, dI=dI, order=order)
    gamma = [phase_space_berry_phase(oscillator_radial_wigner(m, hbar, profile_order), Fc,
                                     surface, hbar, order) for m in (n, n + 1)]
    level_difference = -(gamma[1] - gamma[0])

    def gamma_at(action):
        return phase_space_berry_phase(concentrated_radial_wigner(action, hbar), Fc, surface,
                                       hbar, order)

    action_derivative = -hbar * (gamma_at(I + dI) - gamma_at(I - dI)) / (2 * dI)
    vals = np.array([hannay, level_difference, action_derivative])
    return {
        "I": I,
        "hannay": float(hannay),
        "level_difference": float(level_difference),
        "action_derivative": float(action_derivative),
        "gamma_n": float(gamma[0]),
        "gamma_n_plus_1": float(gamma[1]),
        "max_pairwise_difference": float(np.ptp(vals)),
    }


def surface_is_degenerate(surface, samples=9, atol=1e-14):
    """True if the surface map is constant (zero area)."""
    s = np.linspace(0, 1, samples)
    U, V = np.meshgrid(s, s)
    pts = surface.map(U.ravel(), V.ravel())
    return bool(np.ptp(pts, axis=0).max() <= atol)


@dataclass
class PhaseReport:
    """Geometric phases of one circuit/surface obtained along several routes."""

    circuit: str
    surface: str
    level: int
    hbar: float
    gamma_q: float
    gamma_ps: float
    hannay: float
    dynamical_phase: float
    wz_holonomy: Optional[list] = None
    mixed_phase: Optional[float] = None
    mixed_phase_dynamics: Optional[dict] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("gamma_q", "gamma_ps", "hannay", "dynamical_phase"):
            if not np.isfinite(getattr(self, name)):
                raise NumericalError(f"non-finite {name} in phase report")

    def to_dict(self):
        d = asdict(self)
        for name in ("gamma_q", "gamma_ps", "hannay"):
            d[name] = {"raw": getattr(self, name), "mod_2pi": wrap_phase(getattr(self, name))}
        if self.mixed_phase is not None:
            d["mixed_phase"] = {"raw": self.mixed_phase, "mod_2pi": wrap_phase(self.mixed_phase)}
        return d
