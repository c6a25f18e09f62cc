"""Adiabatic geometric phases: classical Hannay angles, quantum Berry and
Wilczek-Zee phases, and their phase-space representation through radial
Wigner profiles."""

from .errors import (AdiabaticityError, AliasingError, DomainError, GapError, GeophaseError,
                     GridTooNarrowError, NumericalError, OverlapError)
from .geometry import (Circuit, Surface, TwoFormField, make_cap_circuit, make_cap_surface,
                       make_disc_circuit, make_disc_surface, surface_integral)
from .classical import (NumericalChart, OscillatorChart, classical_two_form, hannay_angle,
                        oscillator_chart, oscillator_two_form)
from .quantum import (AnalyticOscillatorBackend, GridBackend, SpatialGrid, berry_curvature,
                      berry_curvature_plaquette, berry_phase, oscillator_family, oscillator_grid,
                      wz_connection_loop)
from .wigner import (RadialWigner, mixed_radial_wigner, oscillator_radial_wigner, radial_reduce,
                     thermal_weights, wigner_transform)
from .phasespace import (PhaseReport, curvature_from_wigner, curvature_separable, mixed_curvature,
                         mixed_phase, semiclassical_check, wz_curvature_from_wigner)
from .dynamics import Schedule, evolve_classical, evolve_quantum, mixed_phase_numeric

__version__ = "0.1.0"
