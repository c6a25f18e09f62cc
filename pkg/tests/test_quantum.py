import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geophase.errors import DomainError, GapError, GridTooNarrowError, OverlapError
from geophase.geometry import (check_oscillator_domain, make_cap_circuit, make_cap_surface,
                               make_disc_surface, oscillator_frequency)
from geophase.quantum import (AnalyticOscillatorBackend, DegenerateFamily, EigenstateSet,
                              GridBackend, SpatialGrid, analytic_oscillator_state, berry_curvature,
                              berry_curvature_plaquette, berry_phase, grid_hamiltonian,
                              grid_operators, oscillator_family, oscillator_grid,
                              wz_connection_loop)

CAP1 = np.pi * (np.cosh(1.0) - 1.0)
SAMPLE_X = [(1.0, 0.0, 1.0), (2.0, 1.0, 1.0), (0.5, -0.2, 1.7), (1.5, 0.7, 0.9)]


def fb_oscillator(n, X):
    """(n + 1/2)/(4 w^3) (X, Y, Z) as (F_YZ, F_ZX, F_XY)."""
    return (n + 0.5) / (4 * oscillator_frequency(X) ** 3) * np.asarray(X, dtype=float)


def triples(F):
    return np.array([F[1, 2], F[2, 0], F[0, 1]])


@pytest.fixture(scope="module")
def cap_grid():
    S = make_cap_surface(1.0, 1.0)
    s = np.linspace(0, 1, 30)
    pts = S.map(*np.meshgrid(s, s)).reshape(-1, 3)
    return oscillator_grid(pts, 1.0, 3)


@pytest.fixture(scope="module")
def unit_grid():
    return oscillator_grid(np.array(SAMPLE_X), 1.0, 6)


# -- grids and states ---------------------------------------------------------------------

@pytest.mark.parametrize("n", [100, 127, 129, 192])
def test_grid_size_must_be_power_of_two(n):
    with pytest.raises(ValueError):
        SpatialGrid(-1.0, 1.0, n)


def test_centered_grid_contains_origin():
    g = SpatialGrid.centered(7.5, 256)
    assert g.q[128] == 0.0
    assert g.h == pytest.approx(15.0 / 256)


def test_ground_state_is_real_gaussian(unit_grid):
    psi = analytic_oscillator_state(0, (1.0, 0.0, 1.0), 1.0, unit_grid)
    q = unit_grid.q
    assert np.abs(psi - np.pi ** -0.25 * np.exp(-q * q / 2)).max() < 1e-14
    assert unit_grid.h * np.vdot(psi, psi).real == pytest.approx(1.0, abs=1e-10)


def test_first_excited_state_is_odd(unit_grid):
    psi = analytic_oscillator_state(1, (1.0, 0.0, 1.0), 1.0, unit_grid)
    assert abs(psi[np.argmin(np.abs(unit_grid.q))]) == 0.0


def test_chirped_ground_state_moments():
    X = (1.0, 1.0, 2.0)
    g = oscillator_grid(np.array([X]), 1.0, 2)
    psi = analytic_oscillator_state(0, X, 1.0, g)
    prob = g.h * np.abs(psi) ** 2
    assert prob.sum() == pytest.approx(1.0, abs=1e-10)
    # <q^2> = (n + 1/2) Z hbar / w = 1
    assert np.dot(prob, g.q ** 2) == pytest.approx(1.0, abs=1e-8)


def test_narrow_grid_rejected():
    with pytest.raises(GridTooNarrowError, match="widen"):
        analytic_oscillator_state(4, (1.0, 0.0, 1.0), 1.0, SpatialGrid.centered(3.0, 128))


def test_invalid_parameters_rejected(unit_grid):
    with pytest.raises(DomainError):
        analytic_oscillator_state(0, (1.0, 2.0, 1.0), 1.0, unit_grid)
    with pytest.raises(DomainError):
        analytic_oscillator_state(-1, (1.0, 0.0, 1.0), 1.0, unit_grid)


@pytest.mark.parametrize("X", SAMPLE_X)
def test_analytic_states_orthonormal(unit_grid, X):
    S = AnalyticOscillatorBackend(1.0, unit_grid).eigenstates(X, range(6))
    assert np.abs(S.gram(unit_grid) - np.eye(6)).max() < 1e-9


@pytest.mark.parametrize("X", [(1.0, 0.0, 1.0), (2.0, 1.0, 1.0), (0.5, -0.2, 1.7)])
def test_grid_spectrum(X):
    g = oscillator_grid(np.array([X]), 1.0, 14)
    H = grid_hamiltonian(X, 1.0, g)
    assert np.abs(H - H.conj().T).max() < 1e-12
    E = np.linalg.eigvalsh(H)[:10]
    ref = oscillator_frequency(X) * (np.arange(10) + 0.5)
    assert np.abs(E / ref - 1).max() < 1e-6


def test_grid_spectrum_depends_only_on_frequency():
    g = oscillator_grid(np.array([(1.0, 0.0, 1.0), (2.0, 1.0, 1.0)]), 1.0, 12)
    a = np.linalg.eigvalsh(grid_hamiltonian((1.0, 0.0, 1.0), 1.0, g))[:8]
    b = np.linalg.eigvalsh(grid_hamiltonian((2.0, 1.0, 1.0), 1.0, g))[:8]
    assert np.abs(a - b).max() < 1e-6
    assert a[:3] == pytest.approx([0.5, 1.5, 2.5], abs=1e-8)


def test_grid_eigenstates_match_analytic(unit_grid):
    X = (2.0, 1.0, 1.0)
    G = GridBackend(1.0, unit_grid).eigenstates(X, [0, 1, 2])
    A = AnalyticOscillatorBackend(1.0, unit_grid).eigenstates(X, [0, 1, 2])
    overlaps = np.abs(unit_grid.h * np.einsum("ij,ij->i", G.states.conj(), A.states))
    assert overlaps == pytest.approx(np.ones(3), abs=1e-10)


def test_operator_cache_is_shared(unit_grid):
    assert grid_operators(unit_grid, 1.0) is grid_operators(unit_grid, 1.0)


# -- plaquette curvature --------------------------------------------------------------------

@pytest.fixture(scope="module", params=["analytic", "grid"])
def backend(request, unit_grid):
    if request.param == "analytic":
        return AnalyticOscillatorBackend(1.0, unit_grid)
    return GridBackend(1.0, unit_grid)


def test_plaquette_examples(backend):
    X = (1.0, 0.0, 1.0)
    assert berry_curvature_plaquette(backend, 0, X, 1e-2, (0, 1)) == pytest.approx(0.125, abs=1e-3)
    assert berry_curvature_plaquette(backend, 0, X, 1e-2, (2, 0)) == pytest.approx(0.0, abs=1e-3)
    assert berry_curvature_plaquette(backend, 3, X, 1e-2, (1, 2)) == pytest.approx(0.875, abs=1e-3)


@pytest.mark.parametrize("X", SAMPLE_X)
@pytest.mark.parametrize("n", [0, 1, 2])
def test_plaquette_matches_closed_form(backend, X, n):
    got = triples(berry_curvature(backend, n, X))
    assert np.abs(got - fb_oscillator(n, X)).max() < 2e-3


def test_gap_rule_refuses_coarse_plaquette(backend):
    # at X = (2, 1, 1) the energies of levels 3 and 4 change across the
    # default plaquette by about a tenth of the gap; a smaller step is accepted
    X = (2.0, 1.0, 1.0)
    for n in (3, 4):
        with pytest.raises(GapError):
            berry_curvature(backend, n, X)
        got = triples(berry_curvature(backend, n, X, delta=5e-3))
        assert np.abs(got - fb_oscillator(n, X)).max() < 2e-3


def test_plaquette_second_order_in_delta(unit_grid):
    B = AnalyticOscillatorBackend(1.0, unit_grid)
    X = (1.5, 0.7, 0.9)
    ref = fb_oscillator(1, X)
    e1 = np.abs(triples(berry_curvature(B, 1, X, 2e-2)) - ref).max()
    e2 = np.abs(triples(berry_curvature(B, 1, X, 1e-2)) - ref).max()
    assert 3.0 < e1 / e2 < 5.0


@pytest.mark.parametrize("hbar", [0.5, 1.0, 2.0])
def test_plaquette_independent_of_hbar(hbar):
    X = (2.0, 1.0, 1.0)
    g = oscillator_grid(np.array([X]), hbar, 4)
    F = triples(berry_curvature(GridBackend(hbar, g), 1, X))
    assert np.abs(F - fb_oscillator(1, X)).max() < 1e-3


class PhaseDressed:
    """Backend whose eigenvectors carry an extra smooth X-dependent phase."""

    def __init__(self, base, rng):
        self.base, self.grid, self.hbar = base, base.grid, base.hbar
        self.k = rng.normal(size=(4, 3))

    def eigenstates(self, X, levels):
        s = self.base.eigenstates(X, levels)
        chi = np.array([np.sin(self.k[m] @ X) * 3 + self.k[3] @ X for m in range(len(levels))])
        return EigenstateSet(s.X, s.hbar, s.levels, s.energies,
                             s.states * np.exp(1j * chi)[:, None], "dressed")


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_plaquette_gauge_invariant(unit_grid, seed):
    B = AnalyticOscillatorBackend(1.0, unit_grid)
    D = PhaseDressed(B, np.random.default_rng(seed))
    X = (1.5, 0.7, 0.9)
    for plane in [(0, 1), (1, 2), (0, 2)]:
        a = berry_curvature_plaquette(B, 1, X, 1e-2, plane)
        b = berry_curvature_plaquette(D, 1, X, 1e-2, plane)
        assert abs(a - b) < 1e-12


def test_gap_collapse_detected():
    g = SpatialGrid.centered(6.0, 128)
    ops = grid_operators(g, 1.0)

    def double_well(X):
        a, b = X
        return ops.half_p2 + np.diag(a * (g.q ** 2 - 4.0) ** 2 + b * g.q).astype(complex)

    B = GridBackend(1.0, g, double_well, dim=2)
    with pytest.raises(GapError, match="gap"):
        berry_curvature_plaquette(B, 0, (1.0, 0.0), 1e-2, (0, 1))


class Sliding:
    """Ground states displaced by 10 X_0: neighbouring corners barely overlap."""
    hbar, dim = 1.0, 3

    def __init__(self, grid):
        self.grid = grid

    def eigenstates(self, X, levels):
        q0 = 10 * X[0]
        psi = np.pi ** -0.25 * np.exp(-(self.grid.q - q0) ** 2 / 2)
        return EigenstateSet(np.asarray(X), 1.0, tuple(levels),
                             np.array([m + 0.5 for m in levels]),
                             np.array([psi] * len(levels)), "sliding")


def test_small_overlap_detected():
    B = Sliding(SpatialGrid.centered(40.0, 512))
    with pytest.raises(OverlapError, match="overlap"):
        berry_curvature_plaquette(B, 0, (1.0, 0.0, 1.0), 0.5, (0, 1))


# -- Berry phase -----------------------------------------------------------------------------

@pytest.mark.parametrize("n,tol", [(0, 1e-3), (1, 3e-3)])
def test_cap_berry_phase(cap_grid, n, tol):
    B = AnalyticOscillatorBackend(1.0, cap_grid)
    got = berry_phase(B, n, make_cap_surface(1.0, 1.0), order=16)
    assert got == pytest.approx(-(n + 0.5) * CAP1, abs=tol)


def test_cap_berry_phase_values():
    assert -0.5 * CAP1 == pytest.approx(-0.85307, abs=1e-5)
    assert -1.5 * CAP1 == pytest.approx(-2.55921, abs=1e-5)


@pytest.mark.parametrize("n", [0, 2])
def test_planar_surface_berry_phase_vanishes(n):
    disc = make_disc_surface([2.0, 0.0, 1.5], 0.6, (0, 2), validate=check_oscillator_domain)
    s = np.linspace(0, 1, 10)
    g = oscillator_grid(disc.map(*np.meshgrid(s, s)).reshape(-1, 3), 1.0, n + 1)
    assert abs(berry_phase(AnalyticOscillatorBackend(1.0, g), n, disc, order=8)) < 1e-6


# -- Wilczek-Zee holonomy ------------------------------------------------------------------

def test_holonomy_abelian_reduction(cap_grid):
    W = wz_connection_loop(oscillator_family([0], 1.0, cap_grid), make_cap_circuit(1.0, 1.0), 512)
    assert W.shape == (1, 1)
    assert abs(W[0, 0]) == pytest.approx(1.0, abs=1e-12)
    B = AnalyticOscillatorBackend(1.0, cap_grid)
    gamma = berry_phase(B, 0, make_cap_surface(1.0, 1.0), order=16)
    assert np.angle(W[0, 0] * np.exp(-1j * gamma)) == pytest.approx(0.0, abs=1e-3)


def test_holonomy_of_constant_family(unit_grid):
    S = AnalyticOscillatorBackend(1.0, unit_grid).eigenstates((1.0, 0.0, 1.0), [0, 1, 2]).states
    fam = DegenerateFamily(lambda X: S, unit_grid, 3)
    W = wz_connection_loop(fam, make_cap_circuit(1.0, 1.0), 64)
    assert np.abs(W - np.eye(3)).max() < 1e-12


def random_unitary(rng, n):
    Q, R = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def test_holonomy_conjugates_under_fixed_regauge(cap_grid):
    rng = np.random.default_rng(7)
    V = lambda X: random_unitary(np.random.default_rng(11), 2)  # noqa: E731
    fam = oscillator_family([0, 1], 1.0, cap_grid, frame=V)
    C = make_cap_circuit(1.0, 0.6)
    W = wz_connection_loop(fam, C, 256)
    U = random_unitary(rng, 2)
    W2 = wz_connection_loop(fam.regauge(lambda X: U), C, 256)
    # |n~_a> = sum_b U_ab |n_b> conjugates the holonomy by conj(U)
    assert np.abs(W2 - U.conj() @ W @ U.T).max() < 1e-12
    assert np.abs(W.conj().T @ W - np.eye(2)).max() < 1e-12


def test_holonomy_of_two_levels_is_diagonal_with_berry_phases(cap_grid):
    fam = oscillator_family([0, 1], 1.0, cap_grid)
    W = wz_connection_loop(fam, make_cap_circuit(1.0, 1.0), 512)
    assert abs(W[0, 1]) < 1e-6 and abs(W[1, 0]) < 1e-6
    assert np.angle(W[1, 1]) == pytest.approx(-1.5 * CAP1, abs=1e-3)


def test_family_orthonormality_check(unit_grid):
    fam = oscillator_family([0, 3], 1.0, unit_grid)
    fam.check((2.0, 1.0, 1.0))
    bad = DegenerateFamily(lambda X: np.ones((2, 1, unit_grid.n_points)), unit_grid, 2)
    with pytest.raises(Exception, match="orthonormal"):
        bad.check((1.0, 0.0, 1.0))


def test_plaquette_stokes_consistency():
    # small cap: loop phase vs minus the flux of the plaquette curvature, each
    # Richardson-extrapolated from two resolutions
    r = 0.2
    S, C = make_cap_surface(1.0, r), make_cap_circuit(1.0, r)
    s = np.linspace(0, 1, 12)
    g = oscillator_grid(S.map(*np.meshgrid(s, s)).reshape(-1, 3), 1.0, 2)
    fam = oscillator_family([1], 1.0, g)
    loop = [np.angle(wz_connection_loop(fam, C, m)[0, 0]) for m in (32, 64)]
    loop_x = (4 * loop[1] - loop[0]) / 3
    B = AnalyticOscillatorBackend(1.0, g)
    flux = [berry_phase(B, 1, S, delta=d, order=12) for d in (2e-2, 1e-2)]
    flux_x = (4 * flux[1] - flux[0]) / 3
    assert abs(loop_x - flux_x) <= 1e-4
