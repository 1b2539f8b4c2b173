import math

import numpy as np
import pytest
from scipy.special import voigt_profile

from errors import InvalidParams, QuadratureNotConverged
from integrator import (
    DetuningGrid,
    QuadratureConfig,
    TailMapping,
    closed_form_spectrum,
    integrate_susceptibility,
    read_spectrum_csv,
    write_spectrum_csv,
)
from profiles import FWHM_TO_SD, ProfileKind, discretize, make_profile, numeric_fwhm
from lineshape import absorption_curve, extract_fwhm_dip
from susceptibility import RateParams, expected_width


@pytest.fixture
def params() -> RateParams:
    return RateParams(omega=0.3, gamma21=0.0, gamma31=1e-3, sigma_opt=1.0, sigma_spin=0.01)


def _close(a: np.ndarray, b: np.ndarray, rel: float) -> None:
    np.testing.assert_allclose(a, b, rtol=0, atol=rel * np.abs(b).max())


def test_grid_validation():
    with pytest.raises(InvalidParams):
        DetuningGrid(0.0, 1.0, 2)
    with pytest.raises(InvalidParams):
        DetuningGrid(1.0, 0.0, 11)
    grid = DetuningGrid.symmetric(1.0, 5)
    np.testing.assert_allclose(grid.values(), [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert grid.refined().count == 9


@pytest.mark.parametrize("tail", [TailMapping.TANGENT, TailMapping.TRUNCATE])
def test_lorentzian_profiles_match_the_closed_form(params, tail):
    grid = DetuningGrid.symmetric(0.6, 41)
    optical = make_profile(ProfileKind.LORENTZIAN, params.sigma_opt)
    spin = make_profile(ProfileKind.LORENTZIAN, params.sigma_spin)
    q = QuadratureConfig(tail_mapping=tail, truncate_n=1e5, flag_fraction=1.0)
    numeric = integrate_susceptibility(grid, params, optical, spin, q)
    _close(numeric.values, closed_form_spectrum(grid, params).values, 1e-4)
    assert numeric.method == "collapsed"


@pytest.mark.parametrize("kind", [ProfileKind.GAUSSIAN, ProfileKind.FLAT_TOP])
def test_collapsed_spin_average_matches_nested_quadrature(params, kind):
    grid = DetuningGrid.symmetric(0.2, 21)
    optical = make_profile(ProfileKind.LORENTZIAN, 0.0)
    spin = make_profile(kind, 0.02)
    collapsed = integrate_susceptibility(
        grid, params, optical, spin, QuadratureConfig(collapse_spin=True, flag_fraction=1.0)
    )
    nested = integrate_susceptibility(
        grid, params, optical, spin, QuadratureConfig(collapse_spin=False, flag_fraction=1.0)
    )
    assert collapsed.method == "point"
    assert nested.method == "nested"
    _close(nested.values, collapsed.values, 1e-5)


def test_point_masses_reduce_to_the_homogeneous_kernel(params):
    grid = DetuningGrid.symmetric(0.5, 11)
    p = RateParams(omega=0.3, gamma21=0.01, gamma31=0.1)
    point = make_profile(ProfileKind.LORENTZIAN, 0.0)
    s = integrate_susceptibility(grid, p, point, point)
    _close(s.values, closed_form_spectrum(grid, p).values, 1e-12)


def test_gaussian_absorption_width_without_coupling():
    grid = DetuningGrid.symmetric(2.0, 401)
    p = RateParams(omega=0.0, gamma21=1.0, gamma31=1e-3, sigma_opt=1.0)
    optical = make_profile(ProfileKind.GAUSSIAN, 1.0)
    spin = make_profile(ProfileKind.LORENTZIAN, 0.0)
    s = integrate_susceptibility(grid, p, optical, spin)
    assert numeric_fwhm(s.delta, s.values.imag) == pytest.approx(1.0, rel=0.01)


def test_tabulated_profile_matches_its_analytic_source(params):
    grid = DetuningGrid.symmetric(0.5, 21)
    p = RateParams(omega=0.3, gamma21=0.0, gamma31=0.01, sigma_opt=1.0, sigma_spin=0.01)
    gaussian = make_profile(ProfileKind.GAUSSIAN, 1.0)
    table = discretize(gaussian, np.linspace(-5, 5, 2001))
    spin = make_profile(ProfileKind.LORENTZIAN, 0.01)
    q = QuadratureConfig(rel_tol=1e-4, flag_fraction=1.0)
    analytic = integrate_susceptibility(grid, p, gaussian, spin, q)
    tabulated = integrate_susceptibility(grid, p, table, spin, q)
    _close(tabulated.values, analytic.values, 1e-3)


def test_unconverged_points_raise_with_the_partial_spectrum(params):
    grid = DetuningGrid.symmetric(0.5, 5)
    table = discretize(make_profile(ProfileKind.GAUSSIAN, 1.0), np.linspace(-5, 5, 2001))
    spin = make_profile(ProfileKind.LORENTZIAN, 0.01)
    q = QuadratureConfig(rel_tol=1e-12, max_depth=5, flag_fraction=0.0)
    with pytest.raises(QuadratureNotConverged) as excinfo:
        integrate_susceptibility(grid, params, table, spin, q)
    assert excinfo.value.flagged
    assert excinfo.value.spectrum.grid == grid


def test_integration_needs_positive_decay_rates():
    grid = DetuningGrid.symmetric(1.0, 11)
    prof = make_profile(ProfileKind.LORENTZIAN, 1.0)
    point = make_profile(ProfileKind.LORENTZIAN, 0.0)
    with pytest.raises(InvalidParams):
        integrate_susceptibility(grid, RateParams(omega=1.0, gamma21=0.0, gamma31=0.0), prof, prof)
    with pytest.raises(InvalidParams):
        integrate_susceptibility(grid, RateParams(omega=1.0, gamma21=0.0, gamma31=1.0), prof, point)


def test_spectrum_csv_keeps_values(tmp_path, params):
    s = closed_form_spectrum(DetuningGrid.symmetric(1.0, 101), params)
    back = read_spectrum_csv(write_spectrum_csv(s, tmp_path / "spectrum.csv"))
    assert back.grid.count == s.grid.count
    _close(back.values, s.values, 1e-8)


@pytest.mark.parametrize("gamma31", [1e-4, 1e-5, 1e-6])
class TestNarrowOpticalLines:
    """gamma31 far below the optical width puts a pole of width gamma31 on the optical axis."""

    grid = DetuningGrid.symmetric(1.0, 101)

    def test_uncoupled_lorentzian_average_is_exact(self, gamma31):
        p = RateParams(omega=0.0, gamma21=0.0, gamma31=gamma31, sigma_opt=1.0)
        point = make_profile(ProfileKind.LORENTZIAN, 0.0)
        s = integrate_susceptibility(self.grid, p, make_profile(ProfileKind.LORENTZIAN, 1.0), point)
        expected = 2j / (gamma31 + 1.0 - 2j * self.grid.values())
        assert s.method == "analytic"
        assert s.report.flagged == ()
        _close(s.values, expected, 1e-12)

    def test_uncoupled_gaussian_absorption_is_a_voigt_line(self, gamma31):
        p = RateParams(omega=0.0, gamma21=0.0, gamma31=gamma31, sigma_opt=1.0, sigma_spin=0.01)
        spin = make_profile(ProfileKind.GAUSSIAN, 0.01)
        s = integrate_susceptibility(self.grid, p, make_profile(ProfileKind.GAUSSIAN, 1.0), spin)
        expected = math.pi * voigt_profile(self.grid.values(), FWHM_TO_SD, gamma31 / 2.0)
        _close(s.values.imag, expected, 1e-9)

    def test_uncoupled_flat_top_absorption(self, gamma31):
        p = RateParams(omega=0.0, gamma21=0.0, gamma31=gamma31, sigma_opt=1.0, sigma_spin=0.01)
        spin = make_profile(ProfileKind.FLAT_TOP, 0.01)
        s = integrate_susceptibility(self.grid, p, make_profile(ProfileKind.FLAT_TOP, 1.0), spin)
        x, g = self.grid.values(), gamma31 / 2.0
        expected = np.arctan((0.5 - x) / g) + np.arctan((0.5 + x) / g)
        _close(s.values.imag, expected, 1e-9)

    def test_coupled_quadrature_meets_its_tolerance(self, gamma31):
        p = RateParams(omega=0.1, gamma21=0.0, gamma31=gamma31, sigma_opt=1.0, sigma_spin=0.01)
        optical = make_profile(ProfileKind.LORENTZIAN, 1.0)
        spin = make_profile(ProfileKind.LORENTZIAN, 0.01)
        s = integrate_susceptibility(self.grid, p, optical, spin)
        assert s.method == "collapsed"
        _close(s.values, closed_form_spectrum(self.grid, p).values, 1e-5)


@pytest.mark.slow
def test_nested_spin_average_resolves_narrow_optical_lines():
    grid = DetuningGrid.symmetric(0.3, 15)
    p = RateParams(omega=0.1, gamma21=0.0, gamma31=1e-5, sigma_opt=1.0, sigma_spin=0.02)
    optical = make_profile(ProfileKind.LORENTZIAN, 1.0)
    spin = make_profile(ProfileKind.GAUSSIAN, 0.02)
    collapsed = integrate_susceptibility(grid, p, optical, spin, QuadratureConfig(collapse_spin=True))
    nested = integrate_susceptibility(grid, p, optical, spin, QuadratureConfig(collapse_spin=False, rel_tol=1e-7))
    _close(nested.values, collapsed.values, 1e-5)


class TestInvariants:
    p = RateParams(omega=0.3, gamma21=0.0, gamma31=1e-3, sigma_opt=1.0, sigma_spin=0.01)

    def _gaussian(self, grid: DetuningGrid, rel_tol: float = 1e-6):
        optical = make_profile(ProfileKind.GAUSSIAN, 1.0)
        spin = make_profile(ProfileKind.GAUSSIAN, 0.01)
        q = QuadratureConfig(rel_tol=rel_tol, flag_fraction=1.0)
        return integrate_susceptibility(grid, self.p, optical, spin, q)

    def test_centered_profiles_give_a_mirror_symmetric_passive_spectrum(self):
        s = self._gaussian(DetuningGrid.symmetric(0.6, 61))
        _close(s.values[::-1], -np.conj(s.values), 1e-7)
        assert np.all(s.values.imag >= -1e-7 * np.abs(s.values).max())

    def test_tighter_tolerance_changes_values_below_the_looser_one(self):
        grid = DetuningGrid.symmetric(0.6, 13)
        loose = self._gaussian(grid, rel_tol=1e-4)
        tight = self._gaussian(grid, rel_tol=1e-8)
        _close(loose.values, tight.values, 1e-4)

    def test_dip_width_converges_under_grid_refinement(self):
        grid = DetuningGrid.symmetric(0.6, 241)
        coarse = extract_fwhm_dip(absorption_curve(self._gaussian(grid))).width
        fine_grid = grid.refined()
        fine = extract_fwhm_dip(absorption_curve(self._gaussian(fine_grid))).width
        assert coarse == pytest.approx(fine, rel=0.01)


def _random_draws(seed: int, n: int) -> list[RateParams]:
    rng = np.random.default_rng(seed)
    return [
        RateParams(
            omega=10 ** rng.uniform(-2, 2),
            gamma21=rng.uniform(0.0, 1e-3),
            gamma31=10 ** rng.uniform(-4, -1),
            sigma_opt=1.0,
            sigma_spin=10 ** rng.uniform(-4, -1),
        )
        for _ in range(n)
    ]


def _draw_grid(p: RateParams, count: int) -> DetuningGrid:
    return DetuningGrid.symmetric(2.0 * max(p.omega, expected_width(p) + p.sigma_spin), count)


def _assert_pointwise(numeric: np.ndarray, exact: np.ndarray) -> None:
    # the dark-state minimum can sit far below the line; it is held to the line scale
    bound = 1e-3 * np.abs(exact) + 1e-7 * np.abs(exact).max()
    assert np.all(np.abs(numeric - exact) <= bound)


@pytest.mark.slow
def test_random_lorentzian_ensembles_match_the_closed_form():
    for p in _random_draws(11, 50):
        grid = _draw_grid(p, 9)
        optical = make_profile(ProfileKind.LORENTZIAN, p.sigma_opt)
        spin = make_profile(ProfileKind.LORENTZIAN, p.sigma_spin)
        s = integrate_susceptibility(grid, p, optical, spin, QuadratureConfig(flag_fraction=1.0))
        _assert_pointwise(s.values, closed_form_spectrum(grid, p).values)


@pytest.mark.slow
def test_random_lorentzian_ensembles_through_nested_quadrature():
    for p in _random_draws(12, 10):
        grid = _draw_grid(p, 3)
        optical = make_profile(ProfileKind.LORENTZIAN, p.sigma_opt)
        spin = make_profile(ProfileKind.LORENTZIAN, p.sigma_spin)
        s = integrate_susceptibility(grid, p, optical, spin, QuadratureConfig(collapse_spin=False, flag_fraction=1.0))
        assert s.method == "nested"
        _assert_pointwise(s.values, closed_form_spectrum(grid, p).values)


@pytest.mark.slow
@pytest.mark.parametrize("omega", [0.1, 1.0])
@pytest.mark.parametrize("kind", [ProfileKind.GAUSSIAN, ProfileKind.FLAT_TOP])
def test_optical_shape_drops_out_above_the_spin_floor(kind, omega):
    # omega^2 / (sigma_opt sigma_spin) >= 10: the dip is no longer visibility-limited
    p = RateParams(omega=omega, gamma21=0.0, gamma31=1e-4, sigma_opt=1.0, sigma_spin=1e-3)
    w = expected_width(p) + p.sigma_spin
    grid = DetuningGrid.symmetric(max(p.omega, w), 2 * int(40 * max(p.omega, w) / w) + 1)
    spin = make_profile(ProfileKind.LORENTZIAN, p.sigma_spin)
    shaped = integrate_susceptibility(grid, p, make_profile(kind, p.sigma_opt), spin)
    width = extract_fwhm_dip(absorption_curve(shaped)).width
    reference = extract_fwhm_dip(absorption_curve(closed_form_spectrum(grid, p))).width
    assert width == pytest.approx(reference, rel=0.1)
