import numpy as np
import pytest

from errors import EmptyWindow, FitDiverged, GridMismatch, GridTooCoarse, InvalidParams, NoDip, NotResolved
from integrator import DetuningGrid, SusceptibilitySpectrum, closed_form_spectrum
from lineshape import (
    AbsorptionCurve,
    absorption_curve,
    analyze_spectrum,
    detect_center_bump,
    dispersion_slope,
    extract_fwhm_dip,
    extract_visibility_contrast,
    find_absorption_peaks,
    fit_lorentzian_dip,
    loglog_slope,
    read_metrics_csv,
    residual_visibility,
    write_metrics_csv,
)
from susceptibility import (
    RateParams,
    Regime,
    eit_visibility_closed,
    eit_width_asymptotic,
    eit_width_closed,
    expected_width,
)


def _odd(n: float) -> int:
    n = int(np.ceil(n))
    return n + 1 - n % 2


def _spectrum(p: RateParams, halfwidth: float, step: float) -> SusceptibilitySpectrum:
    return closed_form_spectrum(DetuningGrid.symmetric(halfwidth, _odd(2 * halfwidth / step + 1)), p)


def _uncoupled(p: RateParams) -> RateParams:
    return RateParams(omega=0.0, gamma21=1.0, gamma31=p.gamma31, sigma_opt=p.sigma_opt, sigma_spin=p.sigma_spin)


def test_absorption_curve_clips_negative_values():
    grid = DetuningGrid.symmetric(1.0, 3)
    s = SusceptibilitySpectrum(grid=grid, values=np.array([1j, -0.5j, 2j]))
    curve = absorption_curve(s)
    np.testing.assert_array_equal(curve.alpha, [1.0, 0.0, 2.0])
    assert curve.clipped == 1


@pytest.mark.parametrize("ratio", [0.03, 0.1, 0.3, 1.0, 3.0, 10.0])
def test_dip_width_matches_the_leading_term_without_spin_broadening(ratio):
    p = RateParams(omega=ratio, gamma21=0.0, gamma31=0.0, sigma_opt=1.0)
    w = expected_width(p)
    dip = extract_fwhm_dip(absorption_curve(_spectrum(p, 2.0 * max(p.omega, w), w / 400)))
    assert dip.width == pytest.approx(w, rel=1e-3)
    assert dip.position == pytest.approx(0.0, abs=1e-12)


def test_dip_width_with_spin_broadening_follows_the_closed_form():
    p = RateParams(omega=0.3, gamma21=0.0, gamma31=1e-4, sigma_opt=1.0, sigma_spin=1e-3)
    w = eit_width_closed(p)
    dip = extract_fwhm_dip(absorption_curve(_spectrum(p, 4 * p.omega, w / 100)))
    assert dip.width == pytest.approx(w, rel=1e-3)


def test_weak_coupling_width_floors_at_the_spin_width():
    p = RateParams(omega=0.01, gamma21=0.0, gamma31=1e-4, sigma_opt=1.0, sigma_spin=1e-3)
    w = eit_width_asymptotic(p, Regime.EIT)
    dip = extract_fwhm_dip(absorption_curve(_spectrum(p, 4 * p.omega, w / 50)))
    assert dip.width == pytest.approx(w, rel=0.05)
    assert 1.0 < dip.width / p.sigma_spin < 1.5


def test_monotone_and_flat_curves_have_no_dip():
    grid = DetuningGrid.symmetric(1.0, 21)
    with pytest.raises(NoDip):
        extract_fwhm_dip(AbsorptionCurve(grid=grid, alpha=np.linspace(0, 1, 21)))
    with pytest.raises(NoDip):
        extract_fwhm_dip(AbsorptionCurve(grid=grid, alpha=np.zeros(21)))


def test_shallow_dip_is_not_resolved():
    grid = DetuningGrid.symmetric(2.0, 401)
    x = grid.values()
    alpha = 1.0 - 0.01 * 0.01 / (x**2 + 0.01)
    with pytest.raises(NotResolved):
        extract_fwhm_dip(AbsorptionCurve(grid=grid, alpha=alpha))


def test_contrast_visibility():
    p = RateParams(omega=np.sqrt(2e-4), gamma21=0.0, gamma31=0.0, sigma_opt=1.0, sigma_spin=1e-4)
    curve = absorption_curve(closed_form_spectrum(DetuningGrid.symmetric(0.05, 2001), p))
    assert extract_visibility_contrast(curve) == pytest.approx(0.5, abs=2e-3)
    with pytest.raises(EmptyWindow):
        extract_visibility_contrast(curve, (1.0, 2.0))


def test_residual_visibility_matches_the_closed_form():
    p = RateParams(omega=0.3, gamma21=0.0, gamma31=0.0, sigma_opt=1.0, sigma_spin=0.01)
    grid = DetuningGrid.symmetric(1.0, 801)
    coupled = absorption_curve(closed_form_spectrum(grid, p))
    uncoupled = absorption_curve(closed_form_spectrum(grid, _uncoupled(p)))
    assert residual_visibility(coupled, uncoupled) == pytest.approx(eit_visibility_closed(p), rel=1e-9)
    with pytest.raises(GridMismatch):
        residual_visibility(coupled, absorption_curve(closed_form_spectrum(DetuningGrid.symmetric(1.0, 11), p)))


@pytest.mark.parametrize("omega", [2.0, 5.0, 20.0])
def test_autler_townes_peaks_are_split_by_omega(omega):
    p = RateParams(omega=omega, gamma21=0.0, gamma31=0.0, sigma_opt=1.0, sigma_spin=0.0)
    peaks = find_absorption_peaks(absorption_curve(_spectrum(p, 1.6 * omega, omega / 400)))
    assert len(peaks.positions) == 2
    assert peaks.separation == pytest.approx(p.omega, rel=0.01)


def test_dispersion_slope():
    p = RateParams(omega=0.3, gamma21=0.0, gamma31=0.0, sigma_opt=1.0)
    w = expected_width(p)
    s = _spectrum(p, 4 * p.omega, w / 100)
    assert dispersion_slope(s) == pytest.approx(4.0 / p.omega**2, rel=1e-3)
    with pytest.raises(GridTooCoarse):
        dispersion_slope(closed_form_spectrum(DetuningGrid.symmetric(1.2, 41), p))


def test_lorentzian_dip_fit_recovers_the_model():
    grid = DetuningGrid.symmetric(2.0, 401)
    x = grid.values()
    alpha = 1.0 - 0.8 * 0.01 / ((x - 0.1) ** 2 + 0.01)
    fit = fit_lorentzian_dip(AbsorptionCurve(grid=grid, alpha=alpha))
    assert fit.width == pytest.approx(0.2, rel=1e-6)
    assert fit.center == pytest.approx(0.1, abs=1e-8)
    assert fit.depth == pytest.approx(0.8, rel=1e-6)
    assert fit.residual < 1e-8


def _eit_curve(p: RateParams, halfwidth: float, step: float) -> AbsorptionCurve:
    return absorption_curve(_spectrum(p, halfwidth, step))


def test_dip_width_ignores_absorption_scale_and_detuning_offset():
    curve = _eit_curve(RateParams(omega=0.3, gamma21=0.0, gamma31=1e-3, sigma_opt=1.0, sigma_spin=0.01), 1.0, 1e-3)
    dip = extract_fwhm_dip(curve)

    scaled = extract_fwhm_dip(AbsorptionCurve(grid=curve.grid, alpha=7.5 * curve.alpha))
    assert scaled.width == pytest.approx(dip.width, rel=1e-12)

    g = curve.grid
    moved = DetuningGrid(g.start + 0.37, g.stop + 0.37, g.count)
    shifted = extract_fwhm_dip(AbsorptionCurve(grid=moved, alpha=curve.alpha))
    assert shifted.width == pytest.approx(dip.width, rel=1e-9)
    assert shifted.position == pytest.approx(dip.position + 0.37, abs=1e-12)


@pytest.mark.parametrize("omega, sigma_spin, rel", [(0.05, 0.0, 0.02), (0.1, 1e-3, 0.05)])
def test_lorentzian_dip_fit_agrees_with_the_direct_width(omega, sigma_spin, rel):
    p = RateParams(omega=omega, gamma21=0.0, gamma31=0.0, sigma_opt=1.0, sigma_spin=sigma_spin)
    w = expected_width(p) + sigma_spin
    curve = _eit_curve(p, 0.5, w / 100)
    fit = fit_lorentzian_dip(curve)
    assert fit.width == pytest.approx(extract_fwhm_dip(curve).width, rel=rel)
    assert fit.center == pytest.approx(0.0, abs=1e-3 * w)


def test_lorentzian_dip_fit_rejects_a_gap_between_gaussian_lines():
    grid = DetuningGrid.symmetric(2.0, 401)
    x = grid.values()
    alpha = np.exp(-((x - 0.5) ** 2) / 0.02) + np.exp(-((x + 0.5) ** 2) / 0.02)
    with pytest.raises(FitDiverged):
        fit_lorentzian_dip(AbsorptionCurve(grid=grid, alpha=alpha))


def test_dip_width_grows_with_coupling():
    widths = []
    for omega in (0.1, 0.3, 1.0, 3.0):
        p = RateParams(omega=omega, gamma21=0.0, gamma31=0.0, sigma_opt=1.0, sigma_spin=0.01)
        w = expected_width(p) + p.sigma_spin
        widths.append(extract_fwhm_dip(_eit_curve(p, 2.0 * max(omega, w), w / 200)).width)
    assert np.all(np.diff(widths) > 0)


def test_center_bump_inside_the_transparency_window():
    p = RateParams(omega=0.3, gamma21=0.0, gamma31=0.0, sigma_opt=1.0, sigma_spin=0.01)
    grid = DetuningGrid.symmetric(0.5, 2001)
    plain = absorption_curve(closed_form_spectrum(grid, p))
    assert not detect_center_bump(plain).found

    x = grid.values()
    bumped = AbsorptionCurve(grid=grid, alpha=plain.alpha + 0.05 * np.exp(-0.5 * (x / 0.003) ** 2))
    bump = detect_center_bump(bumped)
    assert bump.found
    assert bump.position == pytest.approx(0.0, abs=1e-9)


def test_analyze_spectrum_reports_every_metric():
    p = RateParams(omega=0.3, gamma21=0.0, gamma31=0.0, sigma_opt=1.0, sigma_spin=0.01)
    grid = DetuningGrid.symmetric(1.0, 2001)
    m = analyze_spectrum(closed_form_spectrum(grid, p), baseline=closed_form_spectrum(grid, _uncoupled(p)))
    assert m.width == pytest.approx(eit_width_closed(p), rel=0.01)
    assert m.visibility_residual == pytest.approx(eit_visibility_closed(p), rel=1e-9)
    assert m.regime is Regime.EIT
    assert m.center_bump is False
    assert m.peak_separation is not None and m.peak_separation > m.width


def test_analyze_spectrum_keeps_partial_metrics_without_a_dip():
    p = RateParams(omega=0.0, gamma21=1.0, gamma31=0.0, sigma_opt=1.0)
    m = analyze_spectrum(closed_form_spectrum(DetuningGrid.symmetric(2.0, 201), p))
    assert m.width is None
    assert m.dip_position is None
    assert m.visibility_contrast is not None


def test_metrics_csv_keeps_missing_values(tmp_path):
    p = RateParams(omega=0.3, gamma21=0.0, gamma31=0.0, sigma_opt=1.0, sigma_spin=0.01)
    grid = DetuningGrid.symmetric(1.0, 801)
    resolved = analyze_spectrum(closed_form_spectrum(grid, p))
    missing = analyze_spectrum(closed_form_spectrum(grid, _uncoupled(p)))
    back = read_metrics_csv(write_metrics_csv(tmp_path / "metrics.csv", [resolved, missing]))
    assert back[0].width == pytest.approx(resolved.width, rel=1e-8)
    assert back[0].regime is Regime.EIT
    assert back[1].width is None
    assert back[1].visibility_residual is None


def test_metrics_csv_header_and_extended_peak_columns(tmp_path):
    p = RateParams(omega=5.0, gamma21=0.0, gamma31=1e-3, sigma_opt=1.0, sigma_spin=0.01)
    m = analyze_spectrum(_spectrum(p, 6.0, 0.01))

    plain = write_metrics_csv(tmp_path / "metrics.csv", [m])
    header = plain.read_text(encoding="utf-8").splitlines()[0]
    assert header == "omega,sigma_opt,sigma_spin,width,vis_contrast,vis_residual,dip_pos,peak_sep,regime"
    (back,) = read_metrics_csv(plain)
    assert back.peak_positions == ()
    assert back.peak_separation == pytest.approx(m.peak_separation, rel=1e-8)

    extended = write_metrics_csv(tmp_path / "extended.csv", [m], extended=True)
    assert extended.read_text(encoding="utf-8").splitlines()[0].endswith(",peak_lo,peak_hi,center_bump")
    (back,) = read_metrics_csv(extended)
    assert back.peak_positions == pytest.approx(m.peak_positions, rel=1e-8)


def test_loglog_slope():
    x = np.geomspace(1e-3, 1e3, 25)
    np.testing.assert_allclose(loglog_slope(x, 3 * x**2), 2.0)
    with pytest.raises(InvalidParams):
        loglog_slope([1.0, 2.0], [1.0, -1.0])


def test_autler_townes_label_without_split_peaks_is_logged(caplog):
    grid = DetuningGrid.symmetric(3.0, 601)
    x = grid.values()
    s = SusceptibilitySpectrum(grid=grid, values=1j * (1.0 - 0.8 * 0.25 / (x**2 + 0.25)))
    strong = RateParams(omega=5.0, gamma21=0.0, gamma31=1e-3, sigma_opt=1.0)
    with caplog.at_level("WARNING", logger="lineshape"):
        metrics = analyze_spectrum(s, params=strong)
    assert metrics.regime is Regime.AUTLER_TOWNES
    assert metrics.width is not None
    assert "peak separation" in caplog.text


def test_split_autler_townes_peaks_are_not_logged(caplog):
    p = RateParams(omega=5.0, gamma21=0.0, gamma31=1e-3, sigma_opt=1.0, sigma_spin=0.01)
    with caplog.at_level("WARNING", logger="lineshape"):
        metrics = analyze_spectrum(_spectrum(p, 6.0, 0.01))
    assert metrics.peak_separation > metrics.width
    assert "peak separation" not in caplog.text


def _closed_width(p: RateParams, halfwidth: float, step: float) -> float:
    return extract_fwhm_dip(absorption_curve(_spectrum(p, halfwidth, step))).width


@pytest.mark.slow
def test_autler_townes_width_approaches_its_asymptote():
    p = RateParams(omega=100.0, gamma21=0.0, gamma31=1e-4, sigma_opt=1.0, sigma_spin=1e-3)
    w = eit_width_asymptotic(p, Regime.AUTLER_TOWNES)
    assert _closed_width(p, 2.0 * p.omega, w / 400) == pytest.approx(w, rel=0.05)


@pytest.mark.slow
def test_weak_coupling_width_grows_as_omega_squared():
    omegas = np.geomspace(0.06, 0.1, 5)
    widths = []
    for omega in omegas:
        p = RateParams(omega=omega, gamma21=0.0, gamma31=1e-6, sigma_opt=1.0, sigma_spin=1e-4)
        widths.append(_closed_width(p, 4.0 * omega, eit_width_closed(p) / 200))
    np.testing.assert_allclose(loglog_slope(omegas, widths), 2.0, atol=0.1)


@pytest.mark.slow
@pytest.mark.parametrize("sigma_spin", [1e-4, 1e-3, 1e-2])
def test_strong_coupling_width_grows_linearly(sigma_spin):
    omegas = np.geomspace(20.0, 40.0, 5)
    widths = []
    for omega in omegas:
        p = RateParams(omega=omega, gamma21=0.0, gamma31=1e-6, sigma_opt=1.0, sigma_spin=sigma_spin)
        w = expected_width(p)
        widths.append(_closed_width(p, 2.0 * omega, w / 200))
    np.testing.assert_allclose(loglog_slope(omegas, widths), 1.0, atol=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("sigma_spin", [1e-4, 1e-3, 1e-2])
def test_width_floor_at_low_visibility_abscissa(sigma_spin):
    # Omega^2 / (sigma_opt sigma_spin) = 0.1
    omega = np.sqrt(0.1 * sigma_spin)
    p = RateParams(omega=omega, gamma21=0.0, gamma31=1e-6, sigma_opt=1.0, sigma_spin=sigma_spin)
    assert _closed_width(p, 4.0 * omega, sigma_spin / 50) == pytest.approx(sigma_spin, rel=0.25)
