"""
Beer-Lambert transmission of the probe and the visibility measures built on it.

Transmission at optical depth d is T = exp(-d * Im chi / baseline), the
baseline being the peak absorption without the coupling field, so that d is
the peak absorbance of the uncoupled line.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares

from csvio import read_csv, write_csv
from errors import (
    DegenerateBaseline,
    FeatureAbsent,
    FitDiverged,
    GridMismatch,
    InvalidDepth,
    InvalidParams,
    NoDip,
)
from integrator import DetuningGrid, QuadratureReport, SusceptibilitySpectrum, grid_from_deltas
from lineshape import AbsorptionCurve, absorption_curve, locate_dip, residual_visibility
from profiles import numeric_fwhm
from settings import get_config, get_logger
from susceptibility import RateParams

logger = get_logger(__name__)

TRACE_COLUMNS = ("delta", "transmission")

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class TransmissionTrace:
    grid: DetuningGrid
    transmission: np.ndarray = field(repr=False)
    optical_depth: float | None = None

    def __post_init__(self):
        t = np.array(self.transmission, dtype=float)
        if t.shape != (self.grid.count,):
            raise InvalidParams(f"trace has {t.size} values for {self.grid.count} grid points")
        if not np.all(np.isfinite(t)) or np.any(t <= 0) or np.any(t > 1):
            raise InvalidParams("transmission must lie in (0, 1]")
        if self.optical_depth is not None:
            _check_depth(self.optical_depth)
        t.flags.writeable = False
        object.__setattr__(self, "transmission", t)

    @property
    def delta(self) -> np.ndarray:
        return self.grid.values()


class SaturatedFit(NamedTuple):
    optical_depth: float
    width: float
    center: float
    residual: float


def _check_depth(d: float) -> None:
    if not isinstance(d, (int, float, np.floating)) or not math.isfinite(d) or d <= 0:
        raise InvalidDepth(f"optical depth must be a finite number > 0, got {d!r}")


def baseline_absorption(p: RateParams) -> float:
    """Peak absorption of the uncoupled Lorentzian line, 2 / (gamma31 + sigma_opt)."""
    total = p.gamma31 + p.sigma_opt
    if total <= 0:
        raise InvalidParams("baseline needs gamma31 + sigma_opt > 0")
    return 2.0 / total


def transmission_from_spectrum(
    s: SusceptibilitySpectrum, d: float, baseline: float | None = None
) -> TransmissionTrace:
    """
    Probe transmission at peak optical depth d.

    Args:
        s: susceptibility spectrum
        d: optical depth of the uncoupled line center
        baseline: absorption that maps to absorbance d; defaults to the
            Lorentzian closed form from the spectrum's parameters

    Returns:
        TransmissionTrace on the spectrum's grid
    """
    _check_depth(d)
    if baseline is None:
        if s.params is None:
            raise InvalidParams("spectrum carries no parameters; pass the baseline explicitly")
        baseline = baseline_absorption(s.params)
    if not baseline > 0:
        raise InvalidParams(f"baseline must be > 0, got {baseline}")
    alpha = absorption_curve(s).alpha
    t = np.maximum(np.exp(-d * alpha / baseline), _TINY)
    return TransmissionTrace(grid=s.grid, transmission=t, optical_depth=float(d))


def absorbance(trace: TransmissionTrace) -> np.ndarray:
    return -np.log(trace.transmission)


def _absorbance_curve(trace: TransmissionTrace) -> AbsorptionCurve:
    return AbsorptionCurve(grid=trace.grid, alpha=np.maximum(absorbance(trace), 0.0))


def visibility_residual(trace_with_coupling: TransmissionTrace, trace_without: TransmissionTrace) -> float:
    """
    1 - ln T_dip(with) / ln T_center(without), clipped to [0, 1].

    Raises:
        GridMismatch: traces differ in grid or optical depth
        DegenerateBaseline: the uncoupled trace is transparent at its line center
    """
    with_, without = trace_with_coupling, trace_without
    if (
        with_.optical_depth is not None
        and without.optical_depth is not None
        and not math.isclose(with_.optical_depth, without.optical_depth)
    ):
        raise GridMismatch(
            f"optical depths differ: {with_.optical_depth} vs {without.optical_depth}"
        )
    limit = 1.0 - get_config("transmission.degenerate_baseline", 1e-9)
    if float(without.transmission.min()) >= limit:
        raise DegenerateBaseline("uncoupled trace shows no absorption to reference against")
    return residual_visibility(_absorbance_curve(with_), _absorbance_curve(without))


def _saturated_model(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    d, width, center = params
    quarter = 0.25 * width * width
    return np.exp(-d * quarter / ((x - center) ** 2 + quarter))


def fit_saturated_absorption(trace: TransmissionTrace) -> SaturatedFit:
    """
    Fit T = exp(-d * L(delta)) with L a unit-peak Lorentzian.

    A saturated feature has a flat bottom whose depth says little about d;
    the wings still constrain it, so d is returned even then.

    Raises:
        FeatureAbsent: no absorption, or fewer than transmission.min_feature_points
            samples across the feature
        FitDiverged: the optimizer failed
    """
    x, t = trace.delta, trace.transmission
    loss = 1.0 - t
    if float(loss.max()) <= get_config("transmission.degenerate_baseline", 1e-9):
        raise FeatureAbsent("trace shows no absorption feature")
    across = int(np.count_nonzero(loss >= 0.5 * loss.max()))
    needed = get_config("transmission.min_feature_points", 10)
    if across < needed:
        raise FeatureAbsent(f"feature spans {across} point(s), need at least {needed}")

    a = absorbance(trace)
    center = float(x[int(np.argmax(a))])
    width = numeric_fwhm(x, a)
    if not math.isfinite(width) or width <= 0:
        width = 0.25 * (x[-1] - x[0])
    start = np.array([float(a.max()), width, center])
    result = least_squares(
        lambda params: _saturated_model(params, x) - t,
        start,
        bounds=([0.0, 0.0, -np.inf], [np.inf, np.inf, np.inf]),
        x_scale="jac",
        ftol=1e-14,
        xtol=1e-14,
        gtol=1e-14,
        max_nfev=5000,
    )
    if not result.success or not np.all(np.isfinite(result.x)) or result.x[1] <= 0:
        raise FitDiverged(f"saturated absorption fit failed: {result.message}")
    d, width, center = (float(v) for v in result.x)
    residual = float(np.sqrt(np.mean(result.fun**2)))
    logger.debug(f"Saturated fit: d={d:.6g}, width={width:.6g}, center={center:.6g}, rms={residual:.3g}")
    return SaturatedFit(optical_depth=d, width=width, center=center, residual=residual)


def visibility_from_fit(trace_with_coupling: TransmissionTrace, fit_without: SaturatedFit) -> float:
    """1 - absorbance at the coupled dip / fitted depth of the uncoupled feature, clipped to [0, 1]."""
    curve = _absorbance_curve(trace_with_coupling)
    try:
        index, _, _ = locate_dip(curve)
    except NoDip:
        index = int(np.argmin(np.abs(curve.delta - fit_without.center)))
    value = 1.0 - float(curve.alpha[index]) / fit_without.optical_depth
    clipped = min(max(value, 0.0), 1.0)
    if clipped != value:
        logger.warning(f"Fitted visibility {value:.6g} clipped to {clipped:g}")
    return clipped


def spectrum_from_trace(
    trace: TransmissionTrace, baseline: float = 1.0, params: RateParams | None = None
) -> SusceptibilitySpectrum:
    """
    Invert Beer-Lambert: Im chi = -ln T * baseline / d.

    The real part cannot be recovered from a transmission trace and is set to
    zero; the spectrum's report method is "trace" to mark this. A trace
    without optical depth is taken at d = 1.
    """
    d = trace.optical_depth or 1.0
    imag = absorbance(trace) * baseline / d
    return SusceptibilitySpectrum(
        grid=trace.grid,
        values=1j * imag,
        params=params,
        report=QuadratureReport(method="trace", rel_tol=0.0),
    )


def max_scan_rate(sigma_spin: float, optical_coherence_time: float) -> float:
    """Largest laser scan rate that stays adiabatic: sigma_spin / T_coh."""
    for name, value in (("sigma_spin", sigma_spin), ("optical_coherence_time", optical_coherence_time)):
        if not math.isfinite(value) or value <= 0:
            raise InvalidParams(f"{name} must be > 0, got {value}")
    return sigma_spin / optical_coherence_time


def write_trace_csv(trace: TransmissionTrace, path: str | Path) -> Path:
    return write_csv(path, {"delta": trace.delta, "transmission": trace.transmission})


def read_trace_csv(path: str | Path, optical_depth: float | None = None) -> TransmissionTrace:
    frame = read_csv(path, TRACE_COLUMNS)
    grid = grid_from_deltas(frame["delta"].to_numpy(dtype=float))
    return TransmissionTrace(
        grid=grid,
        transmission=frame["transmission"].to_numpy(dtype=float),
        optical_depth=optical_depth,
    )
