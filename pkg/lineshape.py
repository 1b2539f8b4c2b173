"""
Model-free extraction of EIT metrics from absorption curves.

The absorption curve is the clipped imaginary part of a susceptibility
spectrum. Widths are read from half-level crossings around the transparency
dip, the flanking reference being the mean of the two adjacent absorption
maxima rather than the global maximum.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from csvio import read_csv, write_rows
from errors import (
    EmptyWindow,
    FitDiverged,
    GridMismatch,
    GridTooCoarse,
    Indeterminate,
    InvalidParams,
    NoDip,
    NotResolved,
    SchemaError,
)
from integrator import DetuningGrid, SusceptibilitySpectrum
from settings import get_config, get_logger
from susceptibility import RateParams, Regime, classify_regime

logger = get_logger(__name__)

METRICS_COLUMNS = (
    "omega",
    "sigma_opt",
    "sigma_spin",
    "width",
    "vis_contrast",
    "vis_residual",
    "dip_pos",
    "peak_sep",
    "regime",
)
PEAK_COLUMNS = ("peak_lo", "peak_hi", "center_bump")
EXTENDED_METRICS_COLUMNS = METRICS_COLUMNS + PEAK_COLUMNS


@dataclass(frozen=True)
class AbsorptionCurve:
    grid: DetuningGrid
    alpha: np.ndarray = field(repr=False)
    clipped: int = 0

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.shape != (self.grid.count,):
            raise InvalidParams(f"curve has {alpha.size} values for {self.grid.count} grid points")
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0):
            raise InvalidParams("absorption values must be finite and >= 0")
        alpha.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)

    @property
    def delta(self) -> np.ndarray:
        return self.grid.values()


class DipResult(NamedTuple):
    width: float
    position: float
    index: int
    alpha_min: float
    alpha_ref: float
    left_crossing: float
    right_crossing: float
    left_flank: int
    right_flank: int
    relative_depth: float


class PeakResult(NamedTuple):
    positions: tuple[float, ...]
    separation: float | None


class DipFit(NamedTuple):
    width: float
    depth: float
    center: float
    background: float
    residual: float


class CenterBump(NamedTuple):
    found: bool
    position: float | None
    height: float


@dataclass(frozen=True)
class EitMetrics:
    """Metrics of one spectrum; None marks a quantity that could not be extracted."""

    width: float | None = None
    visibility_contrast: float | None = None
    visibility_residual: float | None = None
    dip_position: float | None = None
    peak_positions: tuple[float, ...] = ()
    regime: Regime | None = None
    center_bump: bool | None = None
    omega: float | None = None
    sigma_opt: float | None = None
    sigma_spin: float | None = None
    recorded_separation: float | None = None

    def __post_init__(self):
        if self.width is not None and not self.width > 0:
            raise InvalidParams(f"resolved width must be > 0, got {self.width}")
        for name in ("visibility_contrast", "visibility_residual"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise InvalidParams(f"{name} must lie in [0, 1], got {value}")
        if len(self.peak_positions) > 2:
            raise InvalidParams("at most two peak positions are reported")

    @property
    def peak_separation(self) -> float | None:
        """Distance between the two peaks; falls back to the separation read from a metrics CSV."""
        if len(self.peak_positions) != 2:
            return self.recorded_separation
        return self.peak_positions[1] - self.peak_positions[0]


def absorption_curve(s: SusceptibilitySpectrum) -> AbsorptionCurve:
    """alpha = max(imag chi, 0) pointwise; the number of clipped points is kept on the curve."""
    imag = s.values.imag
    clipped = int(np.count_nonzero(imag < 0))
    if clipped:
        logger.warning(f"Clipped {clipped} negative absorption value(s), minimum {imag.min():.3e}")
    return AbsorptionCurve(grid=s.grid, alpha=np.maximum(imag, 0.0), clipped=clipped)


def _relative_prominence(alpha: np.ndarray) -> float:
    return get_config("analysis.peak_prominence", 1e-3) * float(alpha.max())


def _flank_peaks(alpha: np.ndarray) -> np.ndarray:
    top = float(alpha.max())
    if top <= 0:
        return np.empty(0, dtype=int)
    peaks, props = find_peaks(alpha, prominence=_relative_prominence(alpha))
    if peaks.size == 0:
        return peaks
    prominences = props["prominences"]
    keep = prominences >= get_config("analysis.flank_fraction", 0.5) * prominences.max()
    return peaks[keep]


def locate_dip(c: AbsorptionCurve) -> tuple[int, int, int]:
    """
    Index of the transparency dip and of its left and right flanks.

    The dip is the lowest interior local minimum. Each flank is the nearest
    dominant local maximum on that side, or the highest point on that side
    when the curve has no maximum there (a dip on a flat background).
    """
    alpha = c.alpha
    if float(alpha.max()) <= 0:
        raise NoDip("absorption curve is identically zero")
    minima, _ = find_peaks(-alpha, prominence=_relative_prominence(alpha))
    if minima.size == 0:
        raise NoDip("absorption curve has no interior local minimum")
    dip = int(minima[np.argmin(alpha[minima])])

    peaks = _flank_peaks(alpha)
    left = peaks[peaks < dip]
    right = peaks[peaks > dip]
    left_flank = int(left[-1]) if left.size else int(np.argmax(alpha[:dip]))
    right_flank = int(right[0]) if right.size else dip + 1 + int(np.argmax(alpha[dip + 1 :]))
    if alpha[left_flank] <= alpha[dip] or alpha[right_flank] <= alpha[dip]:
        raise NoDip("minimum is not bracketed by higher absorption on both sides")
    return dip, left_flank, right_flank


def _crossing(x: np.ndarray, y: np.ndarray, i: int, level: float) -> float:
    """Linear interpolation of `level` between samples i and i + 1."""
    if y[i + 1] == y[i]:
        return float(x[i])
    return float(x[i] + (level - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i]))


def extract_fwhm_dip(c: AbsorptionCurve) -> DipResult:
    """
    Full width of the transparency dip at half depth, without fitting a shape.

    Half level is the midpoint between the dip minimum and the mean of the two
    flanking maxima. Crossings are searched from each flank inward.

    Raises:
        NoDip: monotone, flat or single-peaked curve
        NotResolved: dip depth below analysis.depth_threshold of the flank level
    """
    x, alpha = c.delta, c.alpha
    dip, left_flank, right_flank = locate_dip(c)
    alpha_min = float(alpha[dip])
    alpha_ref = 0.5 * float(alpha[left_flank] + alpha[right_flank])
    depth = (alpha_ref - alpha_min) / alpha_ref
    threshold = get_config("analysis.depth_threshold", 0.05)
    if depth < threshold:
        raise NotResolved(f"dip depth {depth:.3%} is below the {threshold:.0%} resolution threshold")

    half = 0.5 * (alpha_ref + alpha_min)
    below = np.nonzero(alpha[left_flank : dip + 1] < half)[0]
    i = left_flank + int(below[0])
    left = float(x[left_flank]) if i == left_flank else _crossing(x, alpha, i - 1, half)
    below = np.nonzero(alpha[dip : right_flank + 1] < half)[0]
    j = dip + int(below[-1])
    right = float(x[right_flank]) if j == right_flank else _crossing(x, alpha, j, half)
    if i == left_flank or j == right_flank:
        logger.warning("A flanking maximum lies below the half level; crossing pinned to the flank")

    return DipResult(
        width=right - left,
        position=float(x[dip]),
        index=dip,
        alpha_min=alpha_min,
        alpha_ref=alpha_ref,
        left_crossing=left,
        right_crossing=right,
        left_flank=left_flank,
        right_flank=right_flank,
        relative_depth=depth,
    )


def extract_visibility_contrast(c: AbsorptionCurve, window: tuple[float, float] | None = None) -> float:
    """(max - min) / (max + min) of the absorption inside `window` (whole curve by default)."""
    x, alpha = c.delta, c.alpha
    if window is not None:
        lo, hi = window
        alpha = alpha[(x >= lo) & (x <= hi)]
        if alpha.size == 0:
            raise EmptyWindow(f"no grid points inside window [{lo:g}, {hi:g}]")
    top, bottom = float(alpha.max()), float(alpha.min())
    if top + bottom == 0:
        return 0.0
    return (top - bottom) / (top + bottom)


def _refine_peak(x: np.ndarray, y: np.ndarray, i: int) -> float:
    """Vertex of the parabola through the peak sample and its neighbours."""
    if i == 0 or i == len(y) - 1:
        return float(x[i])
    curvature = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if curvature >= 0:
        return float(x[i])
    offset = 0.5 * (y[i - 1] - y[i + 1]) / curvature
    return float(x[i] + offset * (x[i + 1] - x[i]))


def find_absorption_peaks(c: AbsorptionCurve) -> PeakResult:
    """Positions of the two highest interior absorption maxima (or fewer) and their separation."""
    x, alpha = c.delta, c.alpha
    if float(alpha.max()) <= 0:
        return PeakResult(positions=(), separation=None)
    peaks, _ = find_peaks(alpha, prominence=_relative_prominence(alpha))
    if peaks.size > 2:
        peaks = np.sort(peaks[np.argsort(alpha[peaks])[-2:]])
    positions = tuple(_refine_peak(x, alpha, int(i)) for i in peaks)
    separation = positions[1] - positions[0] if len(positions) == 2 else None
    return PeakResult(positions=positions, separation=separation)


def dispersion_slope(s: SusceptibilitySpectrum) -> float:
    """
    Central-difference slope of Re chi at the transparency dip.

    Raises:
        GridTooCoarse: fewer than analysis.min_points_in_width grid steps span the dip width
    """
    dip = extract_fwhm_dip(absorption_curve(s))
    step = s.grid.step
    needed = get_config("analysis.min_points_in_width", 5)
    if dip.width / step < needed:
        raise GridTooCoarse(
            f"dip width {dip.width:.4g} spans {dip.width / step:.1f} grid steps, need {needed}"
        )
    real = s.values.real
    i = dip.index
    return float((real[i + 1] - real[i - 1]) / (2.0 * step))


def _lorentzian_dip(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    background, depth, center, width = params
    quarter = 0.25 * width * width
    return background - depth * quarter / ((x - center) ** 2 + quarter)


def fit_lorentzian_dip(c: AbsorptionCurve) -> DipFit:
    """
    Least-squares fit of background - depth * (w^2/4) / ((delta - c)^2 + w^2/4).

    The fit runs over the dip and as far again beyond each flank, starting
    from the model-free dip metrics. The residual is the RMS misfit relative
    to the flank level; above analysis.fit_residual_threshold the model is
    rejected with FitDiverged.
    """
    try:
        dip = extract_fwhm_dip(c)
    except NoDip as e:
        raise NotResolved(f"no dip to fit: {e}") from e
    x, alpha = c.delta, c.alpha
    lo = dip.position - 2.0 * (dip.position - x[dip.left_flank])
    hi = dip.position + 2.0 * (x[dip.right_flank] - dip.position)
    inside = (x >= lo) & (x <= hi)
    xs, ys = x[inside], alpha[inside]

    scale = dip.alpha_ref
    start = np.array([dip.alpha_ref, dip.alpha_ref - dip.alpha_min, dip.position, dip.width])
    result = least_squares(
        lambda params: (_lorentzian_dip(params, xs) - ys) / scale,
        start,
        x_scale="jac",
        ftol=1e-14,
        xtol=1e-14,
        gtol=1e-14,
        max_nfev=2000,
    )
    if not result.success or not np.all(np.isfinite(result.x)):
        raise FitDiverged(f"Lorentzian dip fit failed: {result.message}")

    background, depth, center, width = result.x
    width = abs(width)
    residual = float(np.sqrt(np.mean(result.fun**2)))
    threshold = get_config("analysis.fit_residual_threshold", 0.05)
    if width == 0 or residual > threshold:
        raise FitDiverged(f"Lorentzian dip model rejected: relative residual {residual:.3g} > {threshold}")
    return DipFit(width=width, depth=depth, center=center, background=background, residual=residual)


def detect_center_bump(c: AbsorptionCurve, window: tuple[float, float] | None = None) -> CenterBump:
    """
    Small absorption maximum near zero detuning inside the transparency window.

    Background atoms outside a burned trench add narrow Raman lines at the
    two-photon resonance; they show up as a local maximum inside the dip.
    The window defaults to the half-depth crossings of the dip.
    """
    x, alpha = c.delta, c.alpha
    if window is None:
        dip = extract_fwhm_dip(c)
        window = (dip.left_crossing, dip.right_crossing)
    lo, hi = window
    inside = np.nonzero((x > lo) & (x < hi))[0]
    if inside.size < 3:
        raise EmptyWindow(f"fewer than 3 grid points inside window [{lo:g}, {hi:g}]")

    segment = alpha[inside]
    peaks, props = find_peaks(segment, prominence=_relative_prominence(alpha))
    if peaks.size == 0:
        return CenterBump(found=False, position=None, height=0.0)
    positions = x[inside[peaks]]
    k = int(np.argmin(np.abs(positions)))
    if abs(positions[k]) > 0.25 * (hi - lo):
        return CenterBump(found=False, position=None, height=0.0)
    return CenterBump(found=True, position=float(positions[k]), height=float(props["prominences"][k]))


def _check_same_grid(a: DetuningGrid, b: DetuningGrid) -> None:
    if a.count != b.count or not np.isclose(a.start, b.start) or not np.isclose(a.stop, b.stop):
        raise GridMismatch(f"grids differ: {a} vs {b}")


def residual_visibility(coupled: AbsorptionCurve, uncoupled: AbsorptionCurve) -> float:
    """
    1 - alpha_coupled(dip) / alpha_uncoupled(line center), clipped to [0, 1].

    The line center is the maximum of the uncoupled curve. When the coupled
    curve has no dip the line center is used for both.
    """
    _check_same_grid(coupled.grid, uncoupled.grid)
    center = int(np.argmax(uncoupled.alpha))
    reference = float(uncoupled.alpha[center])
    if reference <= 0:
        raise Indeterminate("uncoupled absorption is zero everywhere")
    try:
        index, _, _ = locate_dip(coupled)
    except NoDip:
        index = center
    value = 1.0 - float(coupled.alpha[index]) / reference
    clipped = min(max(value, 0.0), 1.0)
    if clipped != value:
        logger.warning(f"Residual visibility {value:.6g} clipped to {clipped:g}")
    return clipped


def analyze_spectrum(
    s: SusceptibilitySpectrum,
    baseline: SusceptibilitySpectrum | None = None,
    window: tuple[float, float] | None = None,
    params: RateParams | None = None,
) -> EitMetrics:
    """
    Every metric that can be extracted from `s`.

    An unresolved or missing dip leaves width, dip position and center bump
    empty; the remaining metrics are still reported. The residual visibility
    needs an uncoupled `baseline` spectrum on the same grid.
    """
    p = params or s.params
    curve = absorption_curve(s)

    width = dip_position = bump = None
    try:
        dip = extract_fwhm_dip(curve)
        width, dip_position = dip.width, dip.position
        bump = detect_center_bump(curve, (dip.left_crossing, dip.right_crossing)).found
    except (NoDip, NotResolved, EmptyWindow) as e:
        logger.info(f"Dip not extracted: {e}")

    if window is None:
        try:
            _, left, right = locate_dip(curve)
            window = (float(curve.delta[left]), float(curve.delta[right]))
        except NoDip:
            window = None
    contrast = extract_visibility_contrast(curve, window)

    residual = None
    if baseline is not None:
        residual = residual_visibility(curve, absorption_curve(baseline))

    regime = None
    if p is not None and p.sigma_opt > 0:
        regime = classify_regime(p)

    peaks = find_absorption_peaks(curve)
    if regime is Regime.AUTLER_TOWNES and width is not None:
        separation = peaks.separation
        if separation is None or separation <= width:
            logger.warning(
                f"Autler-Townes regime but peak separation {separation} does not exceed the dip width {width:.6g}"
            )

    return EitMetrics(
        width=width,
        visibility_contrast=contrast,
        visibility_residual=residual,
        dip_position=dip_position,
        peak_positions=peaks.positions,
        regime=regime,
        center_bump=bump,
        omega=p.omega if p else None,
        sigma_opt=p.sigma_opt if p else None,
        sigma_spin=p.sigma_spin if p else None,
    )


def loglog_slope(x: ArrayLike, y: ArrayLike) -> np.ndarray:
    """Local slope d ln y / d ln x at every sample."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise InvalidParams("log-log slope needs two equal-length arrays of at least 2 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidParams("log-log slope needs strictly positive values")
    return np.gradient(np.log(y), np.log(x))


def _optional(value) -> float | None:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return value


def metrics_row(m: EitMetrics, extended: bool = False) -> dict[str, object]:
    row: dict[str, object] = {
        "omega": m.omega,
        "sigma_opt": m.sigma_opt,
        "sigma_spin": m.sigma_spin,
        "width": m.width,
        "vis_contrast": m.visibility_contrast,
        "vis_residual": m.visibility_residual,
        "dip_pos": m.dip_position,
        "peak_sep": m.peak_separation,
        "regime": m.regime.value if m.regime else None,
    }
    if extended:
        peaks = m.peak_positions
        row["peak_lo"] = peaks[0] if peaks else None
        row["peak_hi"] = peaks[1] if len(peaks) == 2 else None
        row["center_bump"] = None if m.center_bump is None else int(m.center_bump)
    return row


def write_metrics_csv(path: str | Path, metrics: Sequence[EitMetrics], extended: bool | None = None) -> Path:
    """
    One row per metrics record. The peak positions and the center-bump flag are
    appended only when `extended` (default: output.extended_metrics) is set.
    """
    if extended is None:
        extended = bool(get_config("output.extended_metrics", False))
    columns = EXTENDED_METRICS_COLUMNS if extended else METRICS_COLUMNS
    return write_rows(path, [metrics_row(m, extended) for m in metrics], columns)


def read_metrics_csv(path: str | Path) -> list[EitMetrics]:
    try:
        frame = read_csv(path, EXTENDED_METRICS_COLUMNS)
    except SchemaError:
        frame = read_csv(path, METRICS_COLUMNS)
    frame = frame.astype(object).where(frame.notna(), None)
    metrics = []
    for row in frame.to_dict(orient="records"):
        peaks = tuple(float(row[k]) for k in ("peak_lo", "peak_hi") if _optional(row.get(k)) is not None)
        bump = _optional(row.get("center_bump"))
        metrics.append(
            EitMetrics(
                width=_optional(row["width"]),
                visibility_contrast=_optional(row["vis_contrast"]),
                visibility_residual=_optional(row["vis_residual"]),
                dip_position=_optional(row["dip_pos"]),
                peak_positions=peaks,
                regime=Regime(row["regime"]) if row["regime"] else None,
                center_bump=None if bump is None else bool(int(bump)),
                omega=_optional(row["omega"]),
                sigma_opt=_optional(row["sigma_opt"]),
                sigma_spin=_optional(row["sigma_spin"]),
                recorded_separation=_optional(row["peak_sep"]),
            )
        )
    return metrics
